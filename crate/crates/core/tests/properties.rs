//! Invariants checked on randomly drawn small instances.

use proptest::prelude::*;

use d2d_underlay::channel::{estimation_coeffs, PilotAssignment, PowerProfile};
use d2d_underlay::pilot_scheduling::{
    exhaustive_sum_mse, psa, ratio_terms, sum_mse_direct, sum_mse_of,
};
use d2d_underlay::power_control::{dpcc, dpcd, interference_budget, CellularFixedPoint};
use d2d_underlay::receivers::{pzf_filter, rate_coeffs, select_cancellation, RateCoeffs};
use d2d_underlay::scenario::{LargeScale, Scenario, SystemConfig};
use nalgebra::DVector;
use num_complex::Complex64;

/// N in 1..=4, K in 2..=6, tau anywhere in N+1..=N+K, full ZF at the BS.
fn config() -> impl Strategy<Value = SystemConfig> {
    (1usize..=4, 2usize..=6, any::<u64>(), 0.0f64..1.0).prop_map(|(n, k, seed, t)| {
        let tau = n + 1 + ((t * k as f64) as usize).min(k - 1);
        let mut cfg = SystemConfig {
            n_cu: n,
            n_d2d: k,
            pilot_len: tau,
            bs_antennas: 32,
            rng_seed: seed,
            ..SystemConfig::default()
        };
        cfg.pzf_bs = cfg.full_zf_bs();
        cfg.clamp_pzf_d2d();
        cfg
    })
}

fn gains(cfg: &SystemConfig) -> LargeScale {
    Scenario::generate(cfg).expect("valid config").large_scale
}

fn coeffs(cfg: &SystemConfig, pa: &PilotAssignment) -> RateCoeffs {
    let ls = gains(cfg);
    let pp = PowerProfile::full(cfg);
    let co = estimation_coeffs(&ls, pa, &pp, cfg.noise_power).unwrap();
    let sets = select_cancellation(&ls, pa, cfg).unwrap();
    rate_coeffs(&ls, pa, &co, &sets, &pp, cfg).unwrap()
}

fn fractions(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_json_round_trips(cfg in config()) {
        let s = Scenario::generate(&cfg).unwrap();
        prop_assert_eq!(Scenario::from_json(&s.to_json().unwrap()).unwrap(), s.clone());
        for (tx, rx) in s.topology.d2d_tx_pos.iter().zip(&s.topology.d2d_rx_pos) {
            let d = tx.distance(rx);
            prop_assert!(d >= cfg.min_dist - 1e-9 && d <= cfg.d2d_max_dist + 1e-9);
            prop_assert!((0.0..=cfg.cell_side).contains(&rx.x) && (0.0..=cfg.cell_side).contains(&rx.y));
        }
        let ls = &s.large_scale;
        prop_assert!(ls.u_c.iter().chain(&ls.u_d).all(|g| g.is_finite() && *g > 0.0));
    }

    #[test]
    fn estimate_and_error_variances_split_the_gain(cfg in config()) {
        let ls = gains(&cfg);
        let pa = psa(&ls, &cfg).unwrap();
        let co = estimation_coeffs(&ls, &pa, &PowerProfile::full(&cfg), cfg.noise_power).unwrap();
        for (d, e) in co.delta_c.iter().zip(&co.eps_c).chain(co.delta_d.iter().zip(&co.eps_d)) {
            prop_assert!(*d > 0.0 && *d < 1.0);
            prop_assert!((d + e - 1.0).abs() < 1e-15);
        }
        for k in 0..cfg.n_d2d {
            // pilot sharing only lowers the estimate quality below the alone value
            let alone = {
                let x = cfg.pilot_len as f64 * cfg.max_power_d2d * ls.v_d[k][k];
                x / (x + cfg.noise_power)
            };
            prop_assert!(co.mu_d[k][k] <= alone * (1.0 + 1e-12));
        }
    }

    #[test]
    fn psa_assigns_every_pair_once(cfg in config()) {
        let ls = gains(&cfg);
        let pa = psa(&ls, &cfg).unwrap();
        prop_assert_eq!(pa.n_d2d(), cfg.n_d2d);
        prop_assert!(pa.slots().iter().all(|&s| s < cfg.d2d_pilots()));
        let sizes: Vec<usize> = pa.groups().iter().map(Vec::len).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), cfg.n_d2d);
        // greedy placement never leaves a pilot empty while another is shared
        if cfg.n_d2d >= cfg.d2d_pilots() {
            prop_assert!(sizes.iter().all(|&s| s >= 1));
        } else {
            prop_assert!(sizes.iter().all(|&s| s <= 1));
        }
    }

    #[test]
    fn exhaustive_search_lower_bounds_psa(cfg in config()) {
        let ls = gains(&cfg);
        let pp = PowerProfile::full(&cfg);
        let es = exhaustive_sum_mse(&ls, &pp, &cfg).unwrap();
        let by_psa = psa(&ls, &cfg).unwrap();
        let es_value = sum_mse_of(&es, &ls, &pp, &cfg).unwrap();
        let psa_value = sum_mse_of(&by_psa, &ls, &pp, &cfg).unwrap();
        prop_assert!(es_value <= psa_value * (1.0 + 1e-12));
        prop_assert!((sum_mse_direct(&es, &ls, &pp.p_p, &cfg) - es_value).abs() <= 1e-9 * es_value.max(1.0));
    }

    #[test]
    fn moving_a_pair_to_an_empty_pilot_lowers_sum_mse(cfg in config(), pick in any::<prop::sample::Index>()) {
        prop_assume!(cfg.d2d_pilots() >= 2);
        let ls = gains(&cfg);
        let pp = PowerProfile::full(&cfg);
        // everybody on pilot 0 except the last pilot, which stays empty
        let crowded = PilotAssignment::new(cfg.n_cu, cfg.pilot_len, vec![0; cfg.n_d2d]).unwrap();
        let k = pick.index(cfg.n_d2d);
        let mut slots = vec![0; cfg.n_d2d];
        slots[k] = cfg.d2d_pilots() - 1;
        let moved = PilotAssignment::new(cfg.n_cu, cfg.pilot_len, slots).unwrap();
        prop_assert!(sum_mse_of(&moved, &ls, &pp, &cfg).unwrap() < sum_mse_of(&crowded, &ls, &pp, &cfg).unwrap());
    }

    #[test]
    fn ratio_terms_stay_below_one(cfg in config(), f in fractions(6)) {
        let ls = gains(&cfg);
        let pa = psa(&ls, &cfg).unwrap();
        let p: Vec<f64> = f[..cfg.n_d2d].iter().map(|x| x * cfg.pilot_len as f64 * cfg.max_power_d2d).collect();
        let (u, v) = ratio_terms(&p, &pa, &ls, cfg.noise_power);
        for (a, b) in u.iter().zip(&v) {
            prop_assert!(*a >= 0.0 && a < b);
        }
    }

    #[test]
    fn cellular_map_is_a_standard_function(
        cfg in config(),
        f in fractions(6),
        q in fractions(4),
        shrink in fractions(4),
        scale in 1.0001f64..10.0,
    ) {
        let ls = gains(&cfg);
        let pa = psa(&ls, &cfg).unwrap();
        let rc = coeffs(&cfg, &pa);
        let p: Vec<f64> = f[..cfg.n_d2d].iter().map(|x| x * cfg.max_power_d2d).collect();
        let fp = CellularFixedPoint::new(&rc, &p, &cfg).unwrap();
        let q: Vec<f64> = q[..cfg.n_cu].iter().map(|x| x * cfg.max_power_cu).collect();
        let lower: Vec<f64> = q.iter().zip(&shrink).map(|(a, s)| a * s).collect();
        let scaled: Vec<f64> = q.iter().map(|x| x * scale).collect();
        let at = fp.delta(&q);
        prop_assert!(at.iter().all(|&x| x > 0.0));
        prop_assert!(fp.delta(&lower).iter().zip(&at).all(|(a, b)| a <= b));
        prop_assert!(fp.delta(&scaled).iter().zip(&at).all(|(a, b)| *a < scale * b));
    }

    #[test]
    fn dpcc_respects_caps_and_targets(cfg in config(), f in fractions(6)) {
        let ls = gains(&cfg);
        let pa = psa(&ls, &cfg).unwrap();
        let rc = coeffs(&cfg, &pa);
        let p: Vec<f64> = f[..cfg.n_d2d].iter().map(|x| x * cfg.max_power_d2d).collect();
        let res = dpcc(&rc, &p, &cfg).unwrap();
        prop_assert!(res.q_s.iter().all(|&q| q >= 0.0 && q <= cfg.max_power_cu));
        if res.feasible {
            let sinr = rc.cell_sinr_lb(&res.q_s, &p);
            let slack = 10.0 * cfg.tol_power;
            prop_assert!(sinr.iter().all(|s| *s >= cfg.sinr_target * (1.0 - slack)));
        }
    }

    #[test]
    fn dpcd_fits_budget_and_beats_silence(cfg in config(), f in fractions(4)) {
        let ls = gains(&cfg);
        let pa = psa(&ls, &cfg).unwrap();
        let rc = coeffs(&cfg, &pa);
        let q: Vec<f64> = f[..cfg.n_cu].iter().map(|x| (0.1 + 0.9 * x) * cfg.max_power_cu).collect();
        let (_, zeta) = interference_budget(&rc, &q, &cfg);
        prop_assume!(zeta > 0.0);
        let res = dpcd(&rc, &q, &cfg).unwrap();
        let used: f64 = res.p_s.iter().zip(&rc.varphi_d).map(|(p, v)| p * v).sum();
        prop_assert!(used <= zeta * (1.0 + 1e-6));
        prop_assert!(res.p_s.iter().all(|&p| (0.0..=cfg.max_power_d2d * (1.0 + 1e-12)).contains(&p)));
        prop_assert!(res.trace.windows(2).all(|w| w[1].sum_rate >= w[0].sum_rate * (1.0 - 1e-9)));
        prop_assert!(rc.d2d_sum_log_rate(&q, &res.p_s) > 0.0);
    }

    #[test]
    fn pzf_filter_nulls_the_cancelled_span(
        re in prop::collection::vec(-1.0f64..1.0, 48),
        im in prop::collection::vec(-1.0f64..1.0, 48),
        cancel in 0usize..=4,
    ) {
        let col = |c: usize| DVector::from_iterator(8, (0..8).map(|r| Complex64::new(re[8 * c + r], im[8 * c + r])));
        let target = col(0);
        let cancelled: Vec<_> = (1..=cancel).map(col).collect();
        let beta = pzf_filter(&target, &cancelled).unwrap();
        prop_assert!((beta.norm() - 1.0).abs() < 1e-12);
        for v in &cancelled {
            prop_assert!(beta.dotc(v).norm() < 1e-10 * v.norm());
        }
        prop_assert!(beta.dotc(&target).re > 0.0);
    }
}
