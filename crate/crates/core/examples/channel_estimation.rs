//! One drop with pilot reuse among D2D pairs: simulate the pilot phase many
//! times and compare the empirical variance of the MMSE estimates with the
//! closed-form `delta` coefficients.

use d2d_underlay::channel::{
    draw_fast_fading, estimation_coeffs, mmse_estimate, simulate_pilot_phase, PilotAssignment,
    PilotBook, PowerProfile,
};
use d2d_underlay::rng::{self, Purpose};
use d2d_underlay::scenario::{Scenario, SystemConfig};

const DRAWS: u64 = 2_000;

fn main() -> d2d_underlay::Result<()> {
    let cfg = SystemConfig {
        n_cu: 3,
        n_d2d: 6,
        pilot_len: 5,
        bs_antennas: 32,
        pzf_bs: (2, 2),
        pzf_d2d: (1, 1),
        rng_seed: 11,
        ..SystemConfig::default()
    };
    let scenario = Scenario::generate(&cfg)?;
    let ls = &scenario.large_scale;
    let pa = PilotAssignment::round_robin(&cfg);
    let pp = PowerProfile::full(&cfg);
    let coeffs = estimation_coeffs(ls, &pa, &pp, cfg.noise_power)?;
    let book = PilotBook::identity(cfg.pilot_len);
    println!("D2D pilot groups: {:?}", pa.groups());

    let mut var_c = vec![0.0; cfg.n_cu];
    let mut var_d = vec![0.0; cfg.n_d2d];
    for draw in 0..DRAWS {
        let real = draw_fast_fading(
            &cfg,
            &mut rng::stream(cfg.rng_seed, Purpose::FastFading, draw),
        );
        let mut noise = rng::stream(cfg.rng_seed, Purpose::Noise, draw);
        let y = simulate_pilot_phase(&real, ls, &pa, &pp, &cfg, &book, &mut noise);
        let est = mmse_estimate(&y, ls, &pa, &pp, &cfg, &book);
        for (n, v) in var_c.iter_mut().enumerate() {
            *v += est.h_c.column(n).norm_squared();
        }
        for (k, v) in var_d.iter_mut().enumerate() {
            *v += est.h_d.column(k).norm_squared();
        }
    }
    let scale = 1.0 / (DRAWS as f64 * cfg.bs_antennas as f64);
    println!("{:<8} {:>12} {:>12}", "link", "empirical", "delta");
    for n in 0..cfg.n_cu {
        println!(
            "{:<8} {:>12.5} {:>12.5}",
            format!("CU {n}"),
            var_c[n] * scale,
            coeffs.delta_c[n]
        );
    }
    for k in 0..cfg.n_d2d {
        println!(
            "{:<8} {:>12.5} {:>12.5}",
            format!("D2D {k}"),
            var_d[k] * scale,
            coeffs.delta_d[k]
        );
    }
    Ok(())
}
