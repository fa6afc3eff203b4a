//! Ergodic sum SE of one drop by Monte Carlo over fast fading against the
//! closed-form lower bounds, for MRC and fully ZF at the BS.

use d2d_underlay::channel::{
    draw_fast_fading, estimation_coeffs, mmse_estimate, simulate_pilot_phase, PilotBook,
    PowerProfile,
};
use d2d_underlay::pilot_scheduling::psa;
use d2d_underlay::receivers::{link_sinrs, rate_coeffs, rate_lower_bounds, select_cancellation};
use d2d_underlay::rng::{self, Purpose};
use d2d_underlay::scenario::{Scenario, SystemConfig};

const DRAWS: u64 = 300;

fn main() -> d2d_underlay::Result<()> {
    let base = SystemConfig {
        bs_antennas: 64,
        rng_seed: 5,
        ..SystemConfig::default()
    };
    let scenario = Scenario::generate(&base)?;
    let ls = &scenario.large_scale;
    let pa = psa(ls, &base)?;
    let pp = PowerProfile::full(&base);
    let coeffs = estimation_coeffs(ls, &pa, &pp, base.noise_power)?;
    let book = PilotBook::identity(base.pilot_len);

    println!(
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "BS filter", "cell MC", "cell LB", "D2D MC", "D2D LB"
    );
    for (name, pzf_bs) in [("MRC", (0, 0)), ("full ZF", base.full_zf_bs())] {
        let cfg = SystemConfig {
            pzf_bs,
            ..base.clone()
        };
        let sets = select_cancellation(ls, &pa, &cfg)?;
        let rc = rate_coeffs(ls, &pa, &coeffs, &sets, &pp, &cfg)?;
        let lb = rate_lower_bounds(&rc, &pp, &cfg);
        let (mut cell, mut d2d) = (0.0, 0.0);
        for draw in 0..DRAWS {
            let real = draw_fast_fading(
                &cfg,
                &mut rng::stream(cfg.rng_seed, Purpose::FastFading, draw),
            );
            let mut noise = rng::stream(cfg.rng_seed, Purpose::Noise, draw);
            let y = simulate_pilot_phase(&real, ls, &pa, &pp, &cfg, &book, &mut noise);
            let est = mmse_estimate(&y, ls, &pa, &pp, &cfg, &book);
            let (c, d) = link_sinrs(&est, &coeffs, ls, &pa, &pp, &sets, &cfg)?.rates(&cfg);
            cell += c.iter().sum::<f64>();
            d2d += d.iter().sum::<f64>();
        }
        let n = DRAWS as f64;
        println!(
            "{:<10} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            name,
            cell / n,
            lb.cell_sum(),
            d2d / n,
            lb.d2d_sum()
        );
    }
    Ok(())
}
