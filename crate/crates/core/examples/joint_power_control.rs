//! Schedule pilots with PSA, then alternate CU and D2D data power control on
//! one desk-scale drop and print the D2D sum-SE trace.

use d2d_underlay::channel::{estimation_coeffs, PowerProfile};
use d2d_underlay::pilot_scheduling::psa;
use d2d_underlay::power_control::jdpc;
use d2d_underlay::receivers::{rate_coeffs, rate_lower_bounds, select_cancellation};
use d2d_underlay::scenario::{Scenario, SystemConfig};

fn main() -> d2d_underlay::Result<()> {
    let cfg = SystemConfig {
        rng_seed: 3,
        ..SystemConfig::default()
    };
    let scenario = Scenario::generate(&cfg)?;
    let ls = &scenario.large_scale;
    let pa = psa(ls, &cfg)?;
    let mut pp = PowerProfile::full(&cfg);
    let coeffs = estimation_coeffs(ls, &pa, &pp, cfg.noise_power)?;
    let sets = select_cancellation(ls, &pa, &cfg)?;
    let rc = rate_coeffs(ls, &pa, &coeffs, &sets, &pp, &cfg)?;

    let full = rate_lower_bounds(&rc, &pp, &cfg);
    println!(
        "full power:  cell sum SE {:.3}, D2D sum SE {:.3}",
        full.cell_sum(),
        full.d2d_sum()
    );

    let result = jdpc(&rc, &cfg)?;
    pp.q_s = result.q_s.clone();
    pp.p_s = result.p_s.clone();
    let tuned = rate_lower_bounds(&rc, &pp, &cfg);
    println!("JDPC trace ({} outer iterations):", result.outer_iterations);
    for (i, se) in result.sum_se_trace.iter().enumerate() {
        println!("  {i}: {se:.4}");
    }
    let min_cell = tuned
        .cell_sinr
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    println!(
        "JDPC:        cell sum SE {:.3}, D2D sum SE {:.3}, min CU SINR {:.3} (target {:.3})",
        tuned.cell_sum(),
        tuned.d2d_sum(),
        min_cell,
        cfg.sinr_target
    );
    Ok(())
}
