//! PSA against random and exhaustive scheduling on a small instance, then the
//! parametric pilot-power solver on the PSA schedule.

use d2d_underlay::channel::PowerProfile;
use d2d_underlay::pilot_scheduling::{
    exhaustive_sum_mse, pilot_power_parametric, psa, random_assignment, sum_mse_of,
};
use d2d_underlay::scenario::{Scenario, SystemConfig};
use d2d_underlay::Error;

fn main() -> d2d_underlay::Result<()> {
    let cfg = SystemConfig {
        n_cu: 2,
        n_d2d: 8,
        pilot_len: 5,
        pzf_bs: (1, 3),
        pzf_d2d: (1, 1),
        rng_seed: 21,
        ..SystemConfig::default()
    };
    let scenario = Scenario::generate(&cfg)?;
    let ls = &scenario.large_scale;
    let pp = PowerProfile::full(&cfg);

    let by_psa = psa(ls, &cfg)?;
    let by_es = exhaustive_sum_mse(ls, &pp, &cfg)?;
    println!("PSA slots {:?}", by_psa.slots());
    println!("ES  slots {:?}", by_es.slots());
    println!("sum MSE  PSA {:.5}", sum_mse_of(&by_psa, ls, &pp, &cfg)?);
    println!("sum MSE  ES  {:.5}", sum_mse_of(&by_es, ls, &pp, &cfg)?);
    for seed in 0..3 {
        let pa = random_assignment(&cfg, seed)?;
        println!(
            "sum MSE  RPS {:.5} (seed {seed})",
            sum_mse_of(&pa, ls, &pp, &cfg)?
        );
    }

    match pilot_power_parametric(&by_psa, ls, &cfg) {
        Ok(sol) => println!(
            "pilot powers after {} iterations: {} of {} pairs at full power",
            sol.iterations,
            sol.zero_power.iter().filter(|z| !**z).count(),
            cfg.n_d2d
        ),
        Err(Error::NotConverged { .. }) => {
            println!("pilot powers: no full/zero pattern is stationary; the optimum is interior")
        }
        Err(e) => return Err(e),
    }
    Ok(())
}
