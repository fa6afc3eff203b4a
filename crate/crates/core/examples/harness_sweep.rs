//! A small in-memory experiment: sum MSE of three schedulers against pilot
//! length, aggregated over trials and printed as CSV.

use d2d_underlay::harness::{run_experiment, to_csv, ExperimentSpec};

const SPEC: &str = r#"{
  "experiment": "fig3",
  "sweep": { "variable": "pilot_len", "values": [6, 7, 8, 10] },
  "trials": 40,
  "config": { "n_cu": 4, "n_d2d": 8, "rng_seed": 2 }
}"#;

fn main() -> d2d_underlay::Result<()> {
    let spec = ExperimentSpec::from_json(SPEC)?;
    let result = run_experiment(&spec)?;
    print!("{}", to_csv(&result.rows));
    println!("config hash {}", result.manifest.config_hash);
    Ok(())
}
