//! Experiment driver: a JSON [`ExperimentSpec`] names a recipe, a sweep over
//! one config field and a trial count; [`run_experiment`] runs every
//! (sweep value, trial) pair and aggregates the per-trial metrics into
//! [`ResultRow`]s, written as CSV with a JSON manifest.
//!
//! Trial `t` draws everything from the seed `derive_seed(root, Trial, t)`, so
//! every sweep value sees the same drops (common random numbers) and results
//! do not depend on how trials are spread over worker threads.

pub mod oracles;
mod recipes;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose};
use crate::scenario::{SystemConfig, SWEEPABLE_FIELDS};

pub use recipes::{run_trial, TrialOutcome};

/// z-value of a two-sided 95% normal confidence interval.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig1,
    Fig2,
    Fig3,
    Fig45,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Custom,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 9] = [
        ExperimentId::Fig1,
        ExperimentId::Fig2,
        ExperimentId::Fig3,
        ExperimentId::Fig45,
        ExperimentId::Fig6,
        ExperimentId::Fig7,
        ExperimentId::Fig8,
        ExperimentId::Fig9,
        ExperimentId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig1 => "fig1",
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig45 => "fig45",
            ExperimentId::Fig6 => "fig6",
            ExperimentId::Fig7 => "fig7",
            ExperimentId::Fig8 => "fig8",
            ExperimentId::Fig9 => "fig9",
            ExperimentId::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::Fig1 => {
                "simulated vs lower-bound sum SE at full power (typically vs BS antennas)"
            }
            ExperimentId::Fig2 => {
                "simulated vs lower-bound sum SE at full power (typically vs pilot length)"
            }
            ExperimentId::Fig3 => {
                "sum MSE of PSA, random and exhaustive scheduling plus the orthogonal bound"
            }
            ExperimentId::Fig45 => "convergence traces of DPCD and of the JDPC outer loop",
            ExperimentId::Fig6 => "system sum SE under JDPC (typically vs D2D pair distance)",
            ExperimentId::Fig7 => {
                "D2D sum SE under JDPC, pilot reuse vs orthogonal training (vs K)"
            }
            ExperimentId::Fig8 => {
                "D2D sum SE under JDPC, pilot reuse vs orthogonal training (vs T)"
            }
            ExperimentId::Fig9 => {
                "D2D sum SE under JDPC for several D2D-Rx PZF choices (vs SINR target)"
            }
            ExperimentId::Custom => "every metric of the full pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: String,
    pub values: Vec<f64>,
}

/// How the BS spends its PZF degrees of freedom at each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsReceiver {
    /// Null every other CU and every D2D pilot group.
    #[default]
    FullZf,
    Mrc,
    /// Use `config.pzf_bs` as given.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    #[default]
    Psa,
    Random,
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecipeOptions {
    pub bs_receiver: BsReceiver,
    pub scheduler: Scheduler,
    /// Fast-fading draws averaged per trial by the simulated-rate metrics.
    pub fading_draws: usize,
    /// D2D-Rx `(m_c, m_d)` choices compared by `fig9`; empty means the config value.
    pub pzf_d2d_variants: Vec<(usize, usize)>,
}

impl Default for RecipeOptions {
    fn default() -> Self {
        RecipeOptions {
            bs_receiver: BsReceiver::FullZf,
            scheduler: Scheduler::Psa,
            fading_draws: 1,
            pzf_d2d_variants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub sweep: Sweep,
    pub trials: usize,
    #[serde(default)]
    pub config: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: RecipeOptions,
}

impl ExperimentSpec {
    /// Parses and validates a spec document.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::spec("<document>", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::spec("trials", "must be >= 1"));
        }
        if !SWEEPABLE_FIELDS
            .iter()
            .any(|(f, _)| *f == self.sweep.variable)
        {
            return Err(Error::spec(
                "sweep.variable",
                format!("unknown config field `{}`", self.sweep.variable),
            ));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::spec("sweep.values", "must not be empty"));
        }
        if self.options.fading_draws < 1 {
            return Err(Error::spec("options.fading_draws", "must be >= 1"));
        }
        for (i, &v) in self.sweep.values.iter().enumerate() {
            let cfg = self.point_config(v).map_err(|e| match e {
                Error::InvalidConfig { field, reason } => {
                    Error::spec(format!("sweep.values[{i}] -> config.{field}"), reason)
                }
                Error::InvalidSpec { field, reason } => {
                    Error::spec(format!("{field}[{i}]"), reason)
                }
                other => other,
            })?;
            for &(mc, md) in &self.options.pzf_d2d_variants {
                let c = SystemConfig {
                    pzf_d2d: (mc, md),
                    ..cfg.clone()
                };
                c.validate().map_err(|e| {
                    Error::spec(
                        format!("options.pzf_d2d_variants at sweep.values[{i}]"),
                        e.to_string(),
                    )
                })?;
            }
        }
        Ok(())
    }

    /// Config for one sweep value: the field is set, the BS receiver follows
    /// `options.bs_receiver`, and the D2D-Rx degrees of freedom are clamped
    /// into their feasible set for the resulting pilot length.
    pub fn point_config(&self, value: f64) -> Result<SystemConfig> {
        let mut cfg = self.config.clone();
        cfg.set_field(&self.sweep.variable, value)?;
        self.adjust(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn adjust(&self, cfg: &mut SystemConfig) {
        match self.options.bs_receiver {
            BsReceiver::FullZf => cfg.pzf_bs = cfg.full_zf_bs(),
            BsReceiver::Mrc => cfg.pzf_bs = (0, 0),
            BsReceiver::Config => {}
        }
        cfg.clamp_pzf_d2d();
    }

    /// SHA-256 of everything that determines the results (the output path
    /// excluded).
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentSpec {
            output: None,
            ..self.clone()
        };
        let text = serde_json::to_string(&canonical).expect("spec serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn default_output(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("results/{}.csv", self.experiment.name())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: f64,
    pub metric: String,
    pub mean: f64,
    pub ci95: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentId,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub trials: usize,
    pub sweep: Sweep,
    pub rows: usize,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
}

pub fn version_string() -> String {
    format!("{} v{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Neumaier-compensated sum in the given order.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and 95% half-width `1.96 s / sqrt(n)`; NaN for no samples, zero
/// half-width for one.
pub fn mean_ci95(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, Z95 * sd / (n as f64).sqrt())
}

/// Per-trial seed shared by every sweep value.
pub fn trial_seed(root: u64, trial: usize) -> u64 {
    derive_seed(root, Purpose::Trial, trial as u64)
}

fn aggregate(sweep: f64, trials: usize, outcomes: &[TrialOutcome]) -> Vec<ResultRow> {
    let mut names: Vec<&str> = Vec::new();
    for o in outcomes {
        if let TrialOutcome::Done(metrics) = o {
            for (name, _) in metrics {
                if !names.contains(&name.as_str()) {
                    names.push(name);
                }
            }
        }
    }
    let mut rows: Vec<ResultRow> = names
        .iter()
        .map(|&name| {
            let samples: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| match o {
                    TrialOutcome::Done(m) => m.iter().find(|(n, _)| n == name).map(|(_, v)| *v),
                    TrialOutcome::Infeasible(_) => None,
                })
                .collect();
            let (mean, ci95) = mean_ci95(&samples);
            ResultRow {
                sweep,
                metric: name.to_string(),
                mean,
                ci95,
                trials,
            }
        })
        .collect();
    let infeasible: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            if matches!(o, TrialOutcome::Infeasible(_)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let (mean, ci95) = mean_ci95(&infeasible);
    rows.push(ResultRow {
        sweep,
        metric: "infeasible_fraction".into(),
        mean,
        ci95,
        trials,
    });
    rows
}

/// Runs every sweep value and trial of a validated spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let root = spec.config.rng_seed;
    let mut rows = Vec::new();
    for &value in &spec.sweep.values {
        let cfg = spec.point_config(value)?;
        let outcomes = (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec.experiment, &spec.options, &cfg, trial_seed(root, t)))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(aggregate(value, spec.trials, &outcomes));
    }
    let manifest = Manifest {
        experiment: spec.experiment,
        version: version_string(),
        seed: root,
        config_hash: spec.config_hash(),
        trials: spec.trials,
        sweep: spec.sweep.clone(),
        rows: rows.len(),
        csv: None,
    };
    Ok(ExperimentResult { rows, manifest })
}

pub const CSV_HEADER: &str = "sweep,metric,mean,ci95,trials";

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.sweep, r.metric, r.mean, r.ci95, r.trials
        )
        .expect("write to string");
    }
    out
}

/// Writes the CSV and `<stem>.manifest.json` next to it; returns both paths.
pub fn write_outputs(result: &mut ExperimentResult, csv_path: &Path) -> Result<(PathBuf, PathBuf)> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(csv_path, to_csv(&result.rows))?;
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    let manifest_path = csv_path.with_file_name(format!("{stem}.manifest.json"));
    result.manifest.csv = Some(csv_path.to_path_buf());
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&result.manifest)?,
    )?;
    Ok((csv_path.to_path_buf(), manifest_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_known_samples() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * sd / 2.0).abs() < 1e-15);
        assert_eq!(mean_ci95(&[7.0]), (7.0, 0.0));
        assert!(mean_ci95(&[]).0.is_nan());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v.iter().copied()), 2.0);
    }

    #[test]
    fn spec_validation_names_fields() {
        let good =
            r#"{"experiment":"fig2","sweep":{"variable":"pilot_len","values":[6,8]},"trials":2}"#;
        assert!(ExperimentSpec::from_json(good).is_ok());

        let bad_var = good.replace("pilot_len", "pilot_length");
        let err = ExperimentSpec::from_json(&bad_var).unwrap_err();
        assert!(
            matches!(err, Error::InvalidSpec { ref field, .. } if field == "sweep.variable"),
            "{err}"
        );

        let bad_trials = good.replace("\"trials\":2", "\"trials\":0");
        let err = ExperimentSpec::from_json(&bad_trials).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec { ref field, .. } if field == "trials"));

        let bad_value = good.replace("[6,8]", "[6,40]");
        let err = ExperimentSpec::from_json(&bad_value).unwrap_err();
        assert!(err.to_string().contains("sweep.values[1]"), "{err}");

        let unknown = good.replace("\"trials\":2", "\"trials\":2,\"extra\":1");
        assert!(ExperimentSpec::from_json(&unknown).is_err());
    }

    #[test]
    fn point_config_adjusts_receivers() {
        let spec = ExperimentSpec::from_json(
            r#"{"experiment":"fig2","sweep":{"variable":"pilot_len","values":[6,7,12]},"trials":1}"#,
        )
        .unwrap();
        let c = spec.point_config(6.0).unwrap();
        assert_eq!(c.pzf_bs, (4, 1));
        assert_eq!(c.pzf_d2d, (1, 0));
        let c = spec.point_config(7.0).unwrap();
        assert_eq!(c.pzf_d2d, (1, 1));
        let c = spec.point_config(12.0).unwrap();
        assert_eq!(c.pzf_bs, (4, 7));
        assert_eq!(c.pzf_d2d, (1, 2));
    }

    #[test]
    fn hash_ignores_output_path() {
        let mut spec = ExperimentSpec::from_json(
            r#"{"experiment":"fig3","sweep":{"variable":"pilot_len","values":[7]},"trials":1}"#,
        )
        .unwrap();
        let h = spec.config_hash();
        spec.output = Some("elsewhere.csv".into());
        assert_eq!(h, spec.config_hash());
        spec.trials = 2;
        assert_ne!(h, spec.config_hash());
        assert_eq!(h.len(), 64);
    }
}
