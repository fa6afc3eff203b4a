//! One trial of each experiment: a fresh drop (topology and large-scale
//! fading), pilot scheduling, and whatever estimation, receivers and power
//! control the experiment measures.

use crate::channel::{
    draw_fast_fading, estimation_coeffs, mmse_estimate, simulate_pilot_phase, EstimationCoeffs,
    PilotAssignment, PilotBook, PowerProfile,
};
use crate::error::{Error, Result};
use crate::pilot_scheduling::{
    exhaustive_sum_mse, psa, random_assignment, sum_mse, sum_mse_direct, EXHAUSTIVE_LIMIT,
};
use crate::power_control::{jdpc, JdpcResult, JDPC_MAX_OUTER};
use crate::receivers::{
    link_sinrs, rate_coeffs, select_cancellation, CancellationSets, RateCoeffs,
};
use crate::rng::{self, Purpose};
use crate::scenario::{Scenario, SystemConfig};

use super::{ExperimentId, RecipeOptions, Scheduler};

/// Redraws of the fast fading allowed when a PZF filter degenerates.
const FADING_RETRIES: u64 = 8;

/// Length the DPCD convergence trace is padded to (last value repeated).
const DPCD_TRACE_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Done(Vec<(String, f64)>),
    /// The drop admits no solution (CU targets unreachable, a solver did
    /// not converge, ...); counted in `infeasible_fraction`.
    Infeasible(String),
}

fn is_infeasibility(e: &Error) -> bool {
    matches!(
        e,
        Error::CellularInfeasible
            | Error::InfeasibleBudget { .. }
            | Error::NotConverged { .. }
            | Error::DegenerateSpan { .. }
            | Error::BisectionBracket { .. }
    )
}

/// Runs one trial; typed infeasibilities become [`TrialOutcome::Infeasible`],
/// anything else is an error.
pub fn run_trial(
    experiment: ExperimentId,
    options: &RecipeOptions,
    cfg: &SystemConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    let cfg = SystemConfig {
        rng_seed: seed,
        ..cfg.clone()
    };
    let result = match experiment {
        ExperimentId::Fig1 | ExperimentId::Fig2 => full_power_rates(options, &cfg),
        ExperimentId::Fig3 => scheduling(&cfg),
        ExperimentId::Fig45 => convergence(options, &cfg),
        ExperimentId::Fig6 => system_rates(options, &cfg),
        ExperimentId::Fig7 | ExperimentId::Fig8 => reuse_vs_orthogonal(options, &cfg),
        ExperimentId::Fig9 => pzf_variants(options, &cfg),
        ExperimentId::Custom => everything(options, &cfg),
    };
    match result {
        Ok(metrics) => Ok(TrialOutcome::Done(metrics)),
        Err(e) if is_infeasibility(&e) => Ok(TrialOutcome::Infeasible(e.to_string())),
        Err(e) => Err(e),
    }
}

/// Everything that depends only on the drop and the schedule.
struct Drop {
    cfg: SystemConfig,
    scenario: Scenario,
    pa: PilotAssignment,
    pp: PowerProfile,
    coeffs: EstimationCoeffs,
    sets: CancellationSets,
    rc: RateCoeffs,
}

fn schedule(
    scheduler: Scheduler,
    scenario: &Scenario,
    cfg: &SystemConfig,
) -> Result<PilotAssignment> {
    match scheduler {
        Scheduler::Psa => psa(&scenario.large_scale, cfg),
        Scheduler::Random => random_assignment(cfg, cfg.rng_seed),
        Scheduler::RoundRobin => Ok(PilotAssignment::round_robin(cfg)),
    }
}

fn make_drop(cfg: &SystemConfig, scheduler: Scheduler) -> Result<Drop> {
    let scenario = Scenario::generate(cfg)?;
    let pa = schedule(scheduler, &scenario, cfg)?;
    with_assignment(cfg, scenario, pa)
}

fn with_assignment(cfg: &SystemConfig, scenario: Scenario, pa: PilotAssignment) -> Result<Drop> {
    let ls = &scenario.large_scale;
    let pp = PowerProfile::full(cfg);
    let coeffs = estimation_coeffs(ls, &pa, &pp, cfg.noise_power)?;
    let sets = select_cancellation(ls, &pa, cfg)?;
    let rc = rate_coeffs(ls, &pa, &coeffs, &sets, &pp, cfg)?;
    Ok(Drop {
        cfg: cfg.clone(),
        scenario,
        pa,
        pp,
        coeffs,
        sets,
        rc,
    })
}

/// Mean simulated (cell, D2D) sum SE over `draws` fast-fading realizations.
fn simulated_sum_se(d: &Drop, pp: &PowerProfile, draws: usize) -> Result<(f64, f64)> {
    let cfg = &d.cfg;
    let ls = &d.scenario.large_scale;
    let book = PilotBook::identity(cfg.pilot_len);
    let (mut cell, mut d2d) = (0.0, 0.0);
    for draw in 0..draws as u64 {
        let mut attempt = 0;
        let sinrs = loop {
            let index = draw + attempt * draws as u64;
            let mut fading = rng::stream(cfg.rng_seed, Purpose::FastFading, index);
            let mut noise = rng::stream(cfg.rng_seed, Purpose::Noise, index);
            let real = draw_fast_fading(cfg, &mut fading);
            let y = simulate_pilot_phase(&real, ls, &d.pa, &d.pp, cfg, &book, &mut noise);
            let est = mmse_estimate(&y, ls, &d.pa, &d.pp, cfg, &book);
            match link_sinrs(&est, &d.coeffs, ls, &d.pa, pp, &d.sets, cfg) {
                Err(Error::DegenerateSpan { .. }) if attempt + 1 < FADING_RETRIES => attempt += 1,
                other => break other?,
            }
        };
        let (c, k) = sinrs.rates(cfg);
        cell += c.iter().sum::<f64>();
        d2d += k.iter().sum::<f64>();
    }
    Ok((cell / draws as f64, d2d / draws as f64))
}

fn lower_bound_sums(rc: &RateCoeffs, pp: &PowerProfile) -> (f64, f64) {
    let f = rc.data_fraction;
    let sum = |v: Vec<f64>| v.iter().map(|s| f * (1.0 + s).log2()).sum::<f64>();
    (
        sum(rc.cell_sinr_lb(&pp.q_s, &pp.p_s)),
        sum(rc.d2d_sinr_lb(&pp.q_s, &pp.p_s)),
    )
}

fn full_power_rates(options: &RecipeOptions, cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let d = make_drop(cfg, options.scheduler)?;
    let (cell, d2d) = simulated_sum_se(&d, &d.pp, options.fading_draws)?;
    let (cell_lb, d2d_lb) = lower_bound_sums(&d.rc, &d.pp);
    Ok(vec![
        ("sum_se_cell".into(), cell),
        ("sum_se_cell_lb".into(), cell_lb),
        ("sum_se_d2d".into(), d2d),
        ("sum_se_d2d_lb".into(), d2d_lb),
    ])
}

fn scheduling(cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let scenario = Scenario::generate(cfg)?;
    let ls = &scenario.large_scale;
    let pp = PowerProfile::full(cfg);
    let value = |pa: &PilotAssignment| sum_mse_direct(pa, ls, &pp.p_p, cfg);
    let mut out = vec![
        ("sum_mse.psa".to_string(), value(&psa(ls, cfg)?)),
        (
            "sum_mse.rps".to_string(),
            value(&random_assignment(cfg, cfg.rng_seed)?),
        ),
    ];
    let size = (cfg.d2d_pilots() as f64).powi(cfg.n_d2d as i32);
    if size <= EXHAUSTIVE_LIMIT / 10.0 {
        out.push((
            "sum_mse.es".into(),
            value(&exhaustive_sum_mse(ls, &pp, cfg)?),
        ));
    }
    // every pair on its own pilot, at the pilot energy of this tau
    let own: Vec<usize> = (0..cfg.n_d2d).collect();
    let orthogonal = PilotAssignment::new(cfg.n_cu, cfg.n_cu + cfg.n_d2d, own)?;
    let coeffs = estimation_coeffs(ls, &orthogonal, &pp, cfg.noise_power)?;
    out.push((
        "sum_mse.orthogonal".into(),
        sum_mse(&coeffs, cfg.d2drx_antennas),
    ));
    Ok(out)
}

fn padded(values: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.take(len).collect();
    let last = v.last().copied().unwrap_or(f64::NAN);
    v.resize(len, last);
    v
}

fn convergence(options: &RecipeOptions, cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let d = make_drop(cfg, options.scheduler)?;
    let j = jdpc(&d.rc, cfg)?;
    let f = d.rc.data_fraction;
    let mut out = vec![
        ("iterations.jdpc".to_string(), j.outer_iterations as f64),
        (
            "iterations.dpcc".to_string(),
            j.start_dpcc_iterations as f64,
        ),
    ];
    if let Some(first) = j.steps.first() {
        out.push(("iterations.dpcd".into(), first.dpcd_trace.len() as f64));
        let trace = padded(
            first.dpcd_trace.iter().map(|t| f * t.sum_rate),
            DPCD_TRACE_LEN,
        );
        for (i, v) in trace.into_iter().enumerate() {
            out.push((format!("sum_se_d2d_lb.dpcd{:02}", i + 1), v));
        }
    }
    let outer = padded(j.sum_se_trace.iter().copied(), JDPC_MAX_OUTER + 1);
    for (i, v) in outer.into_iter().enumerate() {
        out.push((format!("sum_se_d2d_lb.outer{i:02}"), v));
    }
    Ok(out)
}

fn tuned_powers(d: &Drop, j: &JdpcResult) -> PowerProfile {
    PowerProfile {
        q_s: j.q_s.clone(),
        p_s: j.p_s.clone(),
        ..d.pp.clone()
    }
}

fn system_rates(options: &RecipeOptions, cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let d = make_drop(cfg, options.scheduler)?;
    let j = jdpc(&d.rc, cfg)?;
    let (cell_lb, d2d_lb) = lower_bound_sums(&d.rc, &tuned_powers(&d, &j));
    Ok(vec![
        ("sum_se_lb".into(), cell_lb + d2d_lb),
        ("sum_se_cell_lb".into(), cell_lb),
        ("sum_se_d2d_lb".into(), d2d_lb),
    ])
}

/// The same drop with every pair on its own pilot (`tau = N + K`).
fn orthogonal_config(cfg: &SystemConfig) -> SystemConfig {
    let mut ot = cfg.clone();
    ot.pilot_len = cfg.n_cu + cfg.n_d2d;
    if ot.pzf_bs == cfg.full_zf_bs() {
        ot.pzf_bs = ot.full_zf_bs();
    }
    ot.clamp_pzf_d2d();
    ot
}

fn reuse_vs_orthogonal(options: &RecipeOptions, cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let d = make_drop(cfg, options.scheduler)?;
    let j = jdpc(&d.rc, cfg)?;
    let (_, reuse) = lower_bound_sums(&d.rc, &tuned_powers(&d, &j));
    let mut out = vec![("sum_se_d2d_lb.pr".to_string(), reuse)];

    let ot = orthogonal_config(cfg);
    if ot.coherence_len > ot.pilot_len && ot.validate().is_ok() {
        let pa = PilotAssignment::new(ot.n_cu, ot.pilot_len, (0..ot.n_d2d).collect())?;
        let od = with_assignment(&ot, d.scenario, pa)?;
        let oj = jdpc(&od.rc, &ot)?;
        let (_, orth) = lower_bound_sums(&od.rc, &tuned_powers(&od, &oj));
        out.push(("sum_se_d2d_lb.ot".into(), orth));
    }
    Ok(out)
}

fn pzf_variants(options: &RecipeOptions, cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let variants = if options.pzf_d2d_variants.is_empty() {
        vec![cfg.pzf_d2d]
    } else {
        options.pzf_d2d_variants.clone()
    };
    let scenario = Scenario::generate(cfg)?;
    let pa = schedule(options.scheduler, &scenario, cfg)?;
    let mut out = Vec::new();
    for (mc, md) in variants {
        let c = SystemConfig {
            pzf_d2d: (mc, md),
            ..cfg.clone()
        };
        let d = with_assignment(&c, scenario.clone(), pa.clone())?;
        let j = jdpc(&d.rc, &c)?;
        let (_, d2d_lb) = lower_bound_sums(&d.rc, &tuned_powers(&d, &j));
        out.push((format!("sum_se_d2d_lb.mc{mc}_md{md}"), d2d_lb));
    }
    Ok(out)
}

fn everything(options: &RecipeOptions, cfg: &SystemConfig) -> Result<Vec<(String, f64)>> {
    let d = make_drop(cfg, options.scheduler)?;
    let j = jdpc(&d.rc, cfg)?;
    let pp = tuned_powers(&d, &j);
    let (cell_lb, d2d_lb) = lower_bound_sums(&d.rc, &pp);
    let (cell, d2d) = simulated_sum_se(&d, &pp, options.fading_draws)?;
    Ok(vec![
        ("sum_mse".into(), sum_mse(&d.coeffs, cfg.d2drx_antennas)),
        ("iterations".into(), j.outer_iterations as f64),
        ("sum_se_cell".into(), cell),
        ("sum_se_cell_lb".into(), cell_lb),
        ("sum_se_d2d".into(), d2d),
        ("sum_se_d2d_lb".into(), d2d_lb),
    ])
}
