//! Pilot scheduling for the D2D pairs and the pilot power that minimizes the
//! sum estimation error under a fixed schedule.
//!
//! [`psa`] is the greedy scheduler driven by [`InterferenceMetric`];
//! [`exhaustive_search`] and [`random_assignment`] bracket it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{estimation_coeffs, EstimationCoeffs, PilotAssignment, PowerProfile};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::scenario::{LargeScale, SystemConfig};

/// Largest number of assignments [`exhaustive_search`] will enumerate.
pub const EXHAUSTIVE_LIMIT: f64 = 1e7;

/// Iteration cap of [`pilot_power_parametric`].
pub const PARAMETRIC_MAX_ITER: usize = 500;

/// Pairwise potential interference between D2D pairs if they shared a pilot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMetric {
    pub chi: Vec<Vec<f64>>,
}

impl InterferenceMetric {
    pub fn n_d2d(&self) -> usize {
        self.chi.len()
    }

    /// Total metric of pair `k` against everybody.
    pub fn strength(&self, k: usize) -> f64 {
        self.chi.iter().map(|row| row[k]).sum()
    }

    /// Sum of the metric over all pairs that share a pilot.
    pub fn shared_total(&self, pa: &PilotAssignment) -> f64 {
        let k = self.n_d2d();
        let mut total = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                if pa.same_pilot(i, j) {
                    total += self.chi[i][j];
                }
            }
        }
        total
    }
}

/// `chi_ik = ln(1 + (v_ik / v_kk)^2 + (v_ki / v_ii)^2)`, zero on the diagonal.
pub fn interference_metric(ls: &LargeScale) -> InterferenceMetric {
    let k = ls.n_d2d();
    let v = &ls.v_d;
    let chi = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let a = v[i][j] / v[j][j];
                        let b = v[j][i] / v[i][i];
                        (a * a + b * b).ln_1p()
                    }
                })
                .collect()
        })
        .collect();
    InterferenceMetric { chi }
}

/// `sum_k M * eps_kk`: total normalized MSE of the desired-link estimates at
/// the D2D receivers.
pub fn sum_mse(coeffs: &EstimationCoeffs, d2drx_antennas: usize) -> f64 {
    let m = d2drx_antennas as f64;
    (0..coeffs.eps_dd.len())
        .map(|k| m * coeffs.eps_dd[k][k])
        .sum()
}

/// [`sum_mse`] of an assignment with the given pilot powers.
pub fn sum_mse_of(
    pa: &PilotAssignment,
    ls: &LargeScale,
    pp: &PowerProfile,
    cfg: &SystemConfig,
) -> Result<f64> {
    let coeffs = estimation_coeffs(ls, pa, pp, cfg.noise_power)?;
    Ok(sum_mse(&coeffs, cfg.d2drx_antennas))
}

fn first_extremum(
    values: impl Iterator<Item = f64>,
    better: impl Fn(f64, f64) -> bool,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in values.enumerate() {
        if best.is_none_or(|(_, b)| better(x, b)) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

/// Greedy pilot scheduling: the pair with the largest total metric is placed
/// first, on the pilot whose current users it interferes with least.
/// Ties go to the lowest index; an unused pilot scores zero.
pub fn psa(ls: &LargeScale, cfg: &SystemConfig) -> Result<PilotAssignment> {
    if cfg.pilot_len <= cfg.n_cu {
        return Err(Error::config("pilot_len", "needs tau - N >= 1 D2D pilots"));
    }
    let metric = interference_metric(ls);
    Ok(psa_with_metric(&metric, cfg.n_cu, cfg.pilot_len))
}

pub fn psa_with_metric(
    metric: &InterferenceMetric,
    n_cu: usize,
    pilot_len: usize,
) -> PilotAssignment {
    let k = metric.n_d2d();
    let n_slots = pilot_len - n_cu;
    let mut slot: Vec<Option<usize>> = vec![None; k];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_slots];
    for _ in 0..k {
        let next = first_extremum(
            (0..k).map(|j| {
                if slot[j].is_none() {
                    metric.strength(j)
                } else {
                    f64::NEG_INFINITY
                }
            }),
            |x, best| x > best,
        )
        .expect("at least one unallocated pair");
        let t = first_extremum(
            members
                .iter()
                .map(|g| g.iter().map(|&i| metric.chi[i][next]).sum::<f64>()),
            |x, best| x < best,
        )
        .expect("at least one pilot");
        slot[next] = Some(t);
        members[t].push(next);
    }
    let slot = slot
        .into_iter()
        .map(|s| s.expect("every pair allocated"))
        .collect();
    PilotAssignment::new(n_cu, pilot_len, slot).expect("slots within range")
}

/// Minimizes `objective` over all `(tau - N)^K` assignments. Among equal
/// values the first in lexicographic order (pair 0 most significant) wins.
pub fn exhaustive_search(
    cfg: &SystemConfig,
    mut objective: impl FnMut(&PilotAssignment) -> Result<f64>,
) -> Result<PilotAssignment> {
    if cfg.pilot_len <= cfg.n_cu {
        return Err(Error::config("pilot_len", "needs tau - N >= 1 D2D pilots"));
    }
    let n_slots = cfg.d2d_pilots();
    let k = cfg.n_d2d;
    let size = (n_slots as f64).powi(k as i32);
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge {
            size,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut digits = vec![0usize; k];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let pa = PilotAssignment::new(cfg.n_cu, cfg.pilot_len, digits.clone())?;
        let value = objective(&pa)?;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, digits.clone()));
        }
        // odometer step, last pair fastest
        let mut pos = k;
        loop {
            if pos == 0 {
                let (_, slots) = best.expect("at least one assignment");
                return PilotAssignment::new(cfg.n_cu, cfg.pilot_len, slots);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < n_slots {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// [`sum_mse_of`] computed from the desired-link terms alone, for
/// enumeration.
pub fn sum_mse_direct(
    pa: &PilotAssignment,
    ls: &LargeScale,
    p_p: &[f64],
    cfg: &SystemConfig,
) -> f64 {
    let k = p_p.len();
    let mut total = 0.0;
    for rx in 0..k {
        let mut denom = cfg.noise_power;
        for i in 0..k {
            if pa.same_pilot(i, rx) {
                denom += p_p[i] * ls.v_d[i][rx];
            }
        }
        total += 1.0 - p_p[rx] * ls.v_d[rx][rx] / denom;
    }
    cfg.d2drx_antennas as f64 * total
}

/// Exhaustive minimization of the sum MSE at the given pilot powers.
pub fn exhaustive_sum_mse(
    ls: &LargeScale,
    pp: &PowerProfile,
    cfg: &SystemConfig,
) -> Result<PilotAssignment> {
    exhaustive_search(cfg, |pa| Ok(sum_mse_direct(pa, ls, &pp.p_p, cfg)))
}

/// Each pair picks a D2D pilot uniformly and independently.
pub fn random_assignment(cfg: &SystemConfig, seed: u64) -> Result<PilotAssignment> {
    if cfg.pilot_len <= cfg.n_cu {
        return Err(Error::config("pilot_len", "needs tau - N >= 1 D2D pilots"));
    }
    let n_slots = cfg.d2d_pilots();
    let mut rng = rng::stream(seed, Purpose::Scheduling, 0);
    let slot = (0..cfg.n_d2d)
        .map(|_| rng.random_range(0..n_slots))
        .collect();
    PilotAssignment::new(cfg.n_cu, cfg.pilot_len, slot)
}

/// Output of [`pilot_power_parametric`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPowerSolution {
    pub p_p: Vec<f64>,
    pub xi: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Pairs left silent; any `true` means more pilots are needed for every
    /// pair to transmit at full power.
    pub zero_power: Vec<bool>,
    pub iterations: usize,
}

/// `U_k = p_k v_kk` and `V_k = sum_{i in X_k} p_i v_ik + N0`, whose ratio is
/// the normalized estimate variance of the desired link at D2D-Rx k.
pub fn ratio_terms(
    p: &[f64],
    pa: &PilotAssignment,
    ls: &LargeScale,
    n0: f64,
) -> (Vec<f64>, Vec<f64>) {
    let groups = pa.groups();
    let k = p.len();
    let u = (0..k).map(|rx| p[rx] * ls.v_d[rx][rx]).collect();
    let v = (0..k)
        .map(|rx| {
            groups[pa.slot(rx)]
                .iter()
                .map(|&i| p[i] * ls.v_d[i][rx])
                .sum::<f64>()
                + n0
        })
        .collect();
    (u, v)
}

/// `sum_k U_k / V_k`; maximizing it minimizes the sum MSE.
pub fn sum_of_ratios(p: &[f64], pa: &PilotAssignment, ls: &LargeScale, n0: f64) -> f64 {
    let (u, v) = ratio_terms(p, pa, ls, n0);
    u.iter().zip(&v).map(|(a, b)| a / b).sum()
}

/// `|U_k - xi_k V_k| / V_k` at the returned powers. Dividing by `V_k >= N0`
/// makes the check independent of the power unit.
pub fn parametric_residuals(
    sol: &PilotPowerSolution,
    pa: &PilotAssignment,
    ls: &LargeScale,
    n0: f64,
) -> Vec<f64> {
    let (u, v) = ratio_terms(&sol.p_p, pa, ls, n0);
    (0..u.len())
        .map(|k| (u[k] - sol.xi[k] * v[k]).abs() / v[k])
        .collect()
}

/// Pilot powers for a fixed schedule by the parametric sum-of-ratios method.
///
/// Alternates the parameters `xi_k = U_k / V_k`, `kappa_k = 1 / V_k` with the
/// linear subproblem in `p`, whose solution is bang-bang: pair k transmits
/// `tau * P_k` iff `kappa_k v_kk >= sum_{i in X_k} kappa_i xi_i v_ki`. The
/// subproblem coefficient of `p_k` is the gradient of the sum of ratios, so a
/// fixed point is a vertex satisfying the box KKT conditions.
///
/// Starts from full power and stops when the parameters that produced the
/// current powers reproduce themselves within `cfg.tol_power`
/// (`|xi_k - U_k/V_k|` and `|kappa_k V_k - 1|`); those parameters are
/// returned. Once the parameters depend on the powers only, the iteration is
/// a map on the finite set of power patterns, so a repeated pattern without
/// convergence is a cycle and is reported as [`Error::NotConverged`]. That
/// happens when the optimum is interior, typically a high-SNR pair sharing a
/// pilot whose own term has saturated.
pub fn pilot_power_parametric(
    pa: &PilotAssignment,
    ls: &LargeScale,
    cfg: &SystemConfig,
) -> Result<PilotPowerSolution> {
    ls.validate()?;
    let k = ls.n_d2d();
    if pa.n_d2d() != k {
        return Err(Error::InvalidInput(
            "assignment and gains disagree on K".into(),
        ));
    }
    let n0 = cfg.noise_power;
    let full = cfg.pilot_len as f64 * cfg.max_power_d2d;
    let groups = pa.groups();
    let params = |p: &[f64]| {
        let (u, v) = ratio_terms(p, pa, ls, n0);
        let xi: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a / b).collect();
        let kappa: Vec<f64> = v.iter().map(|b| 1.0 / b).collect();
        (xi, kappa)
    };

    let mut p = vec![full; k];
    let (mut xi, mut kappa) = params(&p);
    let mut seen: Vec<Vec<bool>> = Vec::new();
    let mut residual = f64::INFINITY;
    for iter in 1..=PARAMETRIC_MAX_ITER {
        p = (0..k)
            .map(|tx| {
                let gain = kappa[tx] * ls.v_d[tx][tx];
                let cost: f64 = groups[pa.slot(tx)]
                    .iter()
                    .map(|&rx| kappa[rx] * xi[rx] * ls.v_d[tx][rx])
                    .sum();
                if gain >= cost {
                    full
                } else {
                    0.0
                }
            })
            .collect();
        let (xi_new, kappa_new) = params(&p);
        residual = (0..k)
            .map(|j| {
                (xi_new[j] - xi[j])
                    .abs()
                    .max((kappa[j] / kappa_new[j] - 1.0).abs())
            })
            .fold(0.0, f64::max);
        if residual <= cfg.tol_power {
            return Ok(PilotPowerSolution {
                zero_power: p.iter().map(|&x| x == 0.0).collect(),
                p_p: p,
                xi,
                kappa,
                iterations: iter,
            });
        }
        let pattern: Vec<bool> = p.iter().map(|&x| x > 0.0).collect();
        if seen.contains(&pattern) {
            return Err(Error::NotConverged {
                solver: "parametric pilot power (cycling)",
                iterations: iter,
                residual,
            });
        }
        seen.push(pattern);
        xi = xi_new;
        kappa = kappa_new;
    }
    Err(Error::NotConverged {
        solver: "parametric pilot power",
        iterations: PARAMETRIC_MAX_ITER,
        residual,
    })
}
