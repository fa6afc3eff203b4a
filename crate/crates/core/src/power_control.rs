//! Data power control from large-scale information only.
//!
//! - [`dpcc`]: minimal CU powers meeting the SINR targets for fixed D2D powers,
//!   as the fixed point of the standard interference map `min(Q, F q + theta)`.
//! - [`dpcd`]: D2D powers maximizing the D2D sum rate for fixed CU powers,
//!   subject to the interference budget left by the CU targets, via WMMSE.
//! - [`jdpc`]: alternates the two.
//!
//! Rates here omit the `1 - tau/T` prefactor unless stated otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::receivers::RateCoeffs;
use crate::scenario::SystemConfig;

pub const DPCC_MAX_ITER: usize = 100_000;
pub const DPCD_MAX_ITER: usize = 1_000;
pub const JDPC_MAX_OUTER: usize = 10;
pub const BISECTION_MAX_DOUBLINGS: usize = 60;

/// `F`, `theta` and the caps of the CU power constraint `q >= F q + theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellularFixedPoint {
    /// `f[n][a] = gamma * varphi_an / phi_n`.
    pub f: Vec<Vec<f64>>,
    /// `theta[n] = gamma * sigma_c / phi_n`.
    pub theta: Vec<f64>,
    pub caps: Vec<f64>,
}

impl CellularFixedPoint {
    /// Built for the D2D data powers `p_s`, which set `sigma_c`.
    pub fn new(rc: &RateCoeffs, p_s: &[f64], cfg: &SystemConfig) -> Result<Self> {
        let n = rc.n_cu();
        if p_s.len() != rc.n_d2d() {
            return Err(Error::InvalidInput("p_s length differs from K".into()));
        }
        if let Some(a) = rc.phi_c.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "CU {a} has no useful signal power"
            )));
        }
        let gamma = cfg.sinr_target;
        let sigma = rc.sigma_c_for(p_s);
        let f = (0..n)
            .map(|me| {
                (0..n)
                    .map(|a| gamma * rc.varphi_c[a][me] / rc.phi_c[me])
                    .collect()
            })
            .collect();
        let theta = (0..n).map(|me| gamma * sigma / rc.phi_c[me]).collect();
        Ok(CellularFixedPoint {
            f,
            theta,
            caps: vec![cfg.max_power_cu; n],
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `Delta(q) = F q + theta`: the power each CU needs to hit its target
    /// against interference `q`.
    pub fn delta(&self, q: &[f64]) -> Vec<f64> {
        self.f
            .iter()
            .zip(&self.theta)
            .map(|(row, t)| row.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() + t)
            .collect()
    }

    /// `Lambda(q) = min(Q, Delta(q))`.
    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        self.delta(q)
            .into_iter()
            .zip(&self.caps)
            .map(|(d, c)| d.min(*c))
            .collect()
    }

    pub fn f_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |r, c| self.f[r][c])
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.f_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `(I - F)^{-1} theta` by LU, ignoring the caps. `None` if singular.
    pub fn direct_solve(&self) -> Option<Vec<f64>> {
        let n = self.len();
        let a = DMatrix::<f64>::identity(n, n) - self.f_matrix();
        let b = DVector::from_column_slice(&self.theta);
        a.lu().solve(&b).map(|x| x.iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpccResult {
    pub q_s: Vec<f64>,
    pub iterations: usize,
    /// Every CU target met at the fixed point; false when a cap binds.
    pub feasible: bool,
}

/// [`dpcc_with`] at the configured tolerance.
pub fn dpcc(rc: &RateCoeffs, p_s: &[f64], cfg: &SystemConfig) -> Result<DpccResult> {
    let fp = CellularFixedPoint::new(rc, p_s, cfg)?;
    dpcc_with(&fp, cfg.tol_power, DPCC_MAX_ITER)
}

/// Iterates `q <- min(Q, F q + theta)` from zero. The sequence is
/// componentwise non-decreasing; it stops once
/// `max|q' - q| <= tol * max(q')`.
pub fn dpcc_with(fp: &CellularFixedPoint, tol: f64, max_iter: usize) -> Result<DpccResult> {
    let mut q = vec![0.0; fp.len()];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = fp.apply(&q);
        let step = next
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = next.iter().copied().fold(0.0, f64::max);
        residual = if scale > 0.0 { step / scale } else { 0.0 };
        q = next;
        if residual <= tol {
            let need = fp.delta(&q);
            let feasible = need
                .iter()
                .zip(&fp.caps)
                .all(|(d, c)| *d <= c * (1.0 + 10.0 * tol));
            return Ok(DpccResult {
                q_s: q,
                iterations: iter,
                feasible,
            });
        }
    }
    Err(Error::NotConverged {
        solver: "DPCC",
        iterations: max_iter,
        residual,
    })
}

/// Per-CU slack `q_n phi_n / gamma - sum_a q_a varphi_an - N0` and its
/// minimum, the D2D interference budget at the BS.
pub fn interference_budget(rc: &RateCoeffs, q_s: &[f64], cfg: &SystemConfig) -> (Vec<f64>, f64) {
    let n = rc.n_cu();
    let per_cu: Vec<f64> = (0..n)
        .map(|me| {
            let interference: f64 = (0..n).map(|a| q_s[a] * rc.varphi_c[a][me]).sum();
            q_s[me] * rc.phi_c[me] / cfg.sinr_target - interference - rc.noise
        })
        .collect();
    let zeta = per_cu.iter().copied().fold(f64::INFINITY, f64::min);
    (per_cu, zeta)
}

/// WMMSE variables of the D2D power problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmmseState {
    /// Amplitudes, `f_k^2 = p_k`.
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub nu: Vec<f64>,
    pub lambda: f64,
    pub zeta: f64,
}

/// One DPCD iteration, recorded after the amplitude update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpcdIteration {
    pub iteration: usize,
    /// `sum_k log2(1 + sinr_k)` at the new amplitudes.
    pub sum_rate: f64,
    /// `sum_k (w_k e_k - ln w_k)` at the new amplitudes and current `nu`, `w`.
    pub wmmse_objective: f64,
    /// `sum_k |ln w_k - ln w_k'|`.
    pub residual: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpcdResult {
    pub p_s: Vec<f64>,
    pub state: WmmseState,
    pub iterations: usize,
    /// False when the iteration cap ended the run; the powers still fit the
    /// budget and the sum rate has not decreased along the trace.
    pub converged: bool,
    pub trace: Vec<DpcdIteration>,
}

impl DpcdResult {
    pub fn trace_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trace)?)
    }
}

struct DpcdProblem<'a> {
    phi: &'a [f64],
    psi: &'a [Vec<f64>],
    sigma: Vec<f64>,
    cost: &'a [f64],
    amp_cap: Vec<f64>,
}

impl DpcdProblem<'_> {
    fn k(&self) -> usize {
        self.phi.len()
    }

    /// Interference plus noise at receiver k, including the own-link error term.
    fn interference(&self, f: &[f64], k: usize) -> f64 {
        (0..self.k())
            .map(|i| f[i] * f[i] * self.psi[i][k])
            .sum::<f64>()
            + self.sigma[k]
    }

    fn sinr(&self, f: &[f64], k: usize) -> f64 {
        f[k] * f[k] * self.phi[k] / self.interference(f, k)
    }

    fn sum_rate(&self, f: &[f64]) -> f64 {
        (0..self.k()).map(|k| self.sinr(f, k).ln_1p()).sum::<f64>() / std::f64::consts::LN_2
    }

    fn mse(&self, f: &[f64], nu: &[f64], k: usize) -> f64 {
        let a = nu[k] * f[k] * self.phi[k].sqrt() - 1.0;
        a * a + nu[k] * nu[k] * self.interference(f, k)
    }

    fn wmmse_objective(&self, f: &[f64], nu: &[f64], w: &[f64]) -> f64 {
        (0..self.k())
            .map(|k| w[k] * self.mse(f, nu, k) - w[k].ln())
            .sum()
    }

    fn receive(&self, f: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                f[k] * self.phi[k].sqrt() / (f[k] * f[k] * self.phi[k] + self.interference(f, k))
            })
            .collect()
    }

    fn amplitudes(&self, nu: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let num = w[k] * nu[k] * self.phi[k].sqrt();
                let leak: f64 = (0..self.k())
                    .map(|i| w[i] * nu[i] * nu[i] * self.psi[k][i])
                    .sum();
                let den = w[k] * nu[k] * nu[k] * self.phi[k] + leak + lambda * self.cost[k];
                if num <= 0.0 {
                    0.0
                } else {
                    (num / den).min(self.amp_cap[k])
                }
            })
            .collect()
    }

    fn budget_use(&self, f: &[f64]) -> f64 {
        f.iter().zip(self.cost).map(|(a, c)| a * a * c).sum()
    }

    /// WMMSE iterations from amplitudes `f` until the weights settle or the
    /// iteration cap is reached; every iterate fits the budget.
    fn wmmse(&self, mut f: Vec<f64>, zeta: f64, tol: f64) -> Result<DpcdResult> {
        let k = self.k();
        let mut w: Vec<f64> = vec![1.0; k];
        let mut nu = self.receive(&f);
        let mut lambda = 0.0;
        let mut trace = Vec::new();
        for iter in 1..=DPCD_MAX_ITER {
            nu = self.receive(&f);
            let w_new: Vec<f64> = (0..k)
                .map(|i| {
                    let e = 1.0 - nu[i] * f[i] * self.phi[i].sqrt();
                    // e is 1 for a silent link; guard the rounding of a tiny mse
                    1.0 / e.max(f64::MIN_POSITIVE)
                })
                .collect();
            let residual: f64 = w_new
                .iter()
                .zip(&w)
                .map(|(a, b)| (a.ln() - b.ln()).abs())
                .sum();
            w = w_new;
            let fit = self.fit_budget(&nu, &w, zeta)?;
            lambda = fit.0;
            f = fit.1;
            trace.push(DpcdIteration {
                iteration: iter,
                sum_rate: self.sum_rate(&f),
                wmmse_objective: self.wmmse_objective(&f, &nu, &w),
                residual,
                lambda,
            });
            if residual <= tol && iter > 1 {
                break;
            }
        }
        let converged = trace
            .last()
            .is_some_and(|t| t.residual <= tol && t.iteration > 1);
        Ok(DpcdResult {
            p_s: f.iter().map(|a| a * a).collect(),
            iterations: trace.len(),
            converged,
            state: WmmseState {
                f,
                w,
                nu,
                lambda,
                zeta,
            },
            trace,
        })
    }

    /// Smallest multiplier (up to bisection precision) whose amplitudes fit
    /// the budget; the returned amplitudes never exceed it.
    fn fit_budget(&self, nu: &[f64], w: &[f64], zeta: f64) -> Result<(f64, Vec<f64>)> {
        let f0 = self.amplitudes(nu, w, 0.0);
        if self.budget_use(&f0) <= zeta {
            return Ok((0.0, f0));
        }
        // multiplier scale at which a full-power amplitude balances its cost
        let scale = (0..self.k())
            .filter(|&k| self.cost[k] > 0.0)
            .map(|k| w[k] * nu[k] * self.phi[k].sqrt() / (self.amp_cap[k] * self.cost[k]))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut lo = 0.0;
        let mut hi = scale;
        let mut doublings = 0;
        let mut f_hi = self.amplitudes(nu, w, hi);
        while self.budget_use(&f_hi) > zeta {
            if doublings == BISECTION_MAX_DOUBLINGS {
                return Err(Error::BisectionBracket { doublings });
            }
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            f_hi = self.amplitudes(nu, w, hi);
        }
        for _ in 0..200 {
            if zeta - self.budget_use(&f_hi) <= 1e-10 * zeta || hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let f_mid = self.amplitudes(nu, w, mid);
            if self.budget_use(&f_mid) > zeta {
                lo = mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        Ok((hi, f_hi))
    }
}

/// Budget slack below which a negative `zeta` is read as zero, relative to
/// the largest `q_n phi_n / gamma`. Covers DPCC stopping slightly below its
/// fixed point.
fn budget_tolerance(rc: &RateCoeffs, q_s: &[f64], cfg: &SystemConfig) -> f64 {
    let scale = (0..rc.n_cu())
        .map(|n| q_s[n] * rc.phi_c[n] / cfg.sinr_target)
        .fold(0.0, f64::max);
    10.0 * cfg.tol_power * scale
}

/// D2D data powers for fixed CU powers `q_s` by WMMSE with a bisected
/// multiplier on the interference budget.
pub fn dpcd(rc: &RateCoeffs, q_s: &[f64], cfg: &SystemConfig) -> Result<DpcdResult> {
    let (_, zeta) = interference_budget(rc, q_s, cfg);
    let zeta = if zeta < 0.0 && -zeta <= budget_tolerance(rc, q_s, cfg) {
        0.0
    } else {
        zeta
    };
    dpcd_with_budget(rc, q_s, zeta, cfg)
}

/// [`dpcd`] with an explicit budget `sum_k p_k varphi_k <= zeta`.
pub fn dpcd_with_budget(
    rc: &RateCoeffs,
    q_s: &[f64],
    zeta: f64,
    cfg: &SystemConfig,
) -> Result<DpcdResult> {
    let k = rc.n_d2d();
    if zeta < 0.0 || zeta.is_nan() {
        return Err(Error::InfeasibleBudget { zeta });
    }
    let prob = DpcdProblem {
        phi: &rc.phi_d,
        psi: &rc.psi_d,
        sigma: rc.sigma_d_for(q_s),
        cost: &rc.varphi_d,
        amp_cap: vec![cfg.max_power_d2d.sqrt(); k],
    };
    if zeta == 0.0 {
        let f: Vec<f64> = (0..k)
            .map(|i| {
                if prob.cost[i] > 0.0 {
                    0.0
                } else {
                    prob.amp_cap[i]
                }
            })
            .collect();
        return Ok(DpcdResult {
            p_s: f.iter().map(|a| a * a).collect(),
            state: WmmseState {
                nu: prob.receive(&f),
                w: vec![1.0; k],
                f,
                lambda: f64::INFINITY,
                zeta,
            },
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        });
    }

    // the full-power start can settle where a weak link is silenced, since
    // the rate gradient in the amplitude vanishes at zero; an equal split of
    // the budget is tried as well and the better end point is kept
    let full = prob.amp_cap.clone();
    let split: Vec<f64> = (0..k)
        .map(|i| {
            if prob.cost[i] > 0.0 {
                (zeta / (k as f64 * prob.cost[i]))
                    .sqrt()
                    .min(prob.amp_cap[i])
            } else {
                prob.amp_cap[i]
            }
        })
        .collect();
    let first = prob.wmmse(full, zeta, cfg.tol_wmmse)?;
    let second = prob.wmmse(split, zeta, cfg.tol_wmmse)?;
    Ok(
        if prob.sum_rate(&second.state.f) > prob.sum_rate(&first.state.f) {
            second
        } else {
            first
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JdpcResult {
    pub q_s: Vec<f64>,
    pub p_s: Vec<f64>,
    pub outer_iterations: usize,
    /// D2D sum spectral efficiency lower bound (with `1 - tau/T`) after each
    /// accepted step, starting from the silent-D2D point.
    pub sum_se_trace: Vec<f64>,
    pub converged: bool,
    /// DPCC iterations spent on the starting point.
    pub start_dpcc_iterations: usize,
    pub steps: Vec<JdpcStep>,
}

/// Inner solver work of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JdpcStep {
    pub dpcd_trace: Vec<DpcdIteration>,
    pub dpcc_iterations: usize,
    /// False when the step lowered the D2D sum SE and was discarded.
    pub accepted: bool,
}

/// Feasible starting point of [`jdpc`]: D2D links at full power, or at the
/// largest common fraction of it for which DPCC still meets every CU target.
pub fn jdpc_start(rc: &RateCoeffs, cfg: &SystemConfig) -> Result<(Vec<f64>, DpccResult)> {
    let k = rc.n_d2d();
    let at = |s: f64| vec![s * cfg.max_power_d2d; k];
    let full = dpcc(rc, &at(1.0), cfg)?;
    if full.feasible {
        return Ok((at(1.0), full));
    }
    let silent = dpcc(rc, &at(0.0), cfg)?;
    if !silent.feasible {
        return Err(Error::CellularInfeasible);
    }
    let (mut lo, mut hi) = ((0.0, silent), 1.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo.0 + hi);
        let r = dpcc(rc, &at(mid), cfg)?;
        if r.feasible {
            lo = (mid, r);
        } else {
            hi = mid;
        }
    }
    Ok((at(lo.0), lo.1))
}

/// Alternates [`dpcd`] (for the current CU powers) and [`dpcc`] (for the new
/// D2D powers) from [`jdpc_start`]. A step that would lower the D2D sum SE is
/// rejected and ends the loop, so the trace never decreases.
pub fn jdpc(rc: &RateCoeffs, cfg: &SystemConfig) -> Result<JdpcResult> {
    let k = rc.n_d2d();
    let (mut p, start) = jdpc_start(rc, cfg)?;
    let start_dpcc_iterations = start.iterations;
    let mut q = start.q_s;
    let mut trace = vec![rc.d2d_sum_se(&q, &p)];
    let mut steps = Vec::new();
    if k == 0 {
        return Ok(JdpcResult {
            q_s: q,
            p_s: p,
            outer_iterations: 0,
            sum_se_trace: trace,
            converged: true,
            start_dpcc_iterations,
            steps,
        });
    }
    let mut outer = 0;
    let mut converged = false;
    while outer < JDPC_MAX_OUTER {
        outer += 1;
        let d = dpcd(rc, &q, cfg)?;
        let c = dpcc(rc, &d.p_s, cfg)?;
        if !c.feasible {
            return Err(Error::CellularInfeasible);
        }
        let se = rc.d2d_sum_se(&c.q_s, &d.p_s);
        let prev = *trace.last().expect("trace starts non-empty");
        let accepted = se >= prev;
        steps.push(JdpcStep {
            dpcd_trace: d.trace,
            dpcc_iterations: c.iterations,
            accepted,
        });
        if !accepted {
            converged = true;
            break;
        }
        p = d.p_s;
        q = c.q_s;
        trace.push(se);
        if se - prev < cfg.tol_power {
            converged = true;
            break;
        }
    }
    Ok(JdpcResult {
        q_s: q,
        p_s: p,
        outer_iterations: outer,
        sum_se_trace: trace,
        converged,
        start_dpcc_iterations,
        steps,
    })
}
