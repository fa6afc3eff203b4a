//! Partial zero-forcing receivers and the rates they achieve.
//!
//! The BS and every D2D receiver spend part of their antennas nulling the
//! strongest interferers (by large-scale gain) and match the rest to the
//! desired estimate. Same-pilot D2D estimates at a common receiver are
//! collinear, so one dimension nulls a whole pilot group.
//!
//! [`link_sinrs`] evaluates the instantaneous post-filter SINR of every link
//! for one channel realization; [`rate_coeffs`] and [`rate_lower_bounds`] give
//! the closed-form lower bounds that only need large-scale information.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CVec, EstimatedChannels, EstimationCoeffs, PilotAssignment, PowerProfile};
use crate::error::{Error, Result};
use crate::scenario::{LargeScale, SystemConfig};

/// Norm below which a projected target is treated as lying in the cancelled span.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Which interferers each receiver nulls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancellationSets {
    pub pzf_bs: (usize, usize),
    pub pzf_d2d: (usize, usize),
    /// Per CU n: the other CUs nulled by the BS when detecting n.
    pub bs_cu: Vec<Vec<usize>>,
    /// D2D pilot slots nulled by the BS for every CU.
    pub bs_groups: Vec<usize>,
    /// Per D2D-Rx k: CUs it nulls.
    pub rx_cu: Vec<Vec<usize>>,
    /// Per D2D-Rx k: foreign pilot slots it nulls.
    pub rx_groups: Vec<Vec<usize>>,
}

impl CancellationSets {
    pub fn bs_cancels_cu(&self, n: usize, a: usize) -> bool {
        self.bs_cu[n].contains(&a)
    }

    pub fn bs_cancels_slot(&self, slot: usize) -> bool {
        self.bs_groups.contains(&slot)
    }

    pub fn rx_cancels_cu(&self, k: usize, n: usize) -> bool {
        self.rx_cu[k].contains(&n)
    }

    pub fn rx_cancels_slot(&self, k: usize, slot: usize) -> bool {
        self.rx_groups[k].contains(&slot)
    }
}

/// Indices of the `count` largest values; ties go to the lower index.
fn strongest(values: &[(usize, f64)], count: usize) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = v.into_iter().take(count).map(|(i, _)| i).collect();
    out.sort_unstable();
    out
}

fn check_pzf(n: usize, slots: usize, b: usize, m: usize, cfg: &SystemConfig) -> Result<()> {
    let (bc, bd) = cfg.pzf_bs;
    let (mc, md) = cfg.pzf_d2d;
    if bc + 1 > n {
        return Err(Error::InfeasiblePzf(format!("b_c={bc} > N-1={}", n - 1)));
    }
    if bd > slots {
        return Err(Error::InfeasiblePzf(format!("b_d={bd} > tau-N={slots}")));
    }
    if bc + bd + 1 > b {
        return Err(Error::InfeasiblePzf(format!(
            "b_c+b_d={} > B-1={}",
            bc + bd,
            b - 1
        )));
    }
    if mc > n {
        return Err(Error::InfeasiblePzf(format!("m_c={mc} > N={n}")));
    }
    if md + 1 > slots {
        return Err(Error::InfeasiblePzf(format!(
            "m_d={md} > tau-N-1={}",
            slots - 1
        )));
    }
    if mc + md + 1 > m {
        return Err(Error::InfeasiblePzf(format!(
            "m_c+m_d={} > M-1={}",
            mc + md,
            m - 1
        )));
    }
    Ok(())
}

/// Picks the nulled interferers by largest large-scale gain. Pilot groups are
/// ranked by the summed gain of their members.
pub fn select_cancellation(
    ls: &LargeScale,
    pa: &PilotAssignment,
    cfg: &SystemConfig,
) -> Result<CancellationSets> {
    let (n, k) = (ls.n_cu(), ls.n_d2d());
    let slots = pa.n_slots();
    check_pzf(n, slots, cfg.bs_antennas, cfg.d2drx_antennas, cfg)?;
    let (bc, bd) = cfg.pzf_bs;
    let (mc, md) = cfg.pzf_d2d;
    let groups = pa.groups();

    let bs_cu = (0..n)
        .map(|me| {
            let others: Vec<(usize, f64)> = (0..n)
                .filter(|&a| a != me)
                .map(|a| (a, ls.u_c[a]))
                .collect();
            strongest(&others, bc)
        })
        .collect();
    let slot_strength: Vec<(usize, f64)> = groups
        .iter()
        .enumerate()
        .map(|(s, g)| (s, g.iter().map(|&i| ls.u_d[i]).sum()))
        .collect();
    let bs_groups = strongest(&slot_strength, bd);

    let mut rx_cu = Vec::with_capacity(k);
    let mut rx_groups = Vec::with_capacity(k);
    for rx in 0..k {
        let cus: Vec<(usize, f64)> = (0..n).map(|a| (a, ls.v_c[a][rx])).collect();
        rx_cu.push(strongest(&cus, mc));
        let own = pa.slot(rx);
        let foreign: Vec<(usize, f64)> = groups
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != own)
            .map(|(s, g)| (s, g.iter().map(|&i| ls.v_d[i][rx]).sum()))
            .collect();
        rx_groups.push(strongest(&foreign, md));
    }

    Ok(CancellationSets {
        pzf_bs: (bc, bd),
        pzf_d2d: (mc, md),
        bs_cu,
        bs_groups,
        rx_cu,
        rx_groups,
    })
}

/// Unit-norm filter matched to `target` inside the orthogonal complement of
/// `cancelled`. With nothing cancelled this is the matched filter.
pub fn pzf_filter(target: &CVec, cancelled: &[CVec]) -> Result<CVec> {
    let mut basis: Vec<CVec> = Vec::with_capacity(cancelled.len());
    for v in cancelled {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        // two Gram-Schmidt passes keep the nulls at round-off level
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&w);
                w.axpy(-c, q, Complex64::from(1.0));
            }
        }
        let norm = w.norm();
        if norm > 1e-10 * scale {
            basis.push(w / Complex64::from(norm));
        }
    }
    let mut p = target.clone();
    for _ in 0..2 {
        for q in &basis {
            let c = q.dotc(&p);
            p.axpy(-c, q, Complex64::from(1.0));
        }
    }
    let norm = p.norm();
    if !(norm >= DEGENERATE_NORM) {
        return Err(Error::DegenerateSpan { norm });
    }
    Ok(p / Complex64::from(norm))
}

/// One member of a pilot group whose estimate is nonzero, if any.
fn representative(members: &[usize], col: impl Fn(usize) -> CVec) -> Option<CVec> {
    members.iter().map(|&i| col(i)).find(|v| v.norm() > 0.0)
}

pub fn cell_filter(
    n: usize,
    est: &EstimatedChannels,
    pa: &PilotAssignment,
    sets: &CancellationSets,
) -> Result<CVec> {
    let groups = pa.groups();
    let mut cancelled: Vec<CVec> = sets.bs_cu[n]
        .iter()
        .map(|&a| est.h_c.column(a).into_owned())
        .collect();
    for &s in &sets.bs_groups {
        if let Some(v) = representative(&groups[s], |i| est.h_d.column(i).into_owned()) {
            cancelled.push(v);
        }
    }
    pzf_filter(&est.h_c.column(n).into_owned(), &cancelled)
}

pub fn d2d_filter(
    k: usize,
    est: &EstimatedChannels,
    pa: &PilotAssignment,
    sets: &CancellationSets,
) -> Result<CVec> {
    let groups = pa.groups();
    let g_d = &est.g_d[k];
    let g_c = &est.g_c[k];
    let mut cancelled: Vec<CVec> = sets.rx_cu[k]
        .iter()
        .map(|&a| g_c.column(a).into_owned())
        .collect();
    for &s in &sets.rx_groups[k] {
        if let Some(v) = representative(&groups[s], |i| g_d.column(i).into_owned()) {
            cancelled.push(v);
        }
    }
    pzf_filter(&g_d.column(k).into_owned(), &cancelled)
}

/// Signal and interference powers after the receive filter of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrTerms {
    pub signal: f64,
    /// Uncancelled same-type interference on estimated channels, excluding
    /// same-pilot D2D interferers.
    pub intra: f64,
    /// Uncancelled cross-type interference on estimated channels.
    pub cross: f64,
    /// Same-pilot D2D interference; always zero for cellular links.
    pub contamination: f64,
    /// Estimation-error plus noise power (the filter has unit norm).
    pub alpha: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        self.signal / (self.intra + self.cross + self.contamination + self.alpha)
    }
}

fn gain(beta: &CVec, v: nalgebra::DVectorView<'_, Complex64>) -> f64 {
    beta.dotc(&v).norm_sqr()
}

pub fn cell_alpha(coeffs: &EstimationCoeffs, ls: &LargeScale, pp: &PowerProfile, n0: f64) -> f64 {
    let cu: f64 = (0..ls.n_cu())
        .map(|a| pp.q_s[a] * ls.u_c[a] * coeffs.eps_c[a])
        .sum();
    let d2d: f64 = (0..ls.n_d2d())
        .map(|i| pp.p_s[i] * ls.u_d[i] * coeffs.eps_d[i])
        .sum();
    cu + d2d + n0
}

pub fn d2d_alpha(
    k: usize,
    coeffs: &EstimationCoeffs,
    ls: &LargeScale,
    pp: &PowerProfile,
    n0: f64,
) -> f64 {
    let d2d: f64 = (0..ls.n_d2d())
        .map(|i| pp.p_s[i] * ls.v_d[i][k] * coeffs.eps_dd[i][k])
        .sum();
    let cu: f64 = (0..ls.n_cu())
        .map(|a| pp.q_s[a] * ls.v_c[a][k] * coeffs.eps_cd[a][k])
        .sum();
    d2d + cu + n0
}

/// Terms of the cellular SINR for a given filter.
#[allow(clippy::too_many_arguments)]
pub fn cell_terms_with_filter(
    n: usize,
    beta: &CVec,
    est: &EstimatedChannels,
    pa: &PilotAssignment,
    ls: &LargeScale,
    pp: &PowerProfile,
    sets: &CancellationSets,
    alpha: f64,
) -> SinrTerms {
    let signal = pp.q_s[n] * ls.u_c[n] * gain(beta, est.h_c.column(n));
    let intra = (0..ls.n_cu())
        .filter(|&a| a != n && !sets.bs_cancels_cu(n, a))
        .map(|a| pp.q_s[a] * ls.u_c[a] * gain(beta, est.h_c.column(a)))
        .sum();
    let cross = (0..ls.n_d2d())
        .filter(|&i| !sets.bs_cancels_slot(pa.slot(i)))
        .map(|i| pp.p_s[i] * ls.u_d[i] * gain(beta, est.h_d.column(i)))
        .sum();
    SinrTerms {
        signal,
        intra,
        cross,
        contamination: 0.0,
        alpha,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn d2d_terms_with_filter(
    k: usize,
    beta: &CVec,
    est: &EstimatedChannels,
    pa: &PilotAssignment,
    ls: &LargeScale,
    pp: &PowerProfile,
    sets: &CancellationSets,
    alpha: f64,
) -> SinrTerms {
    let g_d = &est.g_d[k];
    let g_c = &est.g_c[k];
    let signal = pp.p_s[k] * ls.v_d[k][k] * gain(beta, g_d.column(k));
    let mut intra = 0.0;
    let mut contamination = 0.0;
    for i in (0..ls.n_d2d()).filter(|&i| i != k) {
        let power = pp.p_s[i] * ls.v_d[i][k] * gain(beta, g_d.column(i));
        if pa.same_pilot(i, k) {
            contamination += power;
        } else if !sets.rx_cancels_slot(k, pa.slot(i)) {
            intra += power;
        }
    }
    let cross = (0..ls.n_cu())
        .filter(|&a| !sets.rx_cancels_cu(k, a))
        .map(|a| pp.q_s[a] * ls.v_c[a][k] * gain(beta, g_c.column(a)))
        .sum();
    SinrTerms {
        signal,
        intra,
        cross,
        contamination,
        alpha,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cell_sinr_terms(
    n: usize,
    est: &EstimatedChannels,
    coeffs: &EstimationCoeffs,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    sets: &CancellationSets,
    cfg: &SystemConfig,
) -> Result<SinrTerms> {
    let beta = cell_filter(n, est, pa, sets)?;
    let alpha = cell_alpha(coeffs, ls, pp, cfg.noise_power);
    Ok(cell_terms_with_filter(
        n, &beta, est, pa, ls, pp, sets, alpha,
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn d2d_sinr_terms(
    k: usize,
    est: &EstimatedChannels,
    coeffs: &EstimationCoeffs,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    sets: &CancellationSets,
    cfg: &SystemConfig,
) -> Result<SinrTerms> {
    let beta = d2d_filter(k, est, pa, sets)?;
    let alpha = d2d_alpha(k, coeffs, ls, pp, cfg.noise_power);
    Ok(d2d_terms_with_filter(
        k, &beta, est, pa, ls, pp, sets, alpha,
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn instantaneous_sinr_cell(
    n: usize,
    est: &EstimatedChannels,
    coeffs: &EstimationCoeffs,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    sets: &CancellationSets,
    cfg: &SystemConfig,
) -> Result<f64> {
    Ok(cell_sinr_terms(n, est, coeffs, ls, pa, pp, sets, cfg)?.sinr())
}

#[allow(clippy::too_many_arguments)]
pub fn instantaneous_sinr_d2d(
    k: usize,
    est: &EstimatedChannels,
    coeffs: &EstimationCoeffs,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    sets: &CancellationSets,
    cfg: &SystemConfig,
) -> Result<f64> {
    Ok(d2d_sinr_terms(k, est, coeffs, ls, pa, pp, sets, cfg)?.sinr())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSinrs {
    pub cell: Vec<f64>,
    pub d2d: Vec<f64>,
}

impl LinkSinrs {
    /// Instantaneous rates `(1 - tau/T) log2(1 + sinr)`.
    pub fn rates(&self, cfg: &SystemConfig) -> (Vec<f64>, Vec<f64>) {
        let f = cfg.data_fraction();
        let r = |v: &[f64]| v.iter().map(|s| f * (1.0 + s).log2()).collect();
        (r(&self.cell), r(&self.d2d))
    }
}

/// Every link's instantaneous SINR for one realization.
#[allow(clippy::too_many_arguments)]
pub fn link_sinrs(
    est: &EstimatedChannels,
    coeffs: &EstimationCoeffs,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    sets: &CancellationSets,
    cfg: &SystemConfig,
) -> Result<LinkSinrs> {
    let alpha_c = cell_alpha(coeffs, ls, pp, cfg.noise_power);
    let cell = (0..ls.n_cu())
        .map(|n| {
            let beta = cell_filter(n, est, pa, sets)?;
            Ok(cell_terms_with_filter(n, &beta, est, pa, ls, pp, sets, alpha_c).sinr())
        })
        .collect::<Result<Vec<_>>>()?;
    let d2d = (0..ls.n_d2d())
        .map(|k| {
            let beta = d2d_filter(k, est, pa, sets)?;
            let alpha = d2d_alpha(k, coeffs, ls, pp, cfg.noise_power);
            Ok(d2d_terms_with_filter(k, &beta, est, pa, ls, pp, sets, alpha).sinr())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkSinrs { cell, d2d })
}

/// Large-scale aggregates of the closed-form SINR lower bounds.
///
/// The power-independent parts are stored once; `sigma_c` and `sigma_d` are
/// evaluated at the powers the coefficients were built with and can be
/// re-evaluated for other powers with [`RateCoeffs::sigma_c_for`] and
/// [`RateCoeffs::sigma_d_for`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCoeffs {
    pub phi_c: Vec<f64>,
    /// `[a][n]`: weight of CU a's power in the interference seen by CU n.
    pub varphi_c: Vec<Vec<f64>>,
    /// Weight of D2D-Tx i's power in the BS interference.
    pub varphi_d: Vec<f64>,
    pub sigma_c: f64,
    pub phi_d: Vec<f64>,
    /// `[i][k]`: weight of D2D-Tx i's power in the interference at D2D-Rx k.
    pub psi_d: Vec<Vec<f64>>,
    pub sigma_d: Vec<f64>,
    /// `[n][k]`: weight of CU n's power in `sigma_d[k]`.
    pub cu_to_rx: Vec<Vec<f64>>,
    pub noise: f64,
    /// `1 - tau/T`.
    pub data_fraction: f64,
}

impl RateCoeffs {
    pub fn n_cu(&self) -> usize {
        self.phi_c.len()
    }

    pub fn n_d2d(&self) -> usize {
        self.phi_d.len()
    }

    pub fn sigma_c_for(&self, p_s: &[f64]) -> f64 {
        p_s.iter()
            .zip(&self.varphi_d)
            .map(|(p, w)| p * w)
            .sum::<f64>()
            + self.noise
    }

    pub fn sigma_d_for(&self, q_s: &[f64]) -> Vec<f64> {
        (0..self.n_d2d())
            .map(|k| {
                q_s.iter()
                    .enumerate()
                    .map(|(n, q)| q * self.cu_to_rx[n][k])
                    .sum::<f64>()
                    + self.noise
            })
            .collect()
    }

    /// Re-evaluates the power-dependent `sigma` terms.
    pub fn set_powers(&mut self, q_s: &[f64], p_s: &[f64]) {
        self.sigma_c = self.sigma_c_for(p_s);
        self.sigma_d = self.sigma_d_for(q_s);
    }

    pub fn cell_sinr_lb(&self, q_s: &[f64], p_s: &[f64]) -> Vec<f64> {
        let sigma = self.sigma_c_for(p_s);
        (0..self.n_cu())
            .map(|n| {
                let interference: f64 =
                    (0..self.n_cu()).map(|a| q_s[a] * self.varphi_c[a][n]).sum();
                q_s[n] * self.phi_c[n] / (interference + sigma)
            })
            .collect()
    }

    pub fn d2d_sinr_lb(&self, q_s: &[f64], p_s: &[f64]) -> Vec<f64> {
        let sigma = self.sigma_d_for(q_s);
        (0..self.n_d2d())
            .map(|k| {
                let interference: f64 = (0..self.n_d2d()).map(|i| p_s[i] * self.psi_d[i][k]).sum();
                p_s[k] * self.phi_d[k] / (interference + sigma[k])
            })
            .collect()
    }

    /// D2D sum of `log2(1 + sinr_lb)`, without the pilot-overhead prefactor.
    pub fn d2d_sum_log_rate(&self, q_s: &[f64], p_s: &[f64]) -> f64 {
        self.d2d_sinr_lb(q_s, p_s)
            .iter()
            .map(|s| (1.0 + s).log2())
            .sum()
    }

    /// D2D sum spectral efficiency lower bound including `1 - tau/T`.
    pub fn d2d_sum_se(&self, q_s: &[f64], p_s: &[f64]) -> f64 {
        self.data_fraction * self.d2d_sum_log_rate(q_s, p_s)
    }
}

pub fn rate_coeffs(
    ls: &LargeScale,
    pa: &PilotAssignment,
    coeffs: &EstimationCoeffs,
    sets: &CancellationSets,
    pp: &PowerProfile,
    cfg: &SystemConfig,
) -> Result<RateCoeffs> {
    let (n, k) = (ls.n_cu(), ls.n_d2d());
    let (bc, bd) = sets.pzf_bs;
    let (mc, md) = sets.pzf_d2d;
    if cfg.bs_antennas <= bc + bd + 1 {
        return Err(Error::InfeasiblePzf(format!(
            "bound needs B > b_c+b_d+1, got B={} and b_c+b_d={}",
            cfg.bs_antennas,
            bc + bd
        )));
    }
    if cfg.d2drx_antennas <= mc + md + 1 {
        return Err(Error::InfeasiblePzf(format!(
            "bound needs M > m_c+m_d+1, got M={} and m_c+m_d={}",
            cfg.d2drx_antennas,
            mc + md
        )));
    }
    let bs_dof = (cfg.bs_antennas - bc - bd - 1) as f64;
    let rx_dof = (cfg.d2drx_antennas - mc - md - 1) as f64;

    let phi_c = (0..n)
        .map(|a| bs_dof * ls.u_c[a] * coeffs.delta_c[a])
        .collect();
    let varphi_c = (0..n)
        .map(|a| {
            (0..n)
                .map(|me| {
                    if a == me || sets.bs_cancels_cu(me, a) {
                        ls.u_c[a] * coeffs.eps_c[a]
                    } else {
                        ls.u_c[a]
                    }
                })
                .collect()
        })
        .collect();
    let varphi_d = (0..k)
        .map(|i| {
            if sets.bs_cancels_slot(pa.slot(i)) {
                ls.u_d[i] * coeffs.eps_d[i]
            } else {
                ls.u_d[i]
            }
        })
        .collect();

    let phi_d = (0..k)
        .map(|rx| rx_dof * ls.v_d[rx][rx] * coeffs.mu_d[rx][rx])
        .collect();
    let psi_d = (0..k)
        .map(|i| {
            (0..k)
                .map(|rx| {
                    let v = ls.v_d[i][rx];
                    let err = v * coeffs.eps_dd[i][rx];
                    if i == rx || sets.rx_cancels_slot(rx, pa.slot(i)) {
                        err
                    } else if pa.same_pilot(i, rx) {
                        rx_dof * v * coeffs.mu_d[i][rx] + err
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let cu_to_rx = (0..n)
        .map(|a| {
            (0..k)
                .map(|rx| {
                    if sets.rx_cancels_cu(rx, a) {
                        ls.v_c[a][rx] * coeffs.eps_cd[a][rx]
                    } else {
                        ls.v_c[a][rx]
                    }
                })
                .collect()
        })
        .collect();

    let mut rc = RateCoeffs {
        phi_c,
        varphi_c,
        varphi_d,
        sigma_c: 0.0,
        phi_d,
        psi_d,
        sigma_d: Vec::new(),
        cu_to_rx,
        noise: cfg.noise_power,
        data_fraction: cfg.data_fraction(),
    };
    rc.set_powers(&pp.q_s, &pp.p_s);
    Ok(rc)
}

/// Closed-form SINR lower bounds and the rates `(1 - tau/T) log2(1 + sinr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub cell_sinr: Vec<f64>,
    pub d2d_sinr: Vec<f64>,
    pub cell: Vec<f64>,
    pub d2d: Vec<f64>,
}

impl RateBounds {
    pub fn cell_sum(&self) -> f64 {
        self.cell.iter().sum()
    }

    pub fn d2d_sum(&self) -> f64 {
        self.d2d.iter().sum()
    }
}

pub fn rate_lower_bounds(rc: &RateCoeffs, pp: &PowerProfile, cfg: &SystemConfig) -> RateBounds {
    let f = cfg.data_fraction();
    let cell_sinr = rc.cell_sinr_lb(&pp.q_s, &pp.p_s);
    let d2d_sinr = rc.d2d_sinr_lb(&pp.q_s, &pp.p_s);
    let rate = |v: &[f64]| v.iter().map(|s| f * (1.0 + s).log2()).collect();
    RateBounds {
        cell: rate(&cell_sinr),
        d2d: rate(&d2d_sinr),
        cell_sinr,
        d2d_sinr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{estimation_coeffs, CMat};
    use crate::scenario::Scenario;

    fn cv(v: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(v.len(), v.iter().map(|&(r, i)| Complex64::new(r, i)))
    }

    #[test]
    fn matched_filter_without_cancellation() {
        let h = cv(&[(1.0, 2.0), (-0.5, 0.0), (3.0, -1.0)]);
        let beta = pzf_filter(&h, &[]).unwrap();
        assert!((beta - &h / Complex64::from(h.norm())).norm() < 1e-15);
    }

    #[test]
    fn hand_projection() {
        let e1 = cv(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let target = cv(&[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        let beta = pzf_filter(&target, &[e1]).unwrap();
        assert!((beta - cv(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)])).norm() < 1e-15);
    }

    #[test]
    fn target_inside_span_is_degenerate() {
        let a = cv(&[(1.0, 0.0), (0.0, 1.0)]);
        let b = cv(&[(0.0, 1.0), (1.0, 0.0)]);
        let target = cv(&[(2.0, 1.0), (0.0, 3.0)]);
        assert!(matches!(
            pzf_filter(&target, &[a, b]),
            Err(Error::DegenerateSpan { .. })
        ));
    }

    #[test]
    fn collinear_cancelled_vectors_use_one_dimension() {
        let a = cv(&[(1.0, 0.0), (0.0, 1.0), (0.0, 0.0)]);
        let a2 = &a * Complex64::new(0.0, -3.0);
        let target = cv(&[(1.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        let beta = pzf_filter(&target, &[a.clone(), a2]).unwrap();
        let beta1 = pzf_filter(&target, &[a]).unwrap();
        assert!((beta - beta1).norm() < 1e-14);
    }

    #[test]
    fn top_b_selection_by_inspection() {
        let cfg = SystemConfig {
            n_cu: 3,
            n_d2d: 2,
            pilot_len: 4,
            pzf_bs: (1, 0),
            pzf_d2d: (0, 0),
            ..SystemConfig::default()
        };
        let ls = LargeScale {
            u_c: vec![3.0, 2.0, 1.0],
            u_d: vec![1.0, 1.0],
            v_c: vec![vec![1.0; 2]; 3],
            v_d: vec![vec![1.0; 2]; 2],
        };
        let pa = PilotAssignment::round_robin(&cfg);
        let sets = select_cancellation(&ls, &pa, &cfg).unwrap();
        assert_eq!(sets.bs_cu, vec![vec![1], vec![0], vec![0]]);
    }

    #[test]
    fn mrc_and_full_zf_extremes() {
        let mut cfg = SystemConfig {
            n_cu: 3,
            n_d2d: 6,
            pilot_len: 6,
            pzf_bs: (0, 0),
            pzf_d2d: (0, 0),
            ..SystemConfig::default()
        };
        let s = Scenario::generate(&cfg).unwrap();
        let pa = PilotAssignment::round_robin(&cfg);
        let sets = select_cancellation(&s.large_scale, &pa, &cfg).unwrap();
        assert!(sets.bs_cu.iter().all(|v| v.is_empty()) && sets.bs_groups.is_empty());
        assert!(
            sets.rx_cu.iter().all(|v| v.is_empty()) && sets.rx_groups.iter().all(|v| v.is_empty())
        );

        cfg.pzf_bs = cfg.full_zf_bs();
        cfg.pzf_d2d = (3, 2);
        let sets = select_cancellation(&s.large_scale, &pa, &cfg).unwrap();
        for (n, c) in sets.bs_cu.iter().enumerate() {
            assert_eq!(c.len(), 2);
            assert!(!c.contains(&n));
        }
        assert_eq!(sets.bs_groups, vec![0, 1, 2]);
        for k in 0..6 {
            assert_eq!(sets.rx_cu[k], vec![0, 1, 2]);
            assert_eq!(sets.rx_groups[k].len(), 2);
            assert!(!sets.rx_groups[k].contains(&pa.slot(k)));
        }
    }

    #[test]
    fn infeasible_pzf_is_rejected() {
        let cfg = SystemConfig {
            n_cu: 3,
            n_d2d: 6,
            pilot_len: 6,
            pzf_bs: (0, 0),
            pzf_d2d: (0, 3),
            ..SystemConfig::default()
        };
        let s = Scenario::generate(&SystemConfig {
            pzf_d2d: (0, 0),
            ..cfg.clone()
        })
        .unwrap();
        let pa = PilotAssignment::round_robin(&cfg);
        let err = select_cancellation(&s.large_scale, &pa, &cfg).unwrap_err();
        assert!(err.to_string().contains("m_d=3"), "{err}");
    }

    #[test]
    fn tau_equal_t_or_zero_power_gives_zero_rate() {
        let cfg = SystemConfig {
            n_cu: 2,
            n_d2d: 3,
            pilot_len: 4,
            coherence_len: 4,
            pzf_bs: (1, 1),
            pzf_d2d: (1, 1),
            ..SystemConfig::default()
        };
        let s = Scenario::generate(&cfg).unwrap();
        let pa = PilotAssignment::round_robin(&cfg);
        let pp = PowerProfile::full(&cfg);
        let coeffs = estimation_coeffs(&s.large_scale, &pa, &pp, cfg.noise_power).unwrap();
        let sets = select_cancellation(&s.large_scale, &pa, &cfg).unwrap();
        let rc = rate_coeffs(&s.large_scale, &pa, &coeffs, &sets, &pp, &cfg).unwrap();
        let rb = rate_lower_bounds(&rc, &pp, &cfg);
        assert!(rb.cell.iter().chain(&rb.d2d).all(|&r| r == 0.0));

        let cfg = SystemConfig {
            coherence_len: 50,
            ..cfg
        };
        let silent = PowerProfile {
            q_s: vec![0.0; 2],
            p_s: vec![0.0; 3],
            ..pp
        };
        let rb = rate_lower_bounds(&rc, &silent, &cfg);
        assert!(rb.cell.iter().chain(&rb.d2d).all(|&r| r == 0.0));
    }

    #[test]
    fn perfect_csi_full_zf_coefficients() {
        let cfg = SystemConfig {
            n_cu: 2,
            n_d2d: 2,
            pilot_len: 4,
            pzf_bs: (1, 2),
            pzf_d2d: (0, 1),
            ..SystemConfig::default()
        };
        let ls = LargeScale {
            u_c: vec![1e-8, 2e-8],
            u_d: vec![3e-8, 4e-8],
            v_c: vec![vec![1e-8; 2]; 2],
            v_d: vec![vec![1e-6, 1e-9], vec![1e-9, 1e-6]],
        };
        let pa = PilotAssignment::round_robin(&cfg);
        let pp = PowerProfile::full(&cfg);
        let mut coeffs = estimation_coeffs(&ls, &pa, &pp, cfg.noise_power).unwrap();
        for e in coeffs.eps_c.iter_mut().chain(coeffs.eps_d.iter_mut()) {
            *e = 0.0;
        }
        coeffs.delta_c = vec![1.0; 2];
        let sets = select_cancellation(&ls, &pa, &cfg).unwrap();
        let rc = rate_coeffs(&ls, &pa, &coeffs, &sets, &pp, &cfg).unwrap();
        assert!(rc.varphi_c.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(rc.sigma_c, cfg.noise_power);
    }

    #[test]
    fn same_pilot_psi_exceeds_error_term() {
        let cfg = SystemConfig {
            n_cu: 2,
            n_d2d: 4,
            pilot_len: 4,
            pzf_bs: (1, 1),
            pzf_d2d: (1, 1),
            ..SystemConfig::default()
        };
        let s = Scenario::generate(&cfg).unwrap();
        let ls = &s.large_scale;
        let pa = PilotAssignment::round_robin(&cfg);
        let pp = PowerProfile::full(&cfg);
        let coeffs = estimation_coeffs(ls, &pa, &pp, cfg.noise_power).unwrap();
        let sets = select_cancellation(ls, &pa, &cfg).unwrap();
        let rc = rate_coeffs(ls, &pa, &coeffs, &sets, &pp, &cfg).unwrap();
        let dof = (cfg.d2drx_antennas - 3) as f64;
        for k in 0..4 {
            for i in pa.group_of(k).into_iter().filter(|&i| i != k) {
                let err = ls.v_d[i][k] * coeffs.eps_dd[i][k];
                let expected = dof * ls.v_d[i][k] * coeffs.mu_d[i][k] + err;
                assert!((rc.psi_d[i][k] - expected).abs() <= 1e-15 * expected);
                assert!(rc.psi_d[i][k] > err);
            }
        }
        for a in 0..2 {
            for n in 0..2 {
                assert!(rc.varphi_c[a][n] <= ls.u_c[a]);
            }
        }
    }

    #[test]
    fn bound_requires_spare_dimensions() {
        let cfg = SystemConfig {
            n_cu: 2,
            n_d2d: 4,
            pilot_len: 4,
            d2drx_antennas: 3,
            pzf_bs: (1, 1),
            pzf_d2d: (1, 1),
            ..SystemConfig::default()
        };
        let s = Scenario::generate(&SystemConfig {
            pzf_d2d: (0, 0),
            ..cfg.clone()
        })
        .unwrap();
        let pa = PilotAssignment::round_robin(&cfg);
        let pp = PowerProfile::full(&cfg);
        let coeffs = estimation_coeffs(&s.large_scale, &pa, &pp, cfg.noise_power).unwrap();
        let sets = select_cancellation(&s.large_scale, &pa, &cfg).unwrap();
        assert!(rate_coeffs(&s.large_scale, &pa, &coeffs, &sets, &pp, &cfg).is_err());
    }

    #[test]
    fn single_cu_perfect_estimation_sinr() {
        let cfg = SystemConfig {
            n_cu: 1,
            n_d2d: 1,
            pilot_len: 2,
            bs_antennas: 4,
            d2drx_antennas: 2,
            pzf_bs: (0, 0),
            pzf_d2d: (0, 0),
            ..SystemConfig::default()
        };
        let ls = LargeScale {
            u_c: vec![2e-9],
            u_d: vec![0.0],
            v_c: vec![vec![0.0]],
            v_d: vec![vec![5e-7]],
        };
        let pa = PilotAssignment::round_robin(&cfg);
        let pp = PowerProfile::full(&cfg);
        let mut coeffs = estimation_coeffs(&ls, &pa, &pp, cfg.noise_power).unwrap();
        coeffs.eps_c = vec![0.0];
        coeffs.eps_dd = vec![vec![0.0]];
        let h = CMat::from_fn(4, 1, |r, _| Complex64::new(r as f64 + 1.0, -0.5));
        let g = CMat::from_fn(2, 1, |r, _| Complex64::new(0.3, r as f64));
        let est = EstimatedChannels {
            h_c: h.clone(),
            h_d: CMat::zeros(4, 1),
            g_d: vec![g.clone()],
            g_c: vec![CMat::zeros(2, 1)],
        };
        let sets = select_cancellation(&ls, &pa, &cfg).unwrap();
        let eta = instantaneous_sinr_cell(0, &est, &coeffs, &ls, &pa, &pp, &sets, &cfg).unwrap();
        let expected = pp.q_s[0] * ls.u_c[0] * h.norm_squared() / cfg.noise_power;
        assert!((eta - expected).abs() <= 1e-12 * expected);
        let eta = instantaneous_sinr_d2d(0, &est, &coeffs, &ls, &pa, &pp, &sets, &cfg).unwrap();
        let expected = pp.p_s[0] * ls.v_d[0][0] * g.norm_squared() / cfg.noise_power;
        assert!((eta - expected).abs() <= 1e-12 * expected);
    }
}
