//! Fast fading, the pilot phase, and MMSE channel estimation.
//!
//! Two routes to estimation quality live here. [`estimation_coeffs`] gives the
//! closed-form variances of every estimate and error, which is what the
//! optimizers consume. [`draw_fast_fading`], [`simulate_pilot_phase`] and
//! [`mmse_estimate`] run the actual pilot transmission and linear MMSE
//! estimator so the closed forms can be checked against sampled estimates.
//!
//! Indexing convention for D2D links: entry `[i][k]` always means the link from
//! transmitter `i` to D2D receiver `k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scenario::{LargeScale, SystemConfig};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// One draw from CN(0, var).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn random_cmat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // column-major fill order, fixed so realizations are reproducible
    let mut m = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_normal(rng, var);
        }
    }
    m
}

/// Which of the `tau - N` D2D pilots each pair uses.
///
/// Slots are zero based; slot `t` is column `N + t` of the pilot matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PilotAssignment {
    n_cu: usize,
    n_slots: usize,
    slot: Vec<usize>,
}

impl PilotAssignment {
    pub fn new(n_cu: usize, pilot_len: usize, slot: Vec<usize>) -> Result<Self> {
        if pilot_len <= n_cu {
            return Err(Error::InvalidInput("no pilots left for D2D pairs".into()));
        }
        let n_slots = pilot_len - n_cu;
        if let Some(&bad) = slot.iter().find(|&&s| s >= n_slots) {
            return Err(Error::InvalidInput(format!(
                "pilot slot {bad} out of range 0..{n_slots}"
            )));
        }
        Ok(PilotAssignment {
            n_cu,
            n_slots,
            slot,
        })
    }

    /// Pair `k` on slot `k mod (tau - N)`.
    pub fn round_robin(cfg: &SystemConfig) -> Self {
        let n_slots = cfg.d2d_pilots();
        PilotAssignment {
            n_cu: cfg.n_cu,
            n_slots,
            slot: (0..cfg.n_d2d).map(|k| k % n_slots).collect(),
        }
    }

    pub fn n_d2d(&self) -> usize {
        self.slot.len()
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn pilot_len(&self) -> usize {
        self.n_cu + self.n_slots
    }

    pub fn slot(&self, k: usize) -> usize {
        self.slot[k]
    }

    pub fn slots(&self) -> &[usize] {
        &self.slot
    }

    /// Column of the pilot matrix used by pair `k`.
    pub fn pilot_column(&self, k: usize) -> usize {
        self.n_cu + self.slot[k]
    }

    /// Pairs sharing the pilot of pair `k`, including `k`.
    pub fn group_of(&self, k: usize) -> Vec<usize> {
        let s = self.slot[k];
        (0..self.slot.len())
            .filter(|&i| self.slot[i] == s)
            .collect()
    }

    pub fn same_pilot(&self, i: usize, k: usize) -> bool {
        self.slot[i] == self.slot[k]
    }

    /// Members of every slot, indexed by slot (possibly empty).
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.n_slots];
        for (k, &s) in self.slot.iter().enumerate() {
            g[s].push(k);
        }
        g
    }

    /// The `(tau - N) x K` binary reuse pattern.
    pub fn binary_matrix(&self) -> Vec<Vec<u8>> {
        let mut o = vec![vec![0u8; self.slot.len()]; self.n_slots];
        for (k, &s) in self.slot.iter().enumerate() {
            o[s][k] = 1;
        }
        o
    }

    /// One-based absolute pilot indices, `N+1 ..= tau`.
    pub fn pilot_indices(&self) -> Vec<usize> {
        self.slot.iter().map(|s| self.n_cu + s + 1).collect()
    }

    pub fn from_pilot_indices(n_cu: usize, pilot_len: usize, indices: &[usize]) -> Result<Self> {
        let slot = indices
            .iter()
            .map(|&p| {
                if p <= n_cu || p > pilot_len {
                    Err(Error::InvalidInput(format!(
                        "pilot index {p} outside {}..={pilot_len}",
                        n_cu + 1
                    )))
                } else {
                    Ok(p - n_cu - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_cu, pilot_len, slot)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.pilot_indices()).expect("vector of integers")
    }

    pub fn from_json(n_cu: usize, pilot_len: usize, text: &str) -> Result<Self> {
        let idx: Vec<usize> = serde_json::from_str(text)?;
        Self::from_pilot_indices(n_cu, pilot_len, &idx)
    }
}

/// Pilot and data transmit powers in mW. Pilot entries are energies over the
/// `tau` pilot symbols, so their cap is `tau` times the data cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub q_p: Vec<f64>,
    pub p_p: Vec<f64>,
    pub q_s: Vec<f64>,
    pub p_s: Vec<f64>,
}

impl PowerProfile {
    /// Every transmitter at full power, pilots at `tau * P`.
    pub fn full(cfg: &SystemConfig) -> Self {
        let tau = cfg.pilot_len as f64;
        PowerProfile {
            q_p: vec![tau * cfg.max_power_cu; cfg.n_cu],
            p_p: vec![tau * cfg.max_power_d2d; cfg.n_d2d],
            q_s: vec![cfg.max_power_cu; cfg.n_cu],
            p_s: vec![cfg.max_power_d2d; cfg.n_d2d],
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let tau = cfg.pilot_len as f64;
        let checks: [(&str, &[f64], usize, f64); 4] = [
            ("q_p", &self.q_p, cfg.n_cu, tau * cfg.max_power_cu),
            ("p_p", &self.p_p, cfg.n_d2d, tau * cfg.max_power_d2d),
            ("q_s", &self.q_s, cfg.n_cu, cfg.max_power_cu),
            ("p_s", &self.p_s, cfg.n_d2d, cfg.max_power_d2d),
        ];
        for (name, v, len, cap) in checks {
            if v.len() != len {
                return Err(Error::InvalidInput(format!(
                    "{name} has length {}, expected {len}",
                    v.len()
                )));
            }
            // small slack for caps computed in a different order
            if let Some(x) = v.iter().find(|&&x| !(x >= 0.0 && x <= cap * (1.0 + 1e-12))) {
                return Err(Error::InvalidInput(format!(
                    "{name} entry {x} outside [0, {cap}]"
                )));
            }
        }
        Ok(())
    }
}

/// True fast-fading channels of one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// B x N, column n is CU n to BS.
    pub h_c: CMat,
    /// B x K, column i is D2D-Tx i to BS.
    pub h_d: CMat,
    /// Slab k is M x K; column i is D2D-Tx i to D2D-Rx k.
    pub g_d: Vec<CMat>,
    /// Slab k is M x N; column n is CU n to D2D-Rx k.
    pub g_c: Vec<CMat>,
}

/// Channel estimates, same layout as [`ChannelRealization`].
pub type EstimatedChannels = ChannelRealization;

pub fn draw_fast_fading(cfg: &SystemConfig, rng: &mut StreamRng) -> ChannelRealization {
    let (n, k, b, m) = (cfg.n_cu, cfg.n_d2d, cfg.bs_antennas, cfg.d2drx_antennas);
    let h_c = random_cmat(rng, b, n, 1.0);
    let h_d = random_cmat(rng, b, k, 1.0);
    let g_d = (0..k).map(|_| random_cmat(rng, m, k, 1.0)).collect();
    let g_c = (0..k).map(|_| random_cmat(rng, m, n, 1.0)).collect();
    ChannelRealization { h_c, h_d, g_d, g_c }
}

/// The `tau x tau` pilot matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    omega: CMat,
}

impl PilotBook {
    pub fn identity(tau: usize) -> Self {
        PilotBook {
            omega: CMat::identity(tau, tau),
        }
    }

    /// Unitary DFT basis; any unitary basis gives the same estimator statistics.
    pub fn dft(tau: usize) -> Self {
        let scale = 1.0 / (tau as f64).sqrt();
        let omega = CMat::from_fn(tau, tau, |r, c| {
            let phase = -std::f64::consts::TAU * (r * c) as f64 / tau as f64;
            Complex64::from_polar(scale, phase)
        });
        PilotBook { omega }
    }

    pub fn len(&self) -> usize {
        self.omega.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.ncols() == 0
    }

    pub fn column(&self, t: usize) -> CVec {
        self.omega.column(t).into_owned()
    }

    pub fn matrix(&self) -> &CMat {
        &self.omega
    }
}

/// Received pilot signals: `y_c` is B x tau, slab `y_d[k]` is M x tau.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPilots {
    pub y_c: CMat,
    pub y_d: Vec<CMat>,
}

/// Superposes every transmitter's pilot on the BS and on each D2D-Rx and adds
/// noise of variance `cfg.noise_power`.
pub fn simulate_pilot_phase(
    real: &ChannelRealization,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    cfg: &SystemConfig,
    book: &PilotBook,
    noise_rng: &mut StreamRng,
) -> ReceivedPilots {
    let (n, k) = (cfg.n_cu, cfg.n_d2d);
    let tau = book.len();
    let omega_h: Vec<_> = (0..tau).map(|t| book.column(t).adjoint()).collect();

    let mut y_c = CMat::zeros(cfg.bs_antennas, tau);
    for cu in 0..n {
        let amp = (pp.q_p[cu] * ls.u_c[cu]).sqrt();
        y_c += (real.h_c.column(cu) * &omega_h[cu]) * Complex64::from(amp);
    }
    for i in 0..k {
        let amp = (pp.p_p[i] * ls.u_d[i]).sqrt();
        y_c += (real.h_d.column(i) * &omega_h[pa.pilot_column(i)]) * Complex64::from(amp);
    }
    y_c += random_cmat(noise_rng, cfg.bs_antennas, tau, cfg.noise_power);

    let y_d = (0..k)
        .map(|rx| {
            let mut y = CMat::zeros(cfg.d2drx_antennas, tau);
            for cu in 0..n {
                let amp = (pp.q_p[cu] * ls.v_c[cu][rx]).sqrt();
                y += (real.g_c[rx].column(cu) * &omega_h[cu]) * Complex64::from(amp);
            }
            for i in 0..k {
                let amp = (pp.p_p[i] * ls.v_d[i][rx]).sqrt();
                y += (real.g_d[rx].column(i) * &omega_h[pa.pilot_column(i)]) * Complex64::from(amp);
            }
            y + random_cmat(noise_rng, cfg.d2drx_antennas, tau, cfg.noise_power)
        })
        .collect();

    ReceivedPilots { y_c, y_d }
}

fn mmse_gain(power_gain: f64, denom: f64) -> f64 {
    if power_gain == 0.0 {
        0.0
    } else {
        power_gain.sqrt() / denom
    }
}

/// Linear MMSE estimates of every channel from the received pilots.
pub fn mmse_estimate(
    y: &ReceivedPilots,
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    cfg: &SystemConfig,
    book: &PilotBook,
) -> EstimatedChannels {
    let (n, k) = (cfg.n_cu, cfg.n_d2d);
    let n0 = cfg.noise_power;
    let groups = pa.groups();
    let project = |ymat: &CMat, col: usize| -> CVec { ymat * book.column(col) };

    let mut h_c = CMat::zeros(cfg.bs_antennas, n);
    for cu in 0..n {
        let x = pp.q_p[cu] * ls.u_c[cu];
        let c = mmse_gain(x, x + n0);
        h_c.set_column(cu, &(project(&y.y_c, cu) * Complex64::from(c)));
    }

    let mut h_d = CMat::zeros(cfg.bs_antennas, k);
    for i in 0..k {
        let denom: f64 = groups[pa.slot(i)]
            .iter()
            .map(|&j| pp.p_p[j] * ls.u_d[j])
            .sum::<f64>()
            + n0;
        let c = mmse_gain(pp.p_p[i] * ls.u_d[i], denom);
        h_d.set_column(
            i,
            &(project(&y.y_c, pa.pilot_column(i)) * Complex64::from(c)),
        );
    }

    let mut g_d = Vec::with_capacity(k);
    let mut g_c = Vec::with_capacity(k);
    for rx in 0..k {
        let yk = &y.y_d[rx];
        let mut gd = CMat::zeros(cfg.d2drx_antennas, k);
        for i in 0..k {
            let denom: f64 = groups[pa.slot(i)]
                .iter()
                .map(|&j| pp.p_p[j] * ls.v_d[j][rx])
                .sum::<f64>()
                + n0;
            let c = mmse_gain(pp.p_p[i] * ls.v_d[i][rx], denom);
            gd.set_column(i, &(project(yk, pa.pilot_column(i)) * Complex64::from(c)));
        }
        let mut gc = CMat::zeros(cfg.d2drx_antennas, n);
        for cu in 0..n {
            let x = pp.q_p[cu] * ls.v_c[cu][rx];
            let c = mmse_gain(x, x + n0);
            gc.set_column(cu, &(project(yk, cu) * Complex64::from(c)));
        }
        g_d.push(gd);
        g_c.push(gc);
    }

    EstimatedChannels { h_c, h_d, g_d, g_c }
}

/// Closed-form variances of the estimates (`delta`, `mu`) and of the
/// estimation errors (`eps`), per entry of each channel vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationCoeffs {
    pub delta_c: Vec<f64>,
    pub eps_c: Vec<f64>,
    pub delta_d: Vec<f64>,
    pub eps_d: Vec<f64>,
    /// `[i][k]`: D2D-Tx i to D2D-Rx k.
    pub mu_d: Vec<Vec<f64>>,
    pub eps_dd: Vec<Vec<f64>>,
    /// `[n][k]`: CU n to D2D-Rx k.
    pub mu_c: Vec<Vec<f64>>,
    pub eps_cd: Vec<Vec<f64>>,
}

impl EstimationCoeffs {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ratio(num: f64, denom: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / denom
    }
}

pub fn estimation_coeffs(
    ls: &LargeScale,
    pa: &PilotAssignment,
    pp: &PowerProfile,
    n0: f64,
) -> Result<EstimationCoeffs> {
    ls.validate()?;
    let (n, k) = (ls.n_cu(), ls.n_d2d());
    if pa.n_d2d() != k || pp.q_p.len() != n || pp.p_p.len() != k {
        return Err(Error::InvalidInput(
            "shape mismatch between gains, pilots and powers".into(),
        ));
    }
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise power {n0} must be finite and > 0"
        )));
    }
    let groups = pa.groups();

    let delta_c: Vec<f64> = (0..n)
        .map(|a| {
            let x = pp.q_p[a] * ls.u_c[a];
            ratio(x, x + n0)
        })
        .collect();
    let delta_d: Vec<f64> = (0..k)
        .map(|i| {
            let contam: f64 = groups[pa.slot(i)]
                .iter()
                .map(|&j| pp.p_p[j] * ls.u_d[j])
                .sum();
            ratio(pp.p_p[i] * ls.u_d[i], contam + n0)
        })
        .collect();
    let mu_d: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|rx| {
                    let contam: f64 = groups[pa.slot(i)]
                        .iter()
                        .map(|&j| pp.p_p[j] * ls.v_d[j][rx])
                        .sum();
                    ratio(pp.p_p[i] * ls.v_d[i][rx], contam + n0)
                })
                .collect()
        })
        .collect();
    let mu_c: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..k)
                .map(|rx| {
                    let x = pp.q_p[a] * ls.v_c[a][rx];
                    ratio(x, x + n0)
                })
                .collect()
        })
        .collect();

    let comp = |v: &[f64]| v.iter().map(|d| 1.0 - d).collect::<Vec<_>>();
    let comp2 = |m: &[Vec<f64>]| m.iter().map(|r| comp(r)).collect::<Vec<_>>();
    Ok(EstimationCoeffs {
        eps_c: comp(&delta_c),
        eps_d: comp(&delta_d),
        eps_dd: comp2(&mu_d),
        eps_cd: comp2(&mu_c),
        delta_c,
        delta_d,
        mu_d,
        mu_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use crate::scenario::Scenario;

    fn cfg() -> SystemConfig {
        SystemConfig {
            n_cu: 2,
            n_d2d: 4,
            pilot_len: 4,
            bs_antennas: 16,
            d2drx_antennas: 4,
            pzf_bs: (1, 2),
            pzf_d2d: (1, 1),
            ..SystemConfig::default()
        }
    }

    fn flat_gains(n: usize, k: usize, g: f64) -> LargeScale {
        LargeScale {
            u_c: vec![g; n],
            u_d: vec![g; k],
            v_c: vec![vec![g; k]; n],
            v_d: vec![vec![g; k]; k],
        }
    }

    #[test]
    fn assignment_groups_and_json() {
        let pa = PilotAssignment::new(2, 4, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(pa.group_of(0), vec![0, 2]);
        assert_eq!(pa.group_of(3), vec![1, 3]);
        assert_eq!(pa.pilot_indices(), vec![3, 4, 3, 4]);
        for row in 0..4 {
            assert!(pa.group_of(row).contains(&row));
        }
        let cols: Vec<u8> = (0..4)
            .map(|k| pa.binary_matrix().iter().map(|r| r[k]).sum())
            .collect();
        assert_eq!(cols, vec![1, 1, 1, 1]);
        let back = PilotAssignment::from_json(2, 4, &pa.to_json()).unwrap();
        assert_eq!(pa, back);
        assert!(PilotAssignment::from_json(2, 4, "[2, 3]").is_err());
        assert!(PilotAssignment::new(2, 4, vec![2]).is_err());
    }

    #[test]
    fn coefficient_examples() {
        let n0 = 1e-3;
        // q_p u = N0 gives delta = 1/2
        let ls = flat_gains(1, 2, 1.0);
        let pa = PilotAssignment::new(1, 2, vec![0, 0]).unwrap();
        let pp = PowerProfile {
            q_p: vec![n0],
            p_p: vec![n0, n0],
            q_s: vec![0.0],
            p_s: vec![0.0, 0.0],
        };
        let c = estimation_coeffs(&ls, &pa, &pp, n0).unwrap();
        assert!((c.delta_c[0] - 0.5).abs() < 1e-15);
        // two pairs sharing a pilot at equal strength N0 give 1/3
        assert!((c.delta_d[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.mu_d[1][0] - 1.0 / 3.0).abs() < 1e-15);
        for (d, e) in c.delta_d.iter().zip(&c.eps_d) {
            assert_eq!(d + e, 1.0);
        }
    }

    #[test]
    fn zero_pilot_power_gives_zero_mu() {
        let ls = flat_gains(1, 2, 1.0);
        let pa = PilotAssignment::new(1, 2, vec![0, 0]).unwrap();
        let pp = PowerProfile {
            q_p: vec![1.0],
            p_p: vec![0.0, 1.0],
            q_s: vec![0.0],
            p_s: vec![0.0, 0.0],
        };
        let c = estimation_coeffs(&ls, &pa, &pp, 0.1).unwrap();
        assert_eq!(c.mu_d[0], vec![0.0, 0.0]);
        assert_eq!(c.delta_d[0], 0.0);
    }

    #[test]
    fn rejects_non_finite_gains() {
        let mut ls = flat_gains(1, 2, 1.0);
        ls.v_d[0][1] = f64::NAN;
        let pa = PilotAssignment::new(1, 2, vec![0, 0]).unwrap();
        let pp = PowerProfile {
            q_p: vec![1.0],
            p_p: vec![1.0, 1.0],
            q_s: vec![0.0],
            p_s: vec![0.0, 0.0],
        };
        assert!(estimation_coeffs(&ls, &pa, &pp, 0.1).is_err());
    }

    #[test]
    fn more_pilot_power_improves_own_estimate() {
        let s = Scenario::generate(&cfg()).unwrap();
        let pa = PilotAssignment::round_robin(&s.config);
        let mut pp = PowerProfile::full(&s.config);
        pp.p_p[1] *= 0.25;
        let before = estimation_coeffs(&s.large_scale, &pa, &pp, s.config.noise_power).unwrap();
        pp.p_p[1] *= 2.0;
        let after = estimation_coeffs(&s.large_scale, &pa, &pp, s.config.noise_power).unwrap();
        assert!(after.delta_d[1] > before.delta_d[1]);
        assert!(after.mu_d[1][1] > before.mu_d[1][1]);
    }

    #[test]
    fn pilot_books_are_unitary() {
        for book in [PilotBook::identity(5), PilotBook::dft(5)] {
            let g = book.matrix().adjoint() * book.matrix();
            let err = (g - CMat::identity(5, 5)).norm();
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn noiseless_single_cu_pilot_recovers_channel() {
        let c = SystemConfig {
            n_cu: 1,
            n_d2d: 1,
            pilot_len: 2,
            pzf_bs: (0, 0),
            pzf_d2d: (0, 0),
            noise_power: 0.0,
            ..cfg()
        };
        let ls = LargeScale {
            u_c: vec![1.0],
            u_d: vec![0.0],
            v_c: vec![vec![1.0]],
            v_d: vec![vec![0.0]],
        };
        let pa = PilotAssignment::round_robin(&c);
        let pp = PowerProfile {
            q_p: vec![1.0],
            p_p: vec![0.0],
            q_s: vec![1.0],
            p_s: vec![1.0],
        };
        for book in [PilotBook::identity(2), PilotBook::dft(2)] {
            let real = draw_fast_fading(&c, &mut rng::stream(3, Purpose::FastFading, 0));
            let y = simulate_pilot_phase(
                &real,
                &ls,
                &pa,
                &pp,
                &c,
                &book,
                &mut rng::stream(3, Purpose::Noise, 0),
            );
            let recovered = &y.y_c * book.column(0);
            assert!((recovered - real.h_c.column(0)).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_shared_pilot_superposes() {
        let c = SystemConfig {
            noise_power: 0.0,
            ..cfg()
        };
        let s = Scenario::generate(&SystemConfig {
            noise_power: 1e-10,
            ..c.clone()
        })
        .unwrap();
        let pa = PilotAssignment::new(2, 4, vec![0, 0, 1, 1]).unwrap();
        let pp = PowerProfile::full(&s.config);
        let book = PilotBook::identity(4);
        let real = draw_fast_fading(&c, &mut rng::stream(5, Purpose::FastFading, 0));
        let y = simulate_pilot_phase(
            &real,
            &s.large_scale,
            &pa,
            &pp,
            &c,
            &book,
            &mut rng::stream(5, Purpose::Noise, 0),
        );
        let ls = &s.large_scale;
        let expected = real.h_d.column(0) * Complex64::from((pp.p_p[0] * ls.u_d[0]).sqrt())
            + real.h_d.column(1) * Complex64::from((pp.p_p[1] * ls.u_d[1]).sqrt());
        let got = &y.y_c * book.column(pa.pilot_column(0));
        assert!((got - &expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn vanishing_noise_without_sharing_gives_true_channel() {
        let c = SystemConfig {
            n_cu: 1,
            n_d2d: 2,
            pilot_len: 3,
            pzf_bs: (0, 0),
            pzf_d2d: (0, 0),
            noise_power: 1e-14,
            ..cfg()
        };
        let ls = flat_gains(1, 2, 1e-6);
        let pa = PilotAssignment::round_robin(&c);
        let pp = PowerProfile::full(&c);
        let book = PilotBook::identity(3);
        let real = draw_fast_fading(&c, &mut rng::stream(9, Purpose::FastFading, 0));
        let y = simulate_pilot_phase(
            &real,
            &ls,
            &pa,
            &pp,
            &c,
            &book,
            &mut rng::stream(9, Purpose::Noise, 0),
        );
        let est = mmse_estimate(&y, &ls, &pa, &pp, &c, &book);
        let coeffs = estimation_coeffs(&ls, &pa, &pp, c.noise_power).unwrap();
        assert!(coeffs.eps_c[0] < 1e-6);
        assert!((&est.h_c - &real.h_c).norm() < 1e-3 * real.h_c.norm());
        assert!((&est.h_d - &real.h_d).norm() < 1e-3 * real.h_d.norm());
        assert!((&est.g_d[1] - &real.g_d[1]).norm() < 1e-3 * real.g_d[1].norm());
    }

    #[test]
    fn same_pilot_estimates_are_collinear_at_bs() {
        let s = Scenario::generate(&cfg()).unwrap();
        let c = &s.config;
        let ls = &s.large_scale;
        let pa = PilotAssignment::new(2, 4, vec![0, 1, 0, 1]).unwrap();
        let pp = PowerProfile::full(c);
        let book = PilotBook::dft(4);
        for trial in 0..20 {
            let real = draw_fast_fading(c, &mut rng::stream(11, Purpose::FastFading, trial));
            let y = simulate_pilot_phase(
                &real,
                ls,
                &pa,
                &pp,
                c,
                &book,
                &mut rng::stream(11, Purpose::Noise, trial),
            );
            let est = mmse_estimate(&y, ls, &pa, &pp, c, &book);
            let (a, b) = (est.h_d.column(0), est.h_d.column(2));
            let cosine = a.dotc(&b).norm() / (a.norm() * b.norm());
            assert!(1.0 - cosine < 1e-10);
            let expected = ((pp.p_p[0] * ls.u_d[0]) / (pp.p_p[2] * ls.u_d[2])).sqrt();
            assert!((a.norm() / b.norm() - expected).abs() < 1e-9 * expected);
            // same at a D2D receiver
            let (a, b) = (est.g_d[1].column(1), est.g_d[1].column(3));
            let cosine = a.dotc(&b).norm() / (a.norm() * b.norm());
            assert!(1.0 - cosine < 1e-10);
        }
    }

    #[test]
    fn fast_fading_is_standard_complex_normal() {
        let c = SystemConfig {
            bs_antennas: 1000,
            ..cfg()
        };
        let mut rng = rng::stream(1, Purpose::FastFading, 0);
        let mut again = rng::stream(1, Purpose::FastFading, 0);
        let real = draw_fast_fading(&c, &mut rng);
        assert_eq!(real, draw_fast_fading(&c, &mut again));

        let mut entries = Vec::new();
        while entries.len() < 100_000 {
            let r = draw_fast_fading(&c, &mut rng);
            entries.extend(r.h_c.iter().chain(r.h_d.iter()).copied());
        }
        let count = entries.len() as f64;
        let power = entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / count;
        let re = entries.iter().map(|z| z.re * z.re).sum::<f64>() / count;
        let im = entries.iter().map(|z| z.im * z.im).sum::<f64>() / count;
        assert!((power - 1.0).abs() < 0.01, "power {power}");
        assert!((re - 0.5).abs() < 0.005, "re {re}");
        assert!((im - 0.5).abs() < 0.005, "im {im}");
    }
}
