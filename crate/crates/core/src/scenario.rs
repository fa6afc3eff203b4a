//! Cell layout and large-scale fading.
//!
//! A [`SystemConfig`] holds every scalar parameter of a run. From it,
//! [`generate_topology`] drops users into the square cell and
//! [`compute_large_scale`] turns distances into power-law gains with
//! log-normal shadowing. Both are pure functions of the config and its seed.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of cellular users N.
    pub n_cu: usize,
    /// Number of D2D pairs K.
    pub n_d2d: usize,
    pub bs_antennas: usize,
    pub d2drx_antennas: usize,
    /// Pilot length in symbols; also the number of orthogonal pilots.
    pub pilot_len: usize,
    /// Coherence interval in symbols.
    pub coherence_len: usize,
    /// Noise power per receive antenna, mW.
    pub noise_power: f64,
    /// Per-CU data power cap, mW.
    pub max_power_cu: f64,
    /// Per-D2D-Tx data power cap, mW.
    pub max_power_d2d: f64,
    /// CU SINR target, linear.
    pub sinr_target: f64,
    /// Degrees of freedom spent at the BS on (CUs, D2D pilot groups).
    pub pzf_bs: (usize, usize),
    /// Degrees of freedom spent at each D2D-Rx on (CUs, foreign D2D pilot groups).
    pub pzf_d2d: (usize, usize),
    pub cell_side: f64,
    pub d2d_max_dist: f64,
    pub pathloss_exp: f64,
    pub shadow_sigma_db: f64,
    /// Distances are clamped from below to this value (m).
    pub min_dist: f64,
    pub tol_power: f64,
    pub tol_wmmse: f64,
    pub rng_seed: u64,
}

/// Config fields that a sweep may vary, with whether they are integer valued.
/// `sinr_target_db` sets `sinr_target` from a value in dB.
pub const SWEEPABLE_FIELDS: &[(&str, bool)] = &[
    ("n_cu", true),
    ("n_d2d", true),
    ("bs_antennas", true),
    ("d2drx_antennas", true),
    ("pilot_len", true),
    ("coherence_len", true),
    ("noise_power", false),
    ("max_power_cu", false),
    ("max_power_d2d", false),
    ("sinr_target", false),
    ("sinr_target_db", false),
    ("cell_side", false),
    ("d2d_max_dist", false),
    ("pathloss_exp", false),
    ("shadow_sigma_db", false),
    ("min_dist", false),
    ("tol_power", false),
    ("tol_wmmse", false),
    ("rng_seed", true),
];

impl Default for SystemConfig {
    fn default() -> Self {
        let max_power = dbm_to_mw(17.0);
        SystemConfig {
            n_cu: 5,
            n_d2d: 20,
            bs_antennas: 128,
            d2drx_antennas: 8,
            pilot_len: 10,
            coherence_len: 50,
            noise_power: dbm_to_mw(-100.0),
            max_power_cu: max_power,
            max_power_d2d: max_power,
            sinr_target: db_to_linear(5.0),
            pzf_bs: (4, 5),
            pzf_d2d: (1, 2),
            cell_side: 1000.0,
            d2d_max_dist: 100.0,
            pathloss_exp: 3.7,
            shadow_sigma_db: 8.0,
            min_dist: 1.0,
            tol_power: 1e-3,
            tol_wmmse: 1e-3,
            rng_seed: 1,
        }
    }
}

impl SystemConfig {
    /// Pilots left for the D2D pairs after every CU got its own.
    pub fn d2d_pilots(&self) -> usize {
        self.pilot_len.saturating_sub(self.n_cu)
    }

    /// Fraction of the coherence block left for data, `1 - tau/T`.
    pub fn data_fraction(&self) -> f64 {
        1.0 - self.pilot_len as f64 / self.coherence_len as f64
    }

    /// Fully zero-forcing BS receiver for the current pilot length.
    pub fn full_zf_bs(&self) -> (usize, usize) {
        (self.n_cu.saturating_sub(1), self.d2d_pilots())
    }

    /// Shrinks the D2D-Rx PZF degrees of freedom into their feasible set.
    pub fn clamp_pzf_d2d(&mut self) {
        let (mut mc, mut md) = self.pzf_d2d;
        mc = mc.min(self.n_cu);
        md = md.min(self.d2d_pilots().saturating_sub(1));
        let budget = self.d2drx_antennas.saturating_sub(1);
        if mc + md > budget {
            md = budget.saturating_sub(mc);
            mc = mc.min(budget);
        }
        self.pzf_d2d = (mc, md);
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_cu, self.n_d2d);
        if n < 1 {
            return Err(Error::config("n_cu", "need at least one cellular user"));
        }
        if k < 1 {
            return Err(Error::config("n_d2d", "need at least one D2D pair"));
        }
        if self.bs_antennas < 1 {
            return Err(Error::config("bs_antennas", "must be >= 1"));
        }
        if self.d2drx_antennas < 1 {
            return Err(Error::config("d2drx_antennas", "must be >= 1"));
        }
        let tau = self.pilot_len;
        if tau <= n || tau > n + k {
            return Err(Error::config(
                "pilot_len",
                format!("must satisfy N < tau <= N+K, got tau={tau}, N={n}, K={k}"),
            ));
        }
        if self.coherence_len < tau {
            return Err(Error::config("coherence_len", "must be >= pilot_len"));
        }
        let (bc, bd) = self.pzf_bs;
        if bc > n - 1 {
            return Err(Error::config(
                "pzf_bs",
                format!("b_c={bc} exceeds N-1={}", n - 1),
            ));
        }
        if bd > tau - n {
            return Err(Error::config(
                "pzf_bs",
                format!("b_d={bd} exceeds tau-N={}", tau - n),
            ));
        }
        if bc + bd > self.bs_antennas - 1 {
            return Err(Error::config("pzf_bs", "b_c+b_d exceeds B-1"));
        }
        let (mc, md) = self.pzf_d2d;
        if mc > n {
            return Err(Error::config("pzf_d2d", format!("m_c={mc} exceeds N={n}")));
        }
        if md + 1 > tau - n {
            return Err(Error::config(
                "pzf_d2d",
                format!("m_d={md} exceeds tau-N-1={}", tau - n - 1),
            ));
        }
        if mc + md > self.d2drx_antennas - 1 {
            return Err(Error::config("pzf_d2d", "m_c+m_d exceeds M-1"));
        }
        let positive = [
            ("noise_power", self.noise_power),
            ("max_power_cu", self.max_power_cu),
            ("max_power_d2d", self.max_power_d2d),
            ("sinr_target", self.sinr_target),
            ("cell_side", self.cell_side),
            ("d2d_max_dist", self.d2d_max_dist),
            ("pathloss_exp", self.pathloss_exp),
            ("min_dist", self.min_dist),
            ("tol_power", self.tol_power),
            ("tol_wmmse", self.tol_wmmse),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(
                    field,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !(self.shadow_sigma_db.is_finite() && self.shadow_sigma_db >= 0.0) {
            return Err(Error::config("shadow_sigma_db", "must be finite and >= 0"));
        }
        if self.min_dist > self.d2d_max_dist {
            return Err(Error::config("min_dist", "must not exceed d2d_max_dist"));
        }
        if self.d2d_max_dist > self.cell_side {
            return Err(Error::config("d2d_max_dist", "must not exceed cell_side"));
        }
        Ok(())
    }

    /// Sets a scalar field by name. Integer fields reject fractional values.
    pub fn set_field(&mut self, name: &str, value: f64) -> Result<()> {
        let integral = SWEEPABLE_FIELDS
            .iter()
            .find(|(f, _)| *f == name)
            .map(|(_, int)| *int)
            .ok_or_else(|| {
                Error::spec("sweep.variable", format!("unknown config field `{name}`"))
            })?;
        if !value.is_finite() {
            return Err(Error::spec(
                "sweep.values",
                format!("non-finite value for `{name}`"),
            ));
        }
        if integral && (value.fract() != 0.0 || value < 0.0) {
            return Err(Error::spec(
                "sweep.values",
                format!("`{name}` takes non-negative integers, got {value}"),
            ));
        }
        let u = value as usize;
        match name {
            "n_cu" => self.n_cu = u,
            "n_d2d" => self.n_d2d = u,
            "bs_antennas" => self.bs_antennas = u,
            "d2drx_antennas" => self.d2drx_antennas = u,
            "pilot_len" => self.pilot_len = u,
            "coherence_len" => self.coherence_len = u,
            "noise_power" => self.noise_power = value,
            "max_power_cu" => self.max_power_cu = value,
            "max_power_d2d" => self.max_power_d2d = value,
            "sinr_target" => self.sinr_target = value,
            "sinr_target_db" => self.sinr_target = db_to_linear(value),
            "cell_side" => self.cell_side = value,
            "d2d_max_dist" => self.d2d_max_dist = value,
            "pathloss_exp" => self.pathloss_exp = value,
            "shadow_sigma_db" => self.shadow_sigma_db = value,
            "min_dist" => self.min_dist = value,
            "tol_power" => self.tol_power = value,
            "tol_wmmse" => self.tol_wmmse = value,
            "rng_seed" => self.rng_seed = value as u64,
            _ => unreachable!(),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bs_pos: Point,
    pub cu_pos: Vec<Point>,
    pub d2d_tx_pos: Vec<Point>,
    pub d2d_rx_pos: Vec<Point>,
}

/// Linear large-scale power gains of every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScale {
    /// CU n to BS.
    pub u_c: Vec<f64>,
    /// D2D-Tx i to BS.
    pub u_d: Vec<f64>,
    /// `v_c[n][k]`: CU n to D2D-Rx k.
    pub v_c: Vec<Vec<f64>>,
    /// `v_d[i][k]`: D2D-Tx i to D2D-Rx k.
    pub v_d: Vec<Vec<f64>>,
}

impl LargeScale {
    pub fn n_cu(&self) -> usize {
        self.u_c.len()
    }

    pub fn n_d2d(&self) -> usize {
        self.u_d.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_cu(), self.n_d2d());
        if self.v_c.len() != n || self.v_c.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput("v_c must be N x K".into()));
        }
        if self.v_d.len() != k || self.v_d.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput("v_d must be K x K".into()));
        }
        let all = self
            .u_c
            .iter()
            .chain(&self.u_d)
            .chain(self.v_c.iter().flatten())
            .chain(self.v_d.iter().flatten());
        for &g in all {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "gain {g} is not finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// Config plus one drawn layout, the JSON document exchanged with tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub topology: Topology,
    pub large_scale: LargeScale,
}

impl Scenario {
    pub fn generate(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let topology = generate_topology(config);
        let large_scale = compute_large_scale(&topology, config);
        Ok(Scenario {
            config: config.clone(),
            topology,
            large_scale,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.config.validate()?;
        s.large_scale.validate()?;
        Ok(s)
    }
}

/// Drops the BS at the cell centre, CUs and D2D-Txs uniformly in the square, and
/// each D2D-Rx at a uniform distance in `[min_dist, d2d_max_dist]` and uniform
/// angle from its Tx. Receivers falling outside the square are redrawn.
pub fn generate_topology(config: &SystemConfig) -> Topology {
    let mut rng = rng::stream(config.rng_seed, Purpose::Topology, 0);
    let side = config.cell_side;
    let coord = Uniform::new_inclusive(0.0, side).expect("cell_side > 0");
    let draw_point = |rng: &mut rng::StreamRng| Point::new(coord.sample(rng), coord.sample(rng));

    let cu_pos: Vec<Point> = (0..config.n_cu).map(|_| draw_point(&mut rng)).collect();
    let d2d_tx_pos: Vec<Point> = (0..config.n_d2d).map(|_| draw_point(&mut rng)).collect();
    let dist = Uniform::new_inclusive(config.min_dist, config.d2d_max_dist)
        .expect("min_dist <= d2d_max_dist");
    let d2d_rx_pos = d2d_tx_pos
        .iter()
        .map(|tx| loop {
            let d = dist.sample(&mut rng);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let rx = Point::new(tx.x + d * angle.cos(), tx.y + d * angle.sin());
            if (0.0..=side).contains(&rx.x) && (0.0..=side).contains(&rx.y) {
                break rx;
            }
        })
        .collect();

    Topology {
        bs_pos: Point::new(side / 2.0, side / 2.0),
        cu_pos,
        d2d_tx_pos,
        d2d_rx_pos,
    }
}

/// Deterministic part of the gain: `max(d, min_dist)^(-pathloss_exp)`.
pub fn path_gain(distance: f64, config: &SystemConfig) -> f64 {
    distance.max(config.min_dist).powf(-config.pathloss_exp)
}

pub fn compute_large_scale(topology: &Topology, config: &SystemConfig) -> LargeScale {
    let mut rng = rng::stream(config.rng_seed, Purpose::Shadowing, 0);
    let shadow = Normal::new(0.0, config.shadow_sigma_db).expect("sigma >= 0");
    let mut gain = |a: &Point, b: &Point| {
        let x_db: f64 = shadow.sample(&mut rng);
        path_gain(a.distance(b), config) * db_to_linear(x_db)
    };

    let bs = topology.bs_pos;
    let u_c = topology.cu_pos.iter().map(|p| gain(p, &bs)).collect();
    let u_d = topology.d2d_tx_pos.iter().map(|p| gain(p, &bs)).collect();
    let v_c = topology
        .cu_pos
        .iter()
        .map(|cu| topology.d2d_rx_pos.iter().map(|rx| gain(cu, rx)).collect())
        .collect();
    let v_d = topology
        .d2d_tx_pos
        .iter()
        .map(|tx| topology.d2d_rx_pos.iter().map(|rx| gain(tx, rx)).collect())
        .collect();
    LargeScale { u_c, u_d, v_c, v_d }
}
