//! Scenario configuration. Physical quantities use the units named in the
//! field (GB, MHz, GHz, dBm); conversion to bits, Hz, cycles/s and watts
//! happens in the accessors so the rest of the crate works in SI units.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::Rule;

pub const BITS_PER_GB: f64 = 8e9;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Closed interval `[lo, hi]` sampled uniformly. Serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    pub fn point(v: f64) -> Span {
        Span(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }

    pub fn scaled(&self, k: f64) -> Span {
        Span(self.0 * k, self.1 * k)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.gen_range(self.0..=self.1)
        }
    }

    pub fn check(&self, name: &str, min: f64) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(Error::Parameter(format!("{name}: invalid range [{}, {}]", self.0, self.1)));
        }
        if self.0 < min {
            return Err(Error::Parameter(format!("{name}: lower bound {} below {min}", self.0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySource {
    Synthetic { stations: usize, area_m: f64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceChoice {
    Named(String),
    Index(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub source: TopologySource,
    pub r: usize,
    pub okm_t_max: usize,
    pub okm_epsilon: f64,
    /// Which collaboration space to simulate: `"largest"` or an index.
    pub space: SpaceChoice,
    pub bandwidth_mhz: Span,
    pub compute_ghz: Span,
    pub cache_gb: Span,
    /// Inter-station link capacity. Quoted in MHz in the literature, used as Mbit/s.
    pub x2_mbps: Span,
    pub dc_mbps: Span,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            source: TopologySource::Synthetic { stations: 12, area_m: 2000.0 },
            r: 1,
            okm_t_max: 100,
            okm_epsilon: 1e-6,
            space: SpaceChoice::Named("largest".into()),
            bandwidth_mhz: Span(25.0, 32.0),
            compute_ghz: Span(2.0, 2.5),
            cache_gb: Span(100e3, 500e3),
            x2_mbps: Span(20.0, 25.0),
            dc_mbps: Span(50.0, 120.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub users_per_bs: usize,
    pub data_gb: Span,
    pub deadline_s: Span,
    pub workload_cpb: Span,
    pub device_ghz: Span,
    pub tx_power_dbm: Span,
    pub noise_dbm: f64,
    pub energy_budget_j: Span,
    pub distance_m: Span,
    /// Share of tasks that only request content (zero deadline, zero workload).
    pub cache_only_fraction: f64,
    pub contents: usize,
    pub zipf_a: f64,
    /// Per-epoch request total, drawn uniformly from this integer range.
    pub total_requests: (u64, u64),
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            users_per_bs: 10,
            data_gb: Span(2.0, 7.0),
            deadline_s: Span(0.02, 12.0),
            workload_cpb: Span(452.5, 737.5),
            device_ghz: Span(0.5, 1.0),
            tx_power_dbm: Span::point(27.0),
            noise_dbm: -100.0,
            energy_budget_j: Span(100.0, 1000.0),
            distance_m: Span(20.0, 200.0),
            cache_only_fraction: 0.0,
            contents: 50,
            zipf_a: 1.0,
            total_requests: (578, 3200),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Effective switched capacitance of device CPUs.
    pub nu: f64,
    /// Local waiting time when a device cannot run its task, as a multiple of the deadline.
    pub waiting_factor: f64,
    /// Data-centre compute capacity as a multiple of the largest station capacity.
    pub dc_compute_factor: f64,
    pub path_loss_exponent: f64,
    pub cpu_width_bits: f64,
    pub word_bits: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            nu: 1e-26,
            waiting_factor: 10.0,
            dc_compute_factor: 10.0,
            path_loss_exponent: 4.0,
            cpu_width_bits: 64.0,
            word_bits: 64.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub rule: Rule,
    pub subproblem_iters: usize,
    pub subproblem_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            epsilon: 1e-4,
            max_iters: 500,
            rule: Rule::Cyclic,
            subproblem_iters: 200,
            subproblem_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundingConfig {
    pub theta: f64,
    pub xi: f64,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        RoundingConfig { theta: 0.7, xi: 0.14285 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub workload: WorkloadConfig,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub rounding: RoundingConfig,
    /// Weight of bandwidth saving against delay. `None` picks `1 / (mean size * mean rate)`.
    pub eta: Option<f64>,
    pub epochs: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".into(),
            seed: 1,
            topology: TopologyConfig::default(),
            workload: WorkloadConfig::default(),
            model: ModelConfig::default(),
            solver: SolverConfig::default(),
            rounding: RoundingConfig::default(),
            eta: None,
            epochs: 10,
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates a config file. Relative topology paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let TopologySource::File(p) = &cfg.topology.source {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.topology.source = TopologySource::File(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        let t = &self.topology;
        if let TopologySource::Synthetic { stations, area_m } = t.source {
            if stations == 0 {
                return Err(Error::Config("topology.source.synthetic.stations must be >= 1".into()));
            }
            if !(area_m > 0.0) {
                return Err(Error::Config("topology.source.synthetic.area_m must be > 0".into()));
            }
        }
        if t.r == 0 {
            return Err(Error::Config("topology.r must be >= 1".into()));
        }
        if t.okm_t_max == 0 || !(t.okm_epsilon > 0.0) {
            return Err(Error::Config("topology.okm_t_max must be >= 1 and okm_epsilon > 0".into()));
        }
        if let SpaceChoice::Named(n) = &t.space {
            if n != "largest" {
                return Err(Error::Config(format!("topology.space: unknown choice {n:?}")));
            }
        }
        t.bandwidth_mhz.check("bandwidth_mhz", f64::MIN_POSITIVE).map_err(wrap)?;
        t.compute_ghz.check("compute_ghz", f64::MIN_POSITIVE).map_err(wrap)?;
        t.cache_gb.check("cache_gb", 0.0).map_err(wrap)?;
        t.x2_mbps.check("x2_mbps", 0.0).map_err(wrap)?;
        t.dc_mbps.check("dc_mbps", 0.0).map_err(wrap)?;

        let w = &self.workload;
        if w.users_per_bs == 0 || w.contents == 0 {
            return Err(Error::Config("workload.users_per_bs and workload.contents must be >= 1".into()));
        }
        w.data_gb.check("data_gb", f64::MIN_POSITIVE).map_err(wrap)?;
        w.deadline_s.check("deadline_s", f64::MIN_POSITIVE).map_err(wrap)?;
        w.workload_cpb.check("workload_cpb", f64::MIN_POSITIVE).map_err(wrap)?;
        w.device_ghz.check("device_ghz", f64::MIN_POSITIVE).map_err(wrap)?;
        w.tx_power_dbm.check("tx_power_dbm", f64::MIN).map_err(wrap)?;
        w.energy_budget_j.check("energy_budget_j", 0.0).map_err(wrap)?;
        w.distance_m.check("distance_m", f64::MIN_POSITIVE).map_err(wrap)?;
        if !w.noise_dbm.is_finite() {
            return Err(Error::Config("workload.noise_dbm must be finite".into()));
        }
        if !(0.0..=1.0).contains(&w.cache_only_fraction) {
            return Err(Error::Config("workload.cache_only_fraction must lie in [0, 1]".into()));
        }
        if !(w.zipf_a >= 0.0) {
            return Err(Error::Config("workload.zipf_a must be >= 0".into()));
        }
        if w.total_requests.0 > w.total_requests.1 {
            return Err(Error::Config("workload.total_requests: lo > hi".into()));
        }

        let m = &self.model;
        if !(m.nu >= 0.0 && m.waiting_factor >= 0.0 && m.dc_compute_factor > 0.0) {
            return Err(Error::Config("model: nu, waiting_factor >= 0 and dc_compute_factor > 0 required".into()));
        }
        if !(m.path_loss_exponent > 0.0 && m.cpu_width_bits > 0.0 && m.word_bits > 0.0) {
            return Err(Error::Config("model: path_loss_exponent, cpu_width_bits, word_bits must be > 0".into()));
        }

        let s = &self.solver;
        if !(0.2..=100.0).contains(&s.rho) {
            return Err(Error::Config(format!("solver.rho = {} outside [0.2, 100]", s.rho)));
        }
        if !(s.epsilon > 0.0) || s.max_iters == 0 || s.subproblem_iters == 0 || !(s.subproblem_tol > 0.0) {
            return Err(Error::Config("solver: epsilon, subproblem_tol > 0 and iteration limits >= 1 required".into()));
        }
        let r = &self.rounding;
        if !(r.theta > 0.0 && r.theta < 1.0) {
            return Err(Error::Config(format!("rounding.theta = {} outside (0, 1)", r.theta)));
        }
        if !(r.xi >= 0.0) {
            return Err(Error::Config("rounding.xi must be >= 0".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Config("eta must be finite and >= 0".into()));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}
