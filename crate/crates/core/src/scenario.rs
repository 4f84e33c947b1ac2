//! Seeded workloads: devices, tasks, a content catalogue and Zipf demand.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{dbm_to_watts, ModelConfig, ScenarioConfig, Span, WorkloadConfig, BITS_PER_GB};
use crate::error::{Error, Result};
use crate::topology::BaseStation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserDevice {
    pub id: usize,
    pub home_bs: u32,
    pub compute_hz: f64,
    pub energy_budget_j: f64,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    pub distance_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub user: usize,
    pub data_bits: f64,
    /// Zero together with `workload_cpb == 0` marks a request for cached content only.
    pub deadline_s: f64,
    pub workload_cpb: f64,
    pub content_id: usize,
}

impl Task {
    pub fn is_cache_only(&self) -> bool {
        self.deadline_s == 0.0 && self.workload_cpb == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.data_bits > 0.0 && self.deadline_s >= 0.0 && self.workload_cpb >= 0.0) {
            return Err(Error::Parameter(format!("task of user {}: invalid sizes", self.user)));
        }
        if (self.deadline_s == 0.0) != (self.workload_cpb == 0.0) {
            return Err(Error::Parameter(format!(
                "task of user {}: zero deadline and zero workload must go together",
                self.user
            )));
        }
        Ok(())
    }
}

/// Requests per epoch for each (station, content) pair, stations in the
/// order given at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub stations: Vec<u32>,
    pub contents: usize,
    pub zipf_a: f64,
    rates: Vec<f64>,
}

impl DemandMatrix {
    pub fn zeros(stations: Vec<u32>, contents: usize, zipf_a: f64) -> DemandMatrix {
        let rates = vec![0.0; stations.len() * contents];
        DemandMatrix { stations, contents, zipf_a, rates }
    }

    pub fn rate(&self, station: usize, content: usize) -> f64 {
        self.rates[station * self.contents + content]
    }

    pub fn set_rate(&mut self, station: usize, content: usize, v: f64) {
        assert!(v >= 0.0);
        self.rates[station * self.contents + content] = v;
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn content_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.contents];
        for row in self.rates.chunks(self.contents) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += r;
            }
        }
        out
    }

    /// Every request as a `(station, content)` pair, shuffled.
    pub fn request_stream(&self, seed: u64) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for (i, &r) in self.rates.iter().enumerate() {
            for _ in 0..r.round() as u64 {
                out.push((i / self.contents, i % self.contents));
            }
        }
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        out
    }
}

pub fn zipf_popularity(a: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Parameter("zipf popularity needs at least one content".into()));
    }
    if !(a >= 0.0) {
        return Err(Error::Parameter(format!("zipf exponent {a} must be >= 0")));
    }
    let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-a)).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// Multinomial draw of `total` requests over (station, content) cells,
/// stations weighted uniformly and contents by `pop`.
pub fn generate_demands(pop: &[f64], zipf_a: f64, total: u64, stations: &[u32], seed: u64) -> DemandMatrix {
    let mut dm = DemandMatrix::zeros(stations.to_vec(), pop.len(), zipf_a);
    if total == 0 || stations.is_empty() {
        return dm;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content = WeightedIndex::new(pop).expect("popularity must have positive mass");
    for _ in 0..total {
        let s = rng.gen_range(0..stations.len());
        let c = content.sample(&mut rng);
        dm.rates[s * pop.len() + c] += 1.0;
    }
    dm
}

/// Content sizes in bits, drawn uniformly from `data_gb`.
pub fn generate_catalog(n: usize, data_gb: Span, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| data_gb.sample(&mut rng) * BITS_PER_GB).collect()
}

/// One device and one task per user, `users_per_bs` users per station.
/// A task's data is the content it asks for, picked by popularity.
pub fn generate_tasks(
    cfg: &WorkloadConfig,
    stations: &[u32],
    catalog: &[f64],
    pop: &[f64],
    seed: u64,
) -> Result<(Vec<Task>, Vec<UserDevice>)> {
    for (name, s) in [
        ("deadline_s", cfg.deadline_s),
        ("workload_cpb", cfg.workload_cpb),
        ("device_ghz", cfg.device_ghz),
        ("tx_power_dbm", cfg.tx_power_dbm),
        ("energy_budget_j", cfg.energy_budget_j),
        ("distance_m", cfg.distance_m),
    ] {
        s.check(name, f64::MIN)?;
    }
    if catalog.len() != pop.len() || catalog.is_empty() {
        return Err(Error::Parameter("catalog and popularity must be non-empty and of equal length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content = WeightedIndex::new(pop).map_err(|e| Error::Parameter(format!("popularity: {e}")))?;
    let mut tasks = Vec::new();
    let mut users = Vec::new();
    for &bs in stations {
        for _ in 0..cfg.users_per_bs {
            let id = users.len();
            users.push(UserDevice {
                id,
                home_bs: bs,
                compute_hz: cfg.device_ghz.sample(&mut rng) * 1e9,
                energy_budget_j: cfg.energy_budget_j.sample(&mut rng),
                tx_power_w: dbm_to_watts(cfg.tx_power_dbm.sample(&mut rng)),
                noise_power_w: dbm_to_watts(cfg.noise_dbm),
                distance_m: cfg.distance_m.sample(&mut rng),
            });
            let d = content.sample(&mut rng);
            let cache_only = rng.gen::<f64>() < cfg.cache_only_fraction;
            let (deadline_s, workload_cpb) = if cache_only {
                (0.0, 0.0)
            } else {
                (cfg.deadline_s.sample(&mut rng), cfg.workload_cpb.sample(&mut rng))
            };
            let t = Task { user: id, data_bits: catalog[d], deadline_s, workload_cpb, content_id: d };
            t.validate()?;
            tasks.push(t);
        }
    }
    Ok((tasks, users))
}

/// Model constants resolved to SI values for one space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nu: f64,
    pub waiting_factor: f64,
    pub dc_compute_hz: f64,
    pub path_loss_exponent: f64,
}

impl ModelParams {
    pub fn from_config(m: &ModelConfig, stations: &[BaseStation]) -> ModelParams {
        let pmax = stations.iter().map(|s| s.compute_hz).fold(0.0, f64::max);
        ModelParams {
            nu: m.nu,
            waiting_factor: m.waiting_factor,
            dc_compute_hz: m.dc_compute_factor * pmax,
            path_loss_exponent: m.path_loss_exponent,
        }
    }
}

/// Derives independent sub-seeds from one run seed.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SEED_CATALOG: u64 = 1;
pub const SEED_TASKS: u64 = 2;
pub const SEED_DEMAND: u64 = 3;
pub const SEED_STREAM: u64 = 4;

/// Everything the cost model needs about one collaboration space. Stations
/// are addressed by their position in `stations`; task `k` belongs to user `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub stations: Vec<BaseStation>,
    pub users: Vec<UserDevice>,
    pub tasks: Vec<Task>,
    pub catalog: Vec<f64>,
    pub popularity: Vec<f64>,
    pub demands: DemandMatrix,
    pub model: ModelParams,
    pub eta: f64,
    home: Vec<usize>,
}

impl Scenario {
    pub fn new(
        stations: Vec<BaseStation>,
        users: Vec<UserDevice>,
        tasks: Vec<Task>,
        catalog: Vec<f64>,
        popularity: Vec<f64>,
        demands: DemandMatrix,
        model: ModelParams,
        eta: Option<f64>,
    ) -> Result<Scenario> {
        if stations.is_empty() {
            return Err(Error::Parameter("scenario needs at least one station".into()));
        }
        for s in &stations {
            s.validate()?;
        }
        if demands.stations != stations.iter().map(|s| s.id).collect::<Vec<_>>() {
            return Err(Error::Parameter("demand matrix station order differs from scenario".into()));
        }
        if tasks.len() != users.len() {
            return Err(Error::Parameter("one task per user expected".into()));
        }
        let mut home = Vec::with_capacity(tasks.len());
        for (k, (t, u)) in tasks.iter().zip(&users).enumerate() {
            t.validate()?;
            if t.user != k || u.id != k {
                return Err(Error::Parameter(format!("task {k} is not paired with user {k}")));
            }
            if !(u.compute_hz > 0.0 && u.tx_power_w > 0.0 && u.noise_power_w > 0.0 && u.distance_m > 0.0) {
                return Err(Error::Parameter(format!("user {k}: compute, power, noise and distance must be > 0")));
            }
            if t.content_id >= catalog.len() {
                return Err(Error::Parameter(format!("task {k}: unknown content {}", t.content_id)));
            }
            let h = stations
                .iter()
                .position(|s| s.id == u.home_bs)
                .ok_or_else(|| Error::Parameter(format!("user {k}: home station {} not in scenario", u.home_bs)))?;
            home.push(h);
        }
        let mut sc = Scenario { stations, users, tasks, catalog, popularity, demands, model, eta: 0.0, home };
        sc.eta = match eta {
            Some(e) => e,
            None => sc.default_eta(),
        };
        Ok(sc)
    }

    /// Builds the workload for a set of stations from a config.
    pub fn generate(cfg: &ScenarioConfig, stations: Vec<BaseStation>) -> Result<Scenario> {
        let w = &cfg.workload;
        let ids: Vec<u32> = stations.iter().map(|s| s.id).collect();
        let pop = zipf_popularity(w.zipf_a, w.contents)?;
        let catalog = generate_catalog(w.contents, w.data_gb, sub_seed(cfg.seed, SEED_CATALOG));
        let (tasks, users) = generate_tasks(w, &ids, &catalog, &pop, sub_seed(cfg.seed, SEED_TASKS))?;
        let demands = epoch_demands(cfg, &ids, &pop, 0);
        let model = ModelParams::from_config(&cfg.model, &stations);
        Scenario::new(stations, users, tasks, catalog, pop, demands, model, cfg.eta)
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    /// Local index of task `k`'s home station.
    pub fn home(&self, k: usize) -> usize {
        self.home[k]
    }

    /// Tasks whose home is station `m`.
    pub fn tasks_at(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.tasks.len()).filter(move |&k| self.home[k] == m)
    }

    pub fn x2(&self, m: usize, n: usize) -> f64 {
        self.stations[m].x2_to(self.stations[n].id)
    }

    /// Requests for task `k`'s content at its home station.
    pub fn demand_of(&self, k: usize) -> f64 {
        self.demands.rate(self.home[k], self.tasks[k].content_id)
    }

    fn default_eta(&self) -> f64 {
        let k = self.tasks.len();
        if k == 0 {
            return 0.0;
        }
        let mean_s = self.tasks.iter().map(|t| t.data_bits).sum::<f64>() / k as f64;
        let mut mean_l = (0..k).map(|i| self.demand_of(i)).sum::<f64>() / k as f64;
        if mean_l == 0.0 {
            let cells = (self.demands.stations.len() * self.demands.contents).max(1);
            mean_l = self.demands.total() / cells as f64;
        }
        if mean_l == 0.0 || mean_s == 0.0 {
            0.0
        } else {
            1.0 / (mean_s * mean_l)
        }
    }
}

/// Demand for one epoch: the request total is drawn from the configured range.
pub fn epoch_demands(cfg: &ScenarioConfig, stations: &[u32], pop: &[f64], epoch: u64) -> DemandMatrix {
    let seed = sub_seed(sub_seed(cfg.seed, SEED_DEMAND), epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.workload.total_requests;
    let total = rng.gen_range(lo..=hi);
    generate_demands(pop, cfg.workload.zipf_a, total, stations, rng.gen())
}
