//! Ready-made instances: seeded desk-scale scenarios for property tests and
//! benchmarks, and a small builder for hand-written fixtures.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ScenarioConfig, Span, TopologySource, BITS_PER_GB};
use crate::error::Result;
use crate::scenario::{DemandMatrix, ModelParams, Scenario, Task, UserDevice};
use crate::topology::{connect_members, synthetic_stations, BaseStation};

const MBIT_IN_GB: f64 = 1e6 / BITS_PER_GB;

/// Radio and compute ranges of the paper-scale setup with megabit-sized
/// tasks and sub-second to few-second deadlines, so that local, edge and
/// data-centre execution all compete.
pub fn desk_config(seed: u64, stations: usize, users_per_bs: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { name: format!("desk-{seed}"), seed, epochs: 3, ..ScenarioConfig::default() };
    cfg.topology.source = TopologySource::Synthetic { stations, area_m: 1000.0 };
    cfg.topology.cache_gb = Span(2.0 * MBIT_IN_GB, 12.0 * MBIT_IN_GB);
    let w = &mut cfg.workload;
    w.users_per_bs = users_per_bs;
    w.data_gb = Span(0.1 * MBIT_IN_GB, 5.0 * MBIT_IN_GB);
    w.deadline_s = Span(0.1, 5.0);
    w.workload_cpb = Span(50.0, 700.0);
    w.energy_budget_j = Span(0.05, 2.0);
    w.cache_only_fraction = 0.1;
    w.contents = 10;
    w.total_requests = (50, 500);
    cfg
}

/// All configured stations form one fully linked space.
pub fn single_space(cfg: &ScenarioConfig) -> Result<Scenario> {
    let (n, area) = match cfg.topology.source {
        TopologySource::Synthetic { stations, area_m } => (stations, area_m),
        TopologySource::File(_) => (1, 1.0),
    };
    let mut st = synthetic_stations(n, area, &cfg.topology, cfg.seed);
    let ids: Vec<u32> = st.iter().map(|s| s.id).collect();
    connect_members(&mut st, &ids, cfg.topology.x2_mbps.scaled(1e6), cfg.seed ^ 0x5eed);
    Scenario::generate(cfg, st)
}

/// A desk-scale scenario with a seeded number of stations (1..=max_stations)
/// and users per station (1..=max_users), the total capped at `max_tasks`.
pub fn random_desk(seed: u64, max_stations: usize, max_users: usize, max_tasks: usize) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=max_stations);
    let u = rng.gen_range(1..=max_users).min((max_tasks / m).max(1));
    let mut cfg = desk_config(seed, m, u);
    cfg.workload.zipf_a = rng.gen_range(0.0..1.5);
    if rng.gen_bool(0.3) {
        cfg.eta = Some(0.0);
    }
    single_space(&cfg)
}

/// Builder for small hand-checked scenarios. Stations default to 25 MHz,
/// 2 GHz, 100 Mbit cache, 100 Mbit/s backhaul and 20 Mbit/s links between
/// every pair; devices default to unit spectrum efficiency (SNR of 1).
pub struct Hand {
    pub stations: Vec<BaseStation>,
    pub users: Vec<UserDevice>,
    pub tasks: Vec<Task>,
    pub catalog: Vec<f64>,
    pub rates: Vec<(usize, usize, f64)>,
    pub model: ModelParams,
    pub eta: Option<f64>,
}

impl Hand {
    pub fn new(n_stations: usize) -> Hand {
        let mut stations: Vec<BaseStation> = (0..n_stations)
            .map(|i| BaseStation {
                id: i as u32,
                position: [i as f64 * 100.0, 0.0],
                bandwidth_hz: 25e6,
                compute_hz: 2e9,
                cache_bits: 100e6,
                x2_capacity_bps: BTreeMap::new(),
                dc_capacity_bps: 100e6,
            })
            .collect();
        let ids: Vec<u32> = (0..n_stations as u32).collect();
        connect_members(&mut stations, &ids, Span::point(20e6), 0);
        Hand {
            stations,
            users: Vec::new(),
            tasks: Vec::new(),
            catalog: Vec::new(),
            rates: Vec::new(),
            model: ModelParams { nu: 1e-26, waiting_factor: 10.0, dc_compute_hz: 20e9, path_loss_exponent: 4.0 },
            eta: Some(0.0),
        }
    }

    /// Adds a task whose content is new to the catalogue. Returns its index.
    pub fn task(&mut self, home: usize, data_bits: f64, deadline_s: f64, workload_cpb: f64, device_hz: f64) -> usize {
        let k = self.tasks.len();
        self.users.push(UserDevice {
            id: k,
            home_bs: self.stations[home].id,
            compute_hz: device_hz,
            energy_budget_j: 1e12,
            tx_power_w: 1.0,
            noise_power_w: 1.0,
            distance_m: 1.0,
        });
        self.catalog.push(data_bits);
        self.tasks.push(Task { user: k, data_bits, deadline_s, workload_cpb, content_id: self.catalog.len() - 1 });
        k
    }

    pub fn rate(&mut self, station: usize, content: usize, v: f64) -> &mut Self {
        self.rates.push((station, content, v));
        self
    }

    pub fn build(&self) -> Scenario {
        let ids = self.stations.iter().map(|s| s.id).collect();
        let n = self.catalog.len().max(1);
        let mut dm = DemandMatrix::zeros(ids, n, 1.0);
        for &(s, c, v) in &self.rates {
            dm.set_rate(s, c, v);
        }
        let catalog = if self.catalog.is_empty() { vec![1.0] } else { self.catalog.clone() };
        let pop = vec![1.0 / n as f64; n];
        Scenario::new(
            self.stations.clone(),
            self.users.clone(),
            self.tasks.clone(),
            catalog,
            pop,
            dm,
            self.model.clone(),
            self.eta,
        )
        .expect("hand fixture must be valid")
    }
}
