//! Caching plane of one collaboration space: per-station LFU caches, request
//! replay, and resource tables exchanged between stations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costmodel::Loads;
use crate::error::{Error, Result};
use crate::scenario::{DemandMatrix, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub size_bits: f64,
    pub hit_count: u64,
    pub inserted_epoch: u64,
    pub inserted_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationCache {
    pub capacity_bits: f64,
    pub occupancy_bits: f64,
    pub entries: BTreeMap<usize, CacheEntry>,
}

impl StationCache {
    pub fn free_bits(&self) -> f64 {
        (self.capacity_bits - self.occupancy_bits).max(0.0)
    }

    /// Least-frequently used entry; ties go to the earliest insertion.
    pub fn victim(&self) -> Option<usize> {
        self.entries
            .iter()
            .min_by_key(|(_, e)| (e.hit_count, e.inserted_epoch, e.inserted_seq))
            .map(|(&c, _)| c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheState {
    pub caches: Vec<StationCache>,
    pub epoch: u64,
    seq: u64,
}

impl CacheState {
    pub fn new(capacities: &[f64]) -> CacheState {
        CacheState {
            caches: capacities
                .iter()
                .map(|&c| StationCache { capacity_bits: c, occupancy_bits: 0.0, entries: BTreeMap::new() })
                .collect(),
            epoch: 0,
            seq: 0,
        }
    }

    pub fn contains(&self, bs: usize, content: usize) -> bool {
        self.caches[bs].entries.contains_key(&content)
    }
}

/// Stores `content` at `bs`, evicting least-frequently used entries until it
/// fits. Returns the evicted contents in eviction order. Present contents
/// are left as they are.
pub fn cache_insert(state: &mut CacheState, bs: usize, content: usize, size_bits: f64) -> Result<Vec<usize>> {
    let epoch = state.epoch;
    let cache = &mut state.caches[bs];
    if cache.entries.contains_key(&content) {
        return Ok(Vec::new());
    }
    if size_bits > cache.capacity_bits {
        return Err(Error::TooLarge { bs, content, size_bits, capacity_bits: cache.capacity_bits });
    }
    let mut evicted = Vec::new();
    while cache.capacity_bits - cache.occupancy_bits < size_bits {
        let v = cache.victim().expect("occupancy above zero implies an entry");
        let e = cache.entries.remove(&v).unwrap();
        cache.occupancy_bits -= e.size_bits;
        evicted.push(v);
    }
    if cache.entries.is_empty() {
        cache.occupancy_bits = 0.0;
    }
    cache.occupancy_bits += size_bits;
    cache.entries.insert(content, CacheEntry { size_bits, hit_count: 0, inserted_epoch: epoch, inserted_seq: state.seq });
    state.seq += 1;
    Ok(evicted)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "station")]
pub enum Outcome {
    HitLocal,
    HitNeighbor(usize),
    Miss,
}

impl Outcome {
    pub fn is_hit(self) -> bool {
        self != Outcome::Miss
    }

    pub fn label(self) -> String {
        match self {
            Outcome::HitLocal => "hit_local".into(),
            Outcome::HitNeighbor(n) => format!("hit_neighbor:{n}"),
            Outcome::Miss => "miss".into(),
        }
    }
}

/// Looks for `content` at `bs`, then at each of `neighbors` in order.
/// The serving entry's hit count is incremented.
pub fn serve_request(state: &mut CacheState, bs: usize, content: usize, neighbors: &[usize]) -> Outcome {
    if let Some(e) = state.caches[bs].entries.get_mut(&content) {
        e.hit_count += 1;
        return Outcome::HitLocal;
    }
    for &n in neighbors {
        if n == bs {
            continue;
        }
        if let Some(e) = state.caches[n].entries.get_mut(&content) {
            e.hit_count += 1;
            return Outcome::HitNeighbor(n);
        }
    }
    Outcome::Miss
}

/// Linked stations of `bs` by ascending transfer time for `size_bits`, ties by index.
pub fn neighbor_order(sc: &Scenario, bs: usize, size_bits: f64) -> Vec<usize> {
    let mut v: Vec<(f64, usize)> = (0..sc.n_stations())
        .filter(|&n| n != bs && sc.x2(bs, n) > 0.0)
        .map(|n| (size_bits / sc.x2(bs, n), n))
        .collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    v.into_iter().map(|(_, n)| n).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub hits_local: u64,
    pub hits_neighbor: u64,
    pub misses: u64,
}

impl Counters {
    pub fn hits(&self) -> u64 {
        self.hits_local + self.hits_neighbor
    }

    pub fn record(&mut self, o: Outcome) {
        match o {
            Outcome::HitLocal => self.hits_local += 1,
            Outcome::HitNeighbor(_) => self.hits_neighbor += 1,
            Outcome::Miss => self.misses += 1,
        }
    }
}

pub fn hit_ratio(c: &Counters) -> f64 {
    let total = c.hits() + c.misses;
    if total == 0 {
        0.0
    } else {
        c.hits() as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: u64,
    pub bs: u32,
    pub content: usize,
    pub outcome: Outcome,
}

/// Bits not fetched from the data centre: one content transfer per hit.
pub fn realized_bandwidth_saving(trace: &[TraceRow], sizes: &[f64]) -> f64 {
    trace.iter().filter(|r| r.outcome.is_hit()).map(|r| sizes[r.content]).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatEntry {
    pub bs: u32,
    pub free_compute_hz: f64,
    pub free_cache_bits: f64,
    pub free_spectrum_fraction: f64,
}

/// One station's copy of the space's resource table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatSnapshot {
    pub holder: u32,
    pub epoch: u64,
    pub entries: Vec<RatEntry>,
}

/// Every station publishes its free resources and receives everyone
/// else's, so all copies are identical. `usage` holds the compute and
/// spectrum committed by the current decisions.
pub fn rat_exchange(state: &CacheState, sc: &Scenario, usage: &Loads, epoch: u64) -> Vec<RatSnapshot> {
    let entries: Vec<RatEntry> = sc
        .stations
        .iter()
        .enumerate()
        .map(|(m, s)| RatEntry {
            bs: s.id,
            free_compute_hz: (s.compute_hz - usage.compute_hz[m]).clamp(0.0, s.compute_hz),
            free_cache_bits: state.caches[m].free_bits().min(s.cache_bits),
            free_spectrum_fraction: (1.0 - usage.spectrum[m]).clamp(0.0, 1.0),
        })
        .collect();
    sc.stations.iter().map(|s| RatSnapshot { holder: s.id, epoch, entries: entries.clone() }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub counters: Counters,
    pub hit_ratio: f64,
    pub saving_bits: f64,
    pub too_large: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub epochs: Vec<EpochStats>,
    pub trace: Vec<TraceRow>,
    pub rat: Vec<Vec<RatSnapshot>>,
    pub final_state: CacheState,
}

impl SimResult {
    pub fn totals(&self) -> Counters {
        let mut c = Counters::default();
        for e in &self.epochs {
            c.hits_local += e.counters.hits_local;
            c.hits_neighbor += e.counters.hits_neighbor;
            c.misses += e.counters.misses;
        }
        c
    }

    pub fn mean_hit_ratio(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.hit_ratio).sum::<f64>() / self.epochs.len() as f64
    }

    pub fn saving_bits(&self) -> f64 {
        self.epochs.iter().map(|e| e.saving_bits).sum()
    }
}

/// Runs one epoch per demand matrix. At each epoch start the solver's
/// placements `(station, content)` are prefetched; then the epoch's requests
/// are replayed in shuffled order. A miss fetches the content from the data
/// centre and caches it at the requesting station; contents larger than a
/// station's whole cache are served from the data centre without caching.
pub fn simulate_caching(
    sc: &Scenario,
    placements: &[(usize, usize)],
    demands: &[DemandMatrix],
    usage: &Loads,
    stream_seed: u64,
) -> SimResult {
    let caps: Vec<f64> = sc.stations.iter().map(|s| s.cache_bits).collect();
    let mut state = CacheState::new(&caps);
    let orders: Vec<Vec<Vec<usize>>> = (0..sc.n_stations())
        .map(|m| sc.catalog.iter().map(|&s| neighbor_order(sc, m, s)).collect())
        .collect();
    let mut out = SimResult { epochs: Vec::new(), trace: Vec::new(), rat: Vec::new(), final_state: state.clone() };
    for (e, dm) in demands.iter().enumerate() {
        state.epoch = e as u64;
        let mut too_large = 0;
        for &(m, c) in placements {
            if cache_insert(&mut state, m, c, sc.catalog[c]).is_err() {
                too_large += 1;
            }
        }
        let mut counters = Counters::default();
        let mut saving = 0.0;
        for (m, c) in dm.request_stream(crate::scenario::sub_seed(stream_seed, e as u64)) {
            let o = serve_request(&mut state, m, c, &orders[m][c]);
            counters.record(o);
            if o.is_hit() {
                saving += sc.catalog[c];
            } else if cache_insert(&mut state, m, c, sc.catalog[c]).is_err() {
                too_large += 1;
            }
            out.trace.push(TraceRow { epoch: e as u64, bs: sc.stations[m].id, content: c, outcome: o });
        }
        out.epochs.push(EpochStats { epoch: e as u64, hit_ratio: hit_ratio(&counters), counters, saving_bits: saving, too_large });
        out.rat.push(rat_exchange(&state, sc, usage, e as u64));
    }
    out.final_state = state;
    out
}
