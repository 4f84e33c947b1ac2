//! Evaluation quantities: network and computation throughput, realized
//! delays and their distribution, and cache outcomes.

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Max, Min, OrderStatistics, Statistics};

use crate::cachesim::{Outcome, SimResult};
use crate::costmodel::{local_wait_time, route_delay, AllocationView, DecisionVector, Problem};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Bits a binary decision moves over the air, the inter-station links and
/// the backhaul.
pub fn offload_bits(sc: &Scenario, dv: &DecisionVector) -> f64 {
    let mut bits = 0.0;
    for k in 0..sc.n_tasks() {
        let Some(r) = dv.chosen_route(k) else { continue };
        let s = sc.tasks[k].data_bits;
        bits += if r == sc.home(k) { s } else { 2.0 * s };
    }
    bits
}

/// Bits moved by cache lookups: neighbour hits cross a link, misses cross
/// the backhaul, local hits move nothing outside the station.
pub fn cache_traffic_bits(outcomes: impl IntoIterator<Item = (usize, Outcome)>, sizes: &[f64]) -> f64 {
    outcomes
        .into_iter()
        .map(|(c, o)| match o {
            Outcome::HitLocal => 0.0,
            Outcome::HitNeighbor(_) | Outcome::Miss => sizes[c],
        })
        .sum()
}

pub fn network_throughput(sc: &Scenario, dv: &DecisionVector, window_s: f64) -> Result<f64> {
    check_window(window_s)?;
    Ok(offload_bits(sc, dv) / window_s)
}

fn check_window(window_s: f64) -> Result<()> {
    if window_s > 0.0 && window_s.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("throughput window {window_s} s must be positive")))
    }
}

/// Executed instructions per second at each station, in millions. Cycles
/// are those of the tasks executed there over `window_s`; each cycle
/// retires `cpu_width_bits / word_bits` instructions.
pub fn computation_throughput_mips(
    sc: &Scenario,
    dv: &DecisionVector,
    window_s: f64,
    cpu_width_bits: f64,
    word_bits: f64,
) -> Result<Vec<f64>> {
    check_window(window_s)?;
    if !(cpu_width_bits > 0.0 && word_bits > 0.0) {
        return Err(Error::Parameter("instruction width and word size must be positive".into()));
    }
    let mut cycles = vec![0.0; sc.n_stations()];
    for k in 0..sc.n_tasks() {
        if let Some(r) = dv.chosen_route(k) {
            if r < sc.n_stations() {
                cycles[r] += sc.tasks[k].data_bits * sc.tasks[k].workload_cpb;
            }
        }
    }
    Ok(cycles.into_iter().map(|c| c / window_s * (cpu_width_bits / word_bits) / 1e6).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDelay {
    pub task: usize,
    pub delay_s: f64,
    pub deadline_s: f64,
    pub route: Option<usize>,
    pub deadline_feasible: bool,
}

impl TaskDelay {
    pub fn meets_deadline(&self) -> bool {
        self.deadline_s == 0.0 || self.delay_s <= self.deadline_s * (1.0 + 1e-9)
    }
}

/// Completion time of every task under a binary decision and the
/// allocation actually granted.
pub fn realized_delays(sc: &Scenario, p: &Problem, dv: &DecisionVector, alloc: &AllocationView) -> Result<Vec<TaskDelay>> {
    (0..sc.n_tasks())
        .map(|k| {
            let route = dv.chosen_route(k);
            let delay_s = match route {
                Some(r) => route_delay(sc, alloc, k, r)?,
                None => local_wait_time(&sc.tasks[k], &sc.users[k], &sc.model),
            };
            Ok(TaskDelay { task: k, delay_s, deadline_s: sc.tasks[k].deadline_s, route, deadline_feasible: p.deadline_feasible[k] })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
    /// `(value, fraction of samples <= value)` at each distinct value.
    pub cdf: Vec<(f64, f64)>,
}

impl DelayStats {
    /// Empirical CDF evaluated at `t`.
    pub fn cdf_at(&self, t: f64) -> f64 {
        self.cdf.iter().take_while(|(v, _)| *v <= t).last().map_or(0.0, |&(_, f)| f)
    }
}

pub fn delay_distribution(delays: &[f64]) -> Result<DelayStats> {
    if delays.is_empty() {
        return Err(Error::Parameter("delay distribution of no tasks".into()));
    }
    if delays.iter().any(|d| !d.is_finite()) {
        return Err(Error::Parameter("delay distribution with a non-finite delay".into()));
    }
    let mut sorted = delays.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n as f64;
        match cdf.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => cdf.push((v, f)),
        }
    }
    let mean = sorted.iter().mean();
    let mut data = Data::new(sorted);
    Ok(DelayStats {
        count: n,
        mean,
        median: data.median(),
        p5: data.quantile(0.05),
        p95: data.quantile(0.95),
        min: data.min(),
        max: data.max(),
        cdf,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub per_epoch_bps: Vec<f64>,
    pub aggregate_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub window_s: f64,
    pub network_throughput_bps: Throughput,
    pub computation_throughput_mips: Vec<f64>,
    pub delay_stats: DelayStats,
    pub deadline_misses: usize,
    pub hit_ratio: f64,
    pub per_epoch_hit_ratio: Vec<f64>,
    pub bandwidth_saving_bits: f64,
    /// Saving promised by the cache decisions before simulation.
    pub planned_saving_bits: f64,
}

/// Aggregates a finished run. The window defaults to the longest realized
/// completion time (at least one second).
pub fn run_metrics(
    sc: &Scenario,
    dv: &DecisionVector,
    delays: &[TaskDelay],
    sim: &SimResult,
    cpu_width_bits: f64,
    word_bits: f64,
    window_s: Option<f64>,
) -> Result<RunMetrics> {
    let values: Vec<f64> = delays.iter().map(|d| d.delay_s).collect();
    let delay_stats = delay_distribution(&values)?;
    let window_s = window_s.unwrap_or(delay_stats.max.max(1.0));
    let base = offload_bits(sc, dv);
    let per_epoch_bps: Vec<f64> = sim
        .epochs
        .iter()
        .map(|e| {
            let rows = sim.trace.iter().filter(|r| r.epoch == e.epoch).map(|r| (r.content, r.outcome));
            (base + cache_traffic_bits(rows, &sc.catalog)) / window_s
        })
        .collect();
    let aggregate_bps =
        if per_epoch_bps.is_empty() { base / window_s } else { per_epoch_bps.iter().sum::<f64>() / per_epoch_bps.len() as f64 };
    Ok(RunMetrics {
        window_s,
        network_throughput_bps: Throughput { per_epoch_bps, aggregate_bps },
        computation_throughput_mips: computation_throughput_mips(sc, dv, window_s, cpu_width_bits, word_bits)?,
        deadline_misses: delays.iter().filter(|d| d.deadline_feasible && !d.meets_deadline()).count(),
        delay_stats,
        hit_ratio: crate::cachesim::hit_ratio(&sim.totals()),
        per_epoch_hit_ratio: sim.epochs.iter().map(|e| e.hit_ratio).collect(),
        bandwidth_saving_bits: sim.saving_bits(),
        planned_saving_bits: crate::costmodel::bandwidth_saving(sc, dv),
    })
}
