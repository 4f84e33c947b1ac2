//! Delay, energy and reward terms of the joint problem and its constraint
//! residuals, for relaxed or binary decisions.
//!
//! Per-task delays along a route use the task's own transfer time over each
//! hop (`s / capacity`); [`x2_delay`] and [`dc_delay`] give the aggregate
//! link occupancy of all forwarded bits. With that split the total delay
//! and the bandwidth saving are multilinear in the decision entries.

mod decision;
mod problem;

pub use decision::{AllocationView, Block, DecisionVector, Mode, Route};
pub use problem::{Problem, TaskOption};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ModelParams, Scenario, Task, UserDevice};

/// Relative slack below which a capacity excess counts as zero.
pub const FEAS_TOL: f64 = 1e-9;
/// Tolerance on the one-location equality residual.
pub const EQ_TOL: f64 = 1e-6;

pub fn channel_gain(distance_m: f64, path_loss_exponent: f64) -> f64 {
    distance_m.powf(-path_loss_exponent)
}

/// Bits/s/Hz at the home station.
pub fn spectrum_efficiency(user: &UserDevice, path_loss_exponent: f64) -> f64 {
    let snr = user.tx_power_w * channel_gain(user.distance_m, path_loss_exponent) / user.noise_power_w;
    (1.0 + snr).log2()
}

pub fn data_rate(x: f64, a: f64, bandwidth_hz: f64, gamma: f64) -> f64 {
    x * a * bandwidth_hz * gamma
}

pub fn tx_delay(x: f64, data_bits: f64, rate: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if !(rate > 0.0) {
        return Err(Error::InfeasibleRate(format!("offloading {data_bits} bits over a zero-rate uplink")));
    }
    Ok(x * data_bits / rate)
}

fn link_time(bits: f64, capacity_bps: f64, what: &str) -> Result<f64> {
    if bits == 0.0 {
        return Ok(0.0);
    }
    if !(capacity_bps > 0.0) {
        return Err(Error::InfeasibleRate(format!("{bits} bits over {what} with zero capacity")));
    }
    Ok(bits / capacity_bps)
}

/// Time to push every bit forwarded from station `m` to station `n`.
pub fn x2_delay(sc: &Scenario, dv: &DecisionVector, m: usize, n: usize) -> Result<f64> {
    let bits: f64 = sc.tasks_at(m).map(|k| dv.x[k] * dv.y(k, n) * sc.tasks[k].data_bits).sum();
    link_time(bits, sc.x2(m, n), "inter-station link")
}

/// Time to push every bit forwarded from station `m` to the data centre.
pub fn dc_delay(sc: &Scenario, dv: &DecisionVector, m: usize) -> Result<f64> {
    let bits: f64 = sc.tasks_at(m).map(|k| dv.x[k] * dv.y_dc(k) * sc.tasks[k].data_bits).sum();
    link_time(bits, sc.stations[m].dc_capacity_bps, "backhaul")
}

pub fn local_energy(task: &Task, user: &UserDevice, nu: f64) -> f64 {
    task.data_bits * nu * task.workload_cpb * user.compute_hz.powi(2)
}

pub fn local_latency(task: &Task, user: &UserDevice) -> f64 {
    task.data_bits * task.workload_cpb / user.compute_hz
}

/// Whether the device can run its own task: 1 unless the workload exceeds
/// the CPU rate, the latency exceeds the deadline, or the energy exceeds
/// the budget (all strict).
pub fn device_status(task: &Task, user: &UserDevice, nu: f64) -> u8 {
    let overloaded = task.workload_cpb > user.compute_hz;
    let late = local_latency(task, user) > task.deadline_s;
    let drained = local_energy(task, user, nu) > user.energy_budget_j;
    u8::from(!(overloaded || late || drained))
}

/// Local completion time if the task is not offloaded: the execution latency,
/// plus a waiting time when the device cannot run it now.
pub fn local_wait_time(task: &Task, user: &UserDevice, model: &ModelParams) -> f64 {
    let l = local_latency(task, user);
    if device_status(task, user, model.nu) == 1 {
        l
    } else {
        l + model.waiting_factor * task.deadline_s
    }
}

pub fn local_time(task: &Task, user: &UserDevice, model: &ModelParams, offloaded: bool) -> f64 {
    if offloaded {
        0.0
    } else {
        local_wait_time(task, user, model)
    }
}

/// Share of `capacity_hz` for a task with workload `z` in a cohort whose
/// workloads (including this task's) sum to `cohort_z`.
pub fn compute_share(capacity_hz: f64, z: f64, cohort_z: f64) -> f64 {
    if cohort_z <= 0.0 {
        0.0
    } else {
        capacity_hz * z / cohort_z
    }
}

pub fn exec_latency(task: &Task, p: f64) -> Result<f64> {
    if task.workload_cpb == 0.0 {
        return Ok(0.0);
    }
    if !(p > 0.0) {
        return Err(Error::InfeasibleRate(format!("task of user {} has no compute allocated", task.user)));
    }
    Ok(task.data_bits * task.workload_cpb / p)
}

/// Completion time of task `k` when offloaded along route `r` under `alloc`:
/// uplink, then any forwarding hop, then execution.
pub fn route_delay(sc: &Scenario, alloc: &AllocationView, k: usize, r: usize) -> Result<f64> {
    let t = &sc.tasks[k];
    let h = sc.home(k);
    let gamma = spectrum_efficiency(&sc.users[k], sc.model.path_loss_exponent);
    let rate = data_rate(1.0, alloc.a[k], sc.stations[h].bandwidth_hz, gamma);
    let up = tx_delay(1.0, t.data_bits, rate)?;
    let hop = if r == sc.n_stations() {
        link_time(t.data_bits, sc.stations[h].dc_capacity_bps, "backhaul")?
    } else if r == h {
        0.0
    } else {
        link_time(t.data_bits, sc.x2(h, r), "inter-station link")?
    };
    Ok(up + hop + exec_latency(t, alloc.p(k, r))?)
}

/// Offloaded completion time of task `k`: route delays weighted by `y`.
pub fn exec_time_chain(sc: &Scenario, dv: &DecisionVector, alloc: &AllocationView, k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (r, &y) in dv.y_row(k).iter().enumerate() {
        if y != 0.0 {
            total += y * route_delay(sc, alloc, k, r)?;
        }
    }
    Ok(total)
}

pub fn total_delay(sc: &Scenario, dv: &DecisionVector, alloc: &AllocationView) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..sc.n_tasks() {
        let x = dv.x[k];
        if x < 1.0 {
            total += (1.0 - x) * local_wait_time(&sc.tasks[k], &sc.users[k], &sc.model);
        }
        if x > 0.0 {
            total += x * exec_time_chain(sc, dv, alloc, k)?;
        }
    }
    Ok(total)
}

/// Backhaul bits avoided by serving each offloaded task's content from a
/// cache at its execution station.
pub fn bandwidth_saving(sc: &Scenario, dv: &DecisionVector) -> f64 {
    let mut total = 0.0;
    for k in 0..sc.n_tasks() {
        let coeff = sc.tasks[k].data_bits * sc.demand_of(k) * dv.x[k];
        if coeff == 0.0 {
            continue;
        }
        let hit: f64 = (0..sc.n_stations()).map(|n| dv.y(k, n) * dv.w(k, n)).sum();
        total += coeff * hit;
    }
    total
}

pub fn objective(sc: &Scenario, dv: &DecisionVector, alloc: &AllocationView, eta: f64) -> Result<f64> {
    Ok(total_delay(sc, dv, alloc)? - eta * bandwidth_saving(sc, dv))
}

/// Resource usage per station under a decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loads {
    pub spectrum: Vec<f64>,
    pub compute_hz: Vec<f64>,
    pub cache_bits: Vec<f64>,
}

pub fn loads(sc: &Scenario, dv: &DecisionVector, alloc: &AllocationView) -> Loads {
    let m = sc.n_stations();
    let mut l = Loads { spectrum: vec![0.0; m], compute_hz: vec![0.0; m], cache_bits: vec![0.0; m] };
    for k in 0..sc.n_tasks() {
        let x = dv.x[k];
        if x == 0.0 {
            continue;
        }
        l.spectrum[sc.home(k)] += x * alloc.a[k];
        for n in 0..m {
            let y = dv.y(k, n);
            if y == 0.0 {
                continue;
            }
            l.compute_hz[n] += x * y * alloc.p(k, n);
            l.cache_bits[n] += x * y * dv.w(k, n) * alloc.c(k, n);
        }
    }
    l
}

/// Positive part of `load - capacity`, with a relative slack of [`FEAS_TOL`].
pub fn excess(load: f64, capacity: f64) -> f64 {
    let e = load - capacity;
    if e > FEAS_TOL * capacity.abs() {
        e
    } else {
        0.0
    }
}

/// Signed residuals; a capacity residual `<= 0` (within [`FEAS_TOL`]) and an
/// equality residual within [`EQ_TOL`] of zero mean satisfied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub spectrum: Vec<f64>,
    pub compute: Vec<f64>,
    pub cache: Vec<f64>,
    pub one_location: Vec<f64>,
    pub dominance: Vec<f64>,
}

impl Residuals {
    pub fn capacities_satisfied(&self, sc: &Scenario) -> bool {
        let ok = |r: f64, cap: f64| excess(r + cap, cap) == 0.0;
        sc.stations.iter().enumerate().all(|(m, s)| {
            ok(self.spectrum[m], 1.0) && ok(self.compute[m], s.compute_hz) && ok(self.cache[m], s.cache_bits)
        })
    }

    pub fn routing_satisfied(&self) -> bool {
        self.one_location.iter().all(|r| r.abs() <= EQ_TOL) && self.dominance.iter().all(|&r| r <= EQ_TOL)
    }
}

pub fn constraint_residuals(sc: &Scenario, dv: &DecisionVector, alloc: &AllocationView) -> Residuals {
    let l = loads(sc, dv, alloc);
    let one_location = (0..sc.n_tasks())
        .map(|k| {
            let x = dv.x[k];
            (1.0 - x) + x * dv.y_row(k).iter().sum::<f64>() - 1.0
        })
        .collect();
    let dominance = (0..sc.n_tasks())
        .map(|k| {
            let x = dv.x[k];
            let ymax = dv.y_row(k).iter().fold(0.0f64, |a, &b| a.max(b));
            match dv.mode {
                Mode::Binary => ymax - x,
                Mode::Relaxed => x * ymax - x,
            }
        })
        .collect();
    Residuals {
        spectrum: l.spectrum.iter().map(|v| v - 1.0).collect(),
        compute: l.compute_hz.iter().zip(&sc.stations).map(|(v, s)| v - s.compute_hz).collect(),
        cache: l.cache_bits.iter().zip(&sc.stations).map(|(v, s)| v - s.cache_bits).collect(),
        one_location,
        dominance,
    }
}

/// Shares used while solving: spectrum in proportion to data size among the
/// home station's users, compute in proportion to workload among the
/// station's own users plus the task itself when it arrives from elsewhere,
/// and the task's full content size wherever it is cached.
pub fn planning_allocation(sc: &Scenario) -> AllocationView {
    let (nk, nm) = (sc.n_tasks(), sc.n_stations());
    let mut al = AllocationView::zeros(nk, nm);
    let mut size_at = vec![0.0; nm];
    let mut z_at = vec![0.0; nm];
    for k in 0..nk {
        size_at[sc.home(k)] += sc.tasks[k].data_bits;
        z_at[sc.home(k)] += sc.tasks[k].workload_cpb;
    }
    let z_all: f64 = z_at.iter().sum();
    for k in 0..nk {
        let t = &sc.tasks[k];
        let h = sc.home(k);
        al.a[k] = t.data_bits / size_at[h];
        for n in 0..nm {
            let cohort = if n == h { z_at[n] } else { z_at[n] + t.workload_cpb };
            al.set_p(k, n, compute_share(sc.stations[n].compute_hz, t.workload_cpb, cohort));
            al.set_c(k, n, t.data_bits);
        }
        al.set_p(k, nm, compute_share(sc.model.dc_compute_hz, t.workload_cpb, z_all));
    }
    al
}

/// Shares after rounding: each server's capacity is split among the tasks
/// that actually run there in proportion to their planned shares, spectrum
/// among the actual offloaders likewise, and content is held only where it
/// is cached.
pub fn final_allocation(sc: &Scenario, dv: &DecisionVector, plan: &AllocationView) -> AllocationView {
    let (nk, nm) = (sc.n_tasks(), sc.n_stations());
    let mut al = AllocationView::zeros(nk, nm);
    let mut a_sum = vec![0.0; nm];
    let mut p_sum = vec![0.0; nm + 1];
    let routes: Vec<Option<usize>> = (0..nk).map(|k| dv.chosen_route(k)).collect();
    for k in 0..nk {
        if let Some(r) = routes[k] {
            a_sum[sc.home(k)] += plan.a[k];
            p_sum[r] += plan.p(k, r);
        }
    }
    for k in 0..nk {
        let Some(r) = routes[k] else { continue };
        al.a[k] = plan.a[k] / a_sum[sc.home(k)];
        let cap = if r == nm { sc.model.dc_compute_hz } else { sc.stations[r].compute_hz };
        if p_sum[r] > 0.0 {
            al.set_p(k, r, plan.p(k, r) * cap / p_sum[r]);
        }
        if r < nm && dv.w(k, r) > 0.5 {
            al.set_c(k, r, sc.tasks[k].data_bits);
        }
    }
    al
}

#[cfg(test)]
mod tests;
