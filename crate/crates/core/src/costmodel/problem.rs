use serde::{Deserialize, Serialize};

use super::{excess, 
    device_status, local_wait_time, planning_allocation, route_delay, AllocationView, Block, DecisionVector, Loads,
};
use crate::scenario::Scenario;

/// A complete binary choice for one task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskOption {
    Local,
    /// Execute along route `route` (same columns as `y`), content cached at `cache` (columns of `w`).
    Offload { route: usize, cache: usize },
}

/// The relaxed problem of one space under the planning allocation,
/// precomputed per task so evaluation is a few multiply-adds per entry.
///
/// Each task also carries its feasible set: local execution is allowed
/// only when the device can run the task, and a route is allowed only when
/// its planned completion time meets the deadline. A task for which nothing
/// meets the deadline is kept as best effort over every finite route and
/// flagged in `deadline_feasible`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub tasks: usize,
    pub stations: usize,
    pub eta: f64,
    pub home: Vec<usize>,
    pub size_bits: Vec<f64>,
    pub alpha: Vec<u8>,
    /// Local completion time when not offloaded.
    pub tau_loc: Vec<f64>,
    /// Planned completion time per (task, route); infinite where a hop has no capacity.
    pub delay: Vec<f64>,
    /// Saved backhaul bits when the task's content is cached where it runs.
    pub reward: Vec<f64>,
    pub allowed: Vec<bool>,
    /// Whether task `k`'s content fits in column `n`'s cache at all; the
    /// data-centre column (not cached) is always true.
    pub cacheable: Vec<bool>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub deadline_feasible: Vec<bool>,
    pub plan: AllocationView,
    pub compute_cap: Vec<f64>,
    pub cache_cap: Vec<f64>,
}

impl Problem {
    pub fn new(sc: &Scenario) -> Problem {
        let (nk, nm) = (sc.n_tasks(), sc.n_stations());
        let nr = nm + 1;
        let plan = planning_allocation(sc);
        let mut p = Problem {
            tasks: nk,
            stations: nm,
            eta: sc.eta,
            home: (0..nk).map(|k| sc.home(k)).collect(),
            size_bits: sc.tasks.iter().map(|t| t.data_bits).collect(),
            alpha: vec![0; nk],
            tau_loc: vec![0.0; nk],
            delay: vec![f64::INFINITY; nk * nr],
            reward: vec![0.0; nk],
            allowed: vec![false; nk * nr],
            cacheable: vec![true; nk * nr],
            x_lo: vec![0.0; nk],
            x_hi: vec![1.0; nk],
            deadline_feasible: vec![true; nk],
            plan,
            compute_cap: sc.stations.iter().map(|s| s.compute_hz).collect(),
            cache_cap: sc.stations.iter().map(|s| s.cache_bits).collect(),
        };
        for k in 0..nk {
            let t = &sc.tasks[k];
            let u = &sc.users[k];
            p.alpha[k] = device_status(t, u, sc.model.nu);
            p.tau_loc[k] = local_wait_time(t, u, &sc.model);
            p.reward[k] = t.data_bits * sc.demand_of(k);
            for n in 0..nm {
                p.cacheable[k * nr + n] = excess(p.plan.c(k, n), p.cache_cap[n]) == 0.0;
            }
            for r in 0..nr {
                p.delay[k * nr + r] = route_delay(sc, &p.plan, k, r).unwrap_or(f64::INFINITY);
            }
            let meets = |r: usize| {
                let d = p.delay[k * nr + r];
                let fits = r == nm || t.workload_cpb <= p.plan.p(k, r);
                d.is_finite() && fits && (t.deadline_s == 0.0 || d <= t.deadline_s)
            };
            let eligible: Vec<bool> = (0..nr).map(meets).collect();
            let local_ok = p.alpha[k] == 1;
            let any = eligible.iter().any(|&e| e);
            if local_ok || any {
                p.allowed[k * nr..(k + 1) * nr].copy_from_slice(&eligible);
                p.x_lo[k] = if local_ok { 0.0 } else { 1.0 };
                p.x_hi[k] = if any { 1.0 } else { 0.0 };
            } else {
                p.deadline_feasible[k] = false;
                for r in 0..nr {
                    p.allowed[k * nr + r] = p.delay[k * nr + r].is_finite();
                }
                p.x_hi[k] = if p.allowed[k * nr..(k + 1) * nr].iter().any(|&a| a) { 1.0 } else { 0.0 };
            }
        }
        p
    }

    pub fn routes(&self) -> usize {
        self.stations + 1
    }

    pub fn dc(&self) -> usize {
        self.stations
    }

    pub fn delay(&self, k: usize, r: usize) -> f64 {
        self.delay[k * self.routes() + r]
    }

    pub fn allowed(&self, k: usize, r: usize) -> bool {
        self.allowed[k * self.routes() + r]
    }

    pub fn cacheable(&self, k: usize, n: usize) -> bool {
        self.cacheable[k * self.routes() + n]
    }

    pub fn allowed_routes(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.routes()).filter(move |&r| self.allowed(k, r))
    }

    pub fn can_offload(&self, k: usize) -> bool {
        self.x_hi[k] > 0.0
    }

    pub fn can_stay_local(&self, k: usize) -> bool {
        self.x_lo[k] < 1.0
    }

    /// Reward coefficient of caching at column `r` for task `k` (zero at the data centre).
    fn reward_at(&self, k: usize, r: usize) -> f64 {
        if r < self.stations {
            self.reward[k]
        } else {
            0.0
        }
    }

    /// Offloaded completion time minus weighted saving, for task `k`'s rows.
    fn offload_value(&self, k: usize, y: &[f64], w: &[f64]) -> f64 {
        let mut v = 0.0;
        for r in 0..self.routes() {
            if y[r] != 0.0 {
                v += y[r] * (self.delay(k, r) - self.eta * self.reward_at(k, r) * w[r]);
            }
        }
        v
    }

    pub fn task_value(&self, dv: &DecisionVector, k: usize) -> f64 {
        let x = dv.x[k];
        let mut v = 0.0;
        if x != 1.0 {
            v += (1.0 - x) * self.tau_loc[k];
        }
        if x != 0.0 {
            v += x * self.offload_value(k, dv.y_row(k), dv.w_row(k));
        }
        v
    }

    /// Total delay minus `eta` times bandwidth saving.
    pub fn objective(&self, dv: &DecisionVector) -> f64 {
        (0..self.tasks).map(|k| self.task_value(dv, k)).sum()
    }

    /// Partial gradient of the objective with respect to one block. Routes
    /// with infinite delay lie outside the objective's domain and report zero.
    pub fn gradient(&self, dv: &DecisionVector, block: Block) -> Vec<f64> {
        let nr = self.routes();
        match block {
            Block::X => (0..self.tasks)
                .map(|k| self.offload_value(k, dv.y_row(k), dv.w_row(k)) - self.tau_loc[k])
                .collect(),
            Block::Y => {
                let mut g = vec![0.0; self.tasks * nr];
                for k in 0..self.tasks {
                    let x = dv.x[k];
                    for r in 0..nr {
                        if self.delay(k, r).is_finite() {
                            g[k * nr + r] = x * (self.delay(k, r) - self.eta * self.reward_at(k, r) * dv.w(k, r));
                        }
                    }
                }
                g
            }
            Block::W => {
                let mut g = vec![0.0; self.tasks * nr];
                for k in 0..self.tasks {
                    let x = dv.x[k];
                    for r in 0..self.stations {
                        g[k * nr + r] = -self.eta * x * dv.y(k, r) * self.reward[k];
                    }
                }
                g
            }
        }
    }

    /// Station loads under the planning shares.
    pub fn loads(&self, dv: &DecisionVector) -> Loads {
        let m = self.stations;
        let mut l = Loads { spectrum: vec![0.0; m], compute_hz: vec![0.0; m], cache_bits: vec![0.0; m] };
        for k in 0..self.tasks {
            let x = dv.x[k];
            if x == 0.0 {
                continue;
            }
            l.spectrum[self.home[k]] += x * self.plan.a[k];
            for n in 0..m {
                let y = dv.y(k, n);
                if y != 0.0 {
                    l.compute_hz[n] += x * y * self.plan.p(k, n);
                    l.cache_bits[n] += x * y * dv.w(k, n) * self.plan.c(k, n);
                }
            }
        }
        l
    }

    /// Binary choices available to task `k`, in tie-breaking order: local
    /// first, then routes by column, each with the content cached where the
    /// task runs, then not cached, then cached elsewhere.
    pub fn options(&self, k: usize) -> Vec<TaskOption> {
        let mut out = Vec::new();
        if self.can_stay_local(k) {
            out.push(TaskOption::Local);
        }
        if !self.can_offload(k) {
            return out;
        }
        let dc = self.dc();
        for r in self.allowed_routes(k) {
            if r < dc && self.cacheable(k, r) {
                out.push(TaskOption::Offload { route: r, cache: r });
            }
            out.push(TaskOption::Offload { route: r, cache: dc });
            for c in (0..dc).filter(|&c| c != r && self.cacheable(k, c)) {
                out.push(TaskOption::Offload { route: r, cache: c });
            }
        }
        out
    }

    pub fn option_value(&self, k: usize, o: TaskOption) -> f64 {
        match o {
            TaskOption::Local => self.tau_loc[k],
            TaskOption::Offload { route, cache } => {
                let saved = if route == cache { self.eta * self.reward_at(k, route) } else { 0.0 };
                self.delay(k, route) - saved
            }
        }
    }

    pub fn apply(&self, dv: &mut DecisionVector, k: usize, o: TaskOption) {
        match o {
            TaskOption::Local => dv.set_local(k),
            TaskOption::Offload { route, cache } => dv.set_offload(k, route, cache),
        }
    }

    /// The option a binary decision takes for task `k`.
    pub fn option_of(&self, dv: &DecisionVector, k: usize) -> TaskOption {
        match dv.chosen_route(k) {
            None => TaskOption::Local,
            Some(route) => TaskOption::Offload { route, cache: dv.chosen_cache(k).unwrap_or(self.dc()) },
        }
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) one option's resource use.
    pub fn account(&self, l: &mut Loads, k: usize, o: TaskOption, sign: f64) {
        if let TaskOption::Offload { route, cache } = o {
            l.spectrum[self.home[k]] += sign * self.plan.a[k];
            if route < self.stations {
                l.compute_hz[route] += sign * self.plan.p(k, route);
                if cache == route {
                    l.cache_bits[route] += sign * self.plan.c(k, route);
                }
            }
        }
    }
}
