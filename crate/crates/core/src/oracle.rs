//! Exhaustive search over binary decisions for tiny instances.

use serde::{Deserialize, Serialize};

use crate::costmodel::{excess, DecisionVector, Loads, Mode, Problem, TaskOption};
use crate::error::{Error, Result};

/// Largest number of complete decision vectors the oracle will consider.
pub const MAX_COMBINATIONS: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleOutcome {
    Optimal { decision: DecisionVector, objective: f64 },
    /// No binary decision meets every capacity.
    Infeasible,
}

pub fn combinations(p: &Problem) -> u128 {
    (0..p.tasks).map(|k| p.options(k).len() as u128).product()
}

struct Search<'a> {
    p: &'a Problem,
    options: Vec<Vec<TaskOption>>,
    /// Smallest option value of tasks `k..`.
    tail_min: Vec<f64>,
    loads: Loads,
    chosen: Vec<TaskOption>,
    best: Option<(Vec<TaskOption>, f64)>,
}

impl Search<'_> {
    fn within_capacity(&self, k: usize, o: TaskOption) -> bool {
        let p = self.p;
        let h = p.home[k];
        if excess(self.loads.spectrum[h], 1.0) > 0.0 {
            return false;
        }
        match o {
            TaskOption::Offload { route, .. } if route < p.stations => {
                excess(self.loads.compute_hz[route], p.compute_cap[route]) == 0.0
                    && excess(self.loads.cache_bits[route], p.cache_cap[route]) == 0.0
            }
            _ => true,
        }
    }

    fn dfs(&mut self, k: usize, partial: f64) {
        if k == self.p.tasks {
            if self.best.as_ref().map_or(true, |(_, b)| partial < *b) {
                self.best = Some((self.chosen.clone(), partial));
            }
            return;
        }
        if let Some((_, b)) = &self.best {
            if partial + self.tail_min[k] >= *b {
                return;
            }
        }
        for i in 0..self.options[k].len() {
            let o = self.options[k][i];
            self.p.account(&mut self.loads, k, o, 1.0);
            if self.within_capacity(k, o) {
                self.chosen.push(o);
                self.dfs(k + 1, partial + self.p.option_value(k, o));
                self.chosen.pop();
            }
            self.p.account(&mut self.loads, k, o, -1.0);
        }
    }
}

/// Minimum objective over every binary decision that satisfies the
/// one-location rule and all station capacities exactly. Ties keep the
/// first decision in task-by-task option order.
pub fn brute_force_solve(p: &Problem) -> Result<OracleOutcome> {
    let n = combinations(p);
    if n > MAX_COMBINATIONS {
        return Err(Error::TooLargeInstance(n));
    }
    let options: Vec<Vec<TaskOption>> = (0..p.tasks).map(|k| p.options(k)).collect();
    if options.iter().any(|o| o.is_empty()) {
        return Ok(OracleOutcome::Infeasible);
    }
    let mut tail_min = vec![0.0; p.tasks + 1];
    for k in (0..p.tasks).rev() {
        let m = options[k].iter().map(|&o| p.option_value(k, o)).fold(f64::INFINITY, f64::min);
        tail_min[k] = tail_min[k + 1] + m;
    }
    let m = p.stations;
    let mut s = Search {
        p,
        options,
        tail_min,
        loads: Loads { spectrum: vec![0.0; m], compute_hz: vec![0.0; m], cache_bits: vec![0.0; m] },
        chosen: Vec::with_capacity(p.tasks),
        best: None,
    };
    s.dfs(0, 0.0);
    Ok(match s.best {
        None => OracleOutcome::Infeasible,
        Some((choice, _)) => {
            let mut dv = DecisionVector::zeros(p.tasks, p.stations, Mode::Binary);
            for (k, &o) in choice.iter().enumerate() {
                p.apply(&mut dv, k, o);
            }
            let objective = p.objective(&dv);
            OracleOutcome::Optimal { decision: dv, objective }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_desk, Hand};
    use crate::rounding::problem_violations;

    /// Plain enumeration of the full option product, no pruning.
    fn naive(p: &Problem) -> Option<f64> {
        let options: Vec<Vec<TaskOption>> = (0..p.tasks).map(|k| p.options(k)).collect();
        let mut idx = vec![0usize; p.tasks];
        let mut best: Option<f64> = None;
        loop {
            let mut dv = DecisionVector::zeros(p.tasks, p.stations, Mode::Binary);
            for k in 0..p.tasks {
                p.apply(&mut dv, k, options[k][idx[k]]);
            }
            if problem_violations(p, &dv, 1.0).is_feasible() {
                let v = p.objective(&dv);
                if best.map_or(true, |b| v < b) {
                    best = Some(v);
                }
            }
            let mut k = 0;
            loop {
                if k == p.tasks {
                    return best;
                }
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn agrees_with_plain_enumeration() {
        for seed in 0..25 {
            let sc = random_desk(seed, 3, 2, 4).unwrap();
            let p = Problem::new(&sc);
            match brute_force_solve(&p).unwrap() {
                OracleOutcome::Optimal { decision, objective } => {
                    let n = naive(&p).expect("naive search finds a feasible point");
                    assert!((n - objective).abs() <= 1e-12 * n.abs().max(1.0), "{n} vs {objective}");
                    assert!(problem_violations(&p, &decision, 1.0).is_feasible());
                }
                OracleOutcome::Infeasible => assert_eq!(naive(&p), None),
            }
        }
    }

    #[test]
    fn local_wins_when_fastest() {
        let mut h = Hand::new(1);
        h.task(0, 1e5, 10.0, 10.0, 1e9);
        let p = Problem::new(&h.build());
        let OracleOutcome::Optimal { decision, objective } = brute_force_solve(&p).unwrap() else { panic!() };
        assert_eq!(decision.x, vec![0.0]);
        assert_eq!(objective, p.tau_loc[0]);
    }

    #[test]
    fn forced_offload_takes_fastest_route() {
        let mut h = Hand::new(2);
        h.task(0, 25e6, 10.0, 160.0, 1e6);
        let p = Problem::new(&h.build());
        let OracleOutcome::Optimal { decision, .. } = brute_force_solve(&p).unwrap() else { panic!() };
        assert_eq!(decision.x, vec![1.0]);
        let fastest = (0..3).min_by(|&a, &b| p.delay(0, a).partial_cmp(&p.delay(0, b)).unwrap()).unwrap();
        assert_eq!(decision.chosen_route(0), Some(fastest));
    }

    #[test]
    fn size_limit() {
        let mut h = Hand::new(3);
        for i in 0..12 {
            h.task(i % 3, 1e6, 10.0, 300.0, 1e6);
        }
        let p = Problem::new(&h.build());
        assert!(matches!(brute_force_solve(&p), Err(Error::TooLargeInstance(_))));
    }

    #[test]
    fn reports_infeasible() {
        let mut h = Hand::new(1);
        h.task(0, 1e6, 10.0, 300.0, 1e6);
        let sc = h.build();
        let mut p = Problem::new(&sc);
        // spectrum already oversubscribed by the only offload option
        p.plan.a[0] = 2.0;
        p.allowed[1] = false;
        assert!(matches!(brute_force_solve(&p).unwrap(), OracleOutcome::Infeasible));
    }
}
