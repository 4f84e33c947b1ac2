//! Proximal block-coordinate descent on the relaxed problem.
//!
//! Each iteration picks one of the blocks `x`, `y`, `w` and replaces it by
//! the minimiser of `B(z) + rho/2 |z_b - anchor_b|^2` over that block's
//! feasible set: a box for `x`, a per-task simplex over the allowed routes
//! for `y`, and a per-task simplex over cache locations for `w`. `y` is the
//! routing of a task conditional on offloading, so the effective flow on a
//! route is `x * y`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::costmodel::{Block, DecisionVector, Mode, Problem};
use crate::error::{Error, Result};
use crate::projection::{project_box, project_simplex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Cyclic,
    GaussSouthwell,
    Randomized,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Cyclic, Rule::GaussSouthwell, Rule::Randomized];

    pub fn short(self) -> &'static str {
        match self {
            Rule::Cyclic => "cyclic",
            Rule::GaussSouthwell => "gs",
            Rule::Randomized => "random",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rule> {
        match s {
            "cyclic" => Ok(Rule::Cyclic),
            "gs" | "gauss_southwell" | "gauss-southwell" => Ok(Rule::GaussSouthwell),
            "random" | "randomized" => Ok(Rule::Randomized),
            _ => Err(Error::Parameter(format!("unknown rule {s:?} (cyclic, gs, random)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub rho: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub rule: Rule,
    pub seed: u64,
    pub subproblem_iters: usize,
    pub subproblem_tol: f64,
}

impl SolverParams {
    pub fn from_config(c: &SolverConfig, seed: u64) -> SolverParams {
        SolverParams {
            rho: c.rho,
            epsilon: c.epsilon,
            max_iters: c.max_iters,
            rule: c.rule,
            seed,
            subproblem_iters: c.subproblem_iters,
            subproblem_tol: c.subproblem_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.epsilon > 0.0 && self.subproblem_tol > 0.0) {
            return Err(Error::Parameter("rho, epsilon and subproblem_tol must be > 0".into()));
        }
        if self.max_iters == 0 || self.subproblem_iters == 0 {
            return Err(Error::Parameter("iteration limits must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams::from_config(&SolverConfig::default(), 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Objective at the initial point, then after every iteration.
    pub objective_per_iter: Vec<f64>,
    /// Proximal value of each iteration's block problem at its solution
    /// (first entry: the initial objective).
    pub proximal_per_iter: Vec<f64>,
    pub blocks: Vec<Block>,
    pub iterations: usize,
    pub converged: bool,
    pub rule_used: Rule,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `B(candidate) + rho/2 |candidate - iterate|^2`.
pub fn proximal_value(p: &Problem, candidate: &DecisionVector, iterate: &DecisionVector, rho: f64) -> f64 {
    let d = sq_dist(&candidate.x, &iterate.x) + sq_dist(&candidate.y, &iterate.y) + sq_dist(&candidate.w, &iterate.w);
    p.objective(candidate) + 0.5 * rho * d
}

/// Projects one block onto its feasible set in place.
pub fn project_block(p: &Problem, dv: &mut DecisionVector, block: Block) {
    let nr = p.routes();
    match block {
        Block::X => project_box(&mut dv.x, &p.x_lo, &p.x_hi),
        Block::Y => {
            for k in 0..p.tasks {
                let mask = &p.allowed[k * nr..(k + 1) * nr];
                project_simplex(dv.y_row_mut(k), Some(mask));
            }
        }
        Block::W => {
            for k in 0..p.tasks {
                let mask = &p.cacheable[k * nr..(k + 1) * nr];
                project_simplex(dv.w_row_mut(k), Some(mask));
            }
        }
    }
}

/// Norm of the projected-gradient step `rho * (z - P(z - grad / rho))`:
/// zero exactly when the block is stationary.
pub fn gradient_mapping_norm(p: &Problem, dv: &DecisionVector, block: Block, rho: f64) -> f64 {
    let g = p.gradient(dv, block);
    let mut t = dv.clone();
    for (z, gi) in t.block_mut(block).iter_mut().zip(&g) {
        *z -= gi / rho;
    }
    project_block(p, &mut t, block);
    rho * sq_dist(t.block(block), dv.block(block)).sqrt()
}

/// Minimises the proximal function over one block by projected gradient.
/// The objective is affine in each block, so the step `1/rho` is exact and
/// the loop normally stops after its second pass.
pub fn solve_block(p: &Problem, iterate: &DecisionVector, block: Block, params: &SolverParams) -> Result<DecisionVector> {
    let rho = params.rho;
    let anchor = iterate.block(block).to_vec();
    let mut z = iterate.clone();
    for _ in 0..params.subproblem_iters {
        let g = p.gradient(&z, block);
        let mut next = z.clone();
        for ((v, gi), a) in next.block_mut(block).iter_mut().zip(&g).zip(&anchor) {
            let grad = gi + rho * (*v - a);
            *v -= grad / rho;
        }
        project_block(p, &mut next, block);
        let step = next.block(block).iter().zip(z.block(block)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        z = next;
        if step <= params.subproblem_tol {
            break;
        }
    }
    let h0 = p.objective(iterate);
    let h1 = proximal_value(p, &z, iterate, rho);
    if !h1.is_finite() {
        return Err(Error::Solver(format!("block {} produced a non-finite proximal value", block.name())));
    }
    if h1 > h0 {
        if h1 - h0 > 1e-9 * h0.abs().max(1.0) {
            return Err(Error::Solver(format!(
                "block {} subproblem diverged: proximal value {h1} above anchor value {h0}",
                block.name()
            )));
        }
        return Ok(iterate.clone());
    }
    Ok(z)
}

pub fn select_block(rule: Rule, p: &Problem, iterate: &DecisionVector, t: usize, seed: u64, rho: f64) -> Block {
    match rule {
        Rule::Cyclic => Block::ALL[t % 3],
        Rule::GaussSouthwell => {
            let mut best = Block::X;
            let mut best_norm = -1.0;
            for b in Block::ALL {
                let n = gradient_mapping_norm(p, iterate, b, rho);
                if n > best_norm {
                    best = b;
                    best_norm = n;
                }
            }
            best
        }
        Rule::Randomized => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            Block::ALL[rng.gen_range(0..3)]
        }
    }
}

/// Best offload route of task `k` ignoring shared capacities, with its cache column.
fn best_offload(p: &Problem, k: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, f64, usize)> = None;
    for r in p.allowed_routes(k) {
        let cached = r < p.stations && p.cacheable(k, r);
        let v = p.delay(k, r) - if cached { p.eta * p.reward[k] } else { 0.0 };
        if best.map_or(true, |(_, b, _)| v < b) {
            best = Some((r, v, if cached { r } else { p.dc() }));
        }
    }
    best.map(|(r, _, c)| (r, c))
}

/// A feasible starting point. Tasks the device can run start local, others
/// offloaded. Routing and caching rows of every task that can offload point
/// at its best option (lowest delay minus weighted saving, caching where it
/// runs), so that the first `x` update compares local execution against it
/// and no task starts where its caching gradient vanishes. Capacities are
/// left to rounding and repair.
pub fn initial_point(p: &Problem) -> Result<DecisionVector> {
    let mut dv = DecisionVector::zeros(p.tasks, p.stations, Mode::Relaxed);
    for k in 0..p.tasks {
        match best_offload(p, k).filter(|_| p.can_offload(k)) {
            Some((r, c)) => {
                dv.set_offload(k, r, c);
                dv.x[k] = if p.alpha[k] == 1 { 0.0 } else { 1.0 };
            }
            None if p.can_stay_local(k) => dv.set_local(k),
            None => return Err(Error::Infeasible { task: k, reason: "no route has finite delay".into() }),
        }
    }
    for b in Block::ALL {
        project_block(p, &mut dv, b);
    }
    Ok(dv)
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    let d = (prev - cur).abs();
    if d == 0.0 {
        0.0
    } else {
        d / prev.abs().max(f64::MIN_POSITIVE)
    }
}

/// True when no single block update would lower the objective by more than
/// `epsilon` relative to its current value.
fn blockwise_stationary(p: &Problem, dv: &DecisionVector, params: &SolverParams) -> Result<bool> {
    let b0 = p.objective(dv);
    for b in Block::ALL {
        let trial = solve_block(p, dv, b, params)?;
        let gain = b0 - proximal_value(p, &trial, dv, params.rho);
        if gain > params.epsilon * b0.abs().max(f64::MIN_POSITIVE) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs block descent from [`initial_point`] until the proximal value
/// changes by at most `epsilon` (relative) and no block can improve by more,
/// or `max_iters` is reached.
pub fn run_bsum(p: &Problem, params: &SolverParams) -> Result<(DecisionVector, SolveTrace)> {
    params.validate()?;
    let init = initial_point(p)?;
    run_bsum_from(p, params, init)
}

pub fn run_bsum_from(p: &Problem, params: &SolverParams, init: DecisionVector) -> Result<(DecisionVector, SolveTrace)> {
    let mut dv = init;
    let b0 = p.objective(&dv);
    let mut trace = SolveTrace {
        objective_per_iter: vec![b0],
        proximal_per_iter: vec![b0],
        blocks: Vec::new(),
        iterations: 0,
        converged: false,
        rule_used: params.rule,
    };
    let mut prev = b0;
    for t in 0..params.max_iters {
        let block = select_block(params.rule, p, &dv, t, params.seed, params.rho);
        let next = solve_block(p, &dv, block, params)?;
        let bj = proximal_value(p, &next, &dv, params.rho);
        dv = next;
        trace.objective_per_iter.push(p.objective(&dv));
        trace.proximal_per_iter.push(bj);
        trace.blocks.push(block);
        trace.iterations = t + 1;
        if relative_change(prev, bj) <= params.epsilon && blockwise_stationary(p, &dv, params)? {
            trace.converged = true;
            break;
        }
        prev = bj;
    }
    Ok((dv, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_desk, Hand};

    fn params(rule: Rule) -> SolverParams {
        SolverParams { rule, ..SolverParams::default() }
    }

    #[test]
    fn rule_names_parse() {
        assert_eq!("gs".parse::<Rule>().unwrap(), Rule::GaussSouthwell);
        assert_eq!("random".parse::<Rule>().unwrap(), Rule::Randomized);
        assert!("newton".parse::<Rule>().is_err());
    }

    #[test]
    fn proximal_value_at_iterate_is_objective() {
        let sc = random_desk(1, 4, 4, 16).unwrap();
        let p = Problem::new(&sc);
        let dv = initial_point(&p).unwrap();
        assert_eq!(proximal_value(&p, &dv, &dv, 2.0), p.objective(&dv));
        let mut c = dv.clone();
        c.x[0] = 1.0 - c.x[0];
        let expect = p.objective(&c) + 0.5 * 2.0 * (c.x[0] - dv.x[0]).powi(2);
        assert!((proximal_value(&p, &c, &dv, 2.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn cyclic_and_random_selection() {
        let sc = random_desk(2, 3, 3, 9).unwrap();
        let p = Problem::new(&sc);
        let dv = initial_point(&p).unwrap();
        let seq: Vec<Block> = (0..4).map(|t| select_block(Rule::Cyclic, &p, &dv, t, 0, 1.0)).collect();
        assert_eq!(seq, [Block::X, Block::Y, Block::W, Block::X]);
        let a: Vec<Block> = (0..20).map(|t| select_block(Rule::Randomized, &p, &dv, t, 7, 1.0)).collect();
        let b: Vec<Block> = (0..20).map(|t| select_block(Rule::Randomized, &p, &dv, t, 7, 1.0)).collect();
        assert_eq!(a, b);
        assert!(Block::ALL.iter().all(|bl| a.contains(bl)));
    }

    #[test]
    fn gauss_southwell_picks_the_only_moving_block() {
        // One task that must offload, pinned to its only allowed route:
        // x and y cannot move, caching at the edge can.
        let mut h = Hand::new(1);
        h.task(0, 1e6, 0.5, 100.0, 1e6);
        h.rate(0, 0, 5.0);
        h.eta = Some(0.1);
        let mut sc = h.build();
        sc.stations[0].dc_capacity_bps = 0.0;
        let p = Problem::new(&sc);
        assert_eq!(p.x_lo[0], 1.0);
        let mut dv = initial_point(&p).unwrap();
        assert_eq!(dv.chosen_cache(0), Some(0));
        dv.set_offload(0, 0, p.dc());
        assert_eq!(gradient_mapping_norm(&p, &dv, Block::X, 1.0), 0.0);
        assert_eq!(gradient_mapping_norm(&p, &dv, Block::Y, 1.0), 0.0);
        assert_eq!(select_block(Rule::GaussSouthwell, &p, &dv, 0, 0, 1.0), Block::W);
    }

    #[test]
    fn block_solution_beats_feasible_points() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let sc = random_desk(seed, 4, 5, 20).unwrap();
            let p = Problem::new(&sc);
            let dv = initial_point(&p).unwrap();
            for b in Block::ALL {
                let opt = solve_block(&p, &dv, b, &params(Rule::Cyclic)).unwrap();
                let h = proximal_value(&p, &opt, &dv, 1.0);
                assert!(h <= p.objective(&dv) + 1e-12);
                for _ in 0..20 {
                    let mut c = dv.clone();
                    for v in c.block_mut(b).iter_mut() {
                        *v = rng.gen();
                    }
                    project_block(&p, &mut c, b);
                    assert!(h <= proximal_value(&p, &c, &dv, 1.0) + 1e-9 * h.abs().max(1.0));
                }
                // a nearly unregularised step lands on the block minimiser of B,
                // which is then a fixed point for any rho
                let stiff = SolverParams { rho: 1e-9, ..params(Rule::Cyclic) };
                let mut fixed = opt;
                for _ in 0..3 {
                    fixed = solve_block(&p, &fixed, b, &stiff).unwrap();
                }
                let again = solve_block(&p, &fixed, b, &params(Rule::Cyclic)).unwrap();
                let moved = sq_dist(again.block(b), fixed.block(b)).sqrt();
                assert!(moved <= 1e-9, "block {b:?} moved {moved} from a blockwise optimum");
            }
        }
    }

    #[test]
    fn single_task_picks_cheaper_route() {
        // Device too slow for the deadline; edge execution takes 3 s and the
        // data centre 1.45 s, so all routing mass goes to the data centre.
        let mut h = Hand::new(1);
        h.task(0, 25e6, 10.0, 160.0, 1e6);
        let sc = h.build();
        let p = Problem::new(&sc);
        assert_eq!(p.x_lo[0], 1.0);
        let mut dv = initial_point(&p).unwrap();
        assert_eq!(dv.y_row(0), &[0.0, 1.0]);
        dv.set_offload(0, 0, 1);
        dv = solve_block(&p, &dv, Block::Y, &params(Rule::Cyclic)).unwrap();
        assert!(dv.y_dc(0) > dv.y_local(0, 0));
        let (fin, tr) = run_bsum(&p, &params(Rule::Cyclic)).unwrap();
        assert!(tr.converged);
        assert_eq!(fin.y_row(0), &[0.0, 1.0]);
    }

    #[test]
    fn pure_local_optimum() {
        let mut h = Hand::new(2);
        for i in 0..4 {
            h.task(i % 2, 1e5, 10.0, 10.0 + i as f64, 1e9);
        }
        let sc = h.build();
        let p = Problem::new(&sc);
        for rule in Rule::ALL {
            let (dv, tr) = run_bsum(&p, &params(rule)).unwrap();
            assert!(tr.converged);
            assert!(dv.x.iter().all(|&x| x == 0.0));
            let sum_l: f64 = sc.tasks.iter().map(|t| t.data_bits * t.workload_cpb / 1e9).sum();
            assert!((p.objective(&dv) - sum_l).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_point_cases() {
        let mut h = Hand::new(1);
        h.task(0, 1e5, 10.0, 10.0, 1e9);
        let sc = h.build();
        let dv = initial_point(&Problem::new(&sc)).unwrap();
        assert_eq!(dv.x, vec![0.0]);

        // slow backhaul makes the home station the best route
        let mut h = Hand::new(2);
        h.task(0, 1e6, 3.0, 100.0, 1e6);
        h.task(1, 1e6, 3.0, 100.0, 1e6);
        for s in &mut h.stations {
            s.dc_capacity_bps = 1e6;
        }
        let sc = h.build();
        let dv = initial_point(&Problem::new(&sc)).unwrap();
        assert_eq!(dv.x, vec![1.0, 1.0]);
        assert_eq!(dv.y_local(0, 0), 1.0);
        assert_eq!(dv.y_local(1, 1), 1.0);

        // home compute too small to meet the deadline: start at the data centre
        let mut h = Hand::new(1);
        h.task(0, 1e6, 0.5, 100.0, 1e6);
        h.stations[0].compute_hz = 1e8;
        let sc = h.build();
        let p = Problem::new(&sc);
        let dv = initial_point(&p).unwrap();
        assert_eq!(dv.y_dc(0), 1.0);
        let r = crate::costmodel::constraint_residuals(&sc, &dv, &p.plan);
        assert!(r.capacities_satisfied(&sc) && r.routing_satisfied());

        // nothing can carry the task and the device cannot run it
        let mut h = Hand::new(1);
        h.task(0, 1e6, 0.5, 100.0, 1e6);
        h.stations[0].bandwidth_hz = 1e-300;
        h.stations[0].dc_capacity_bps = 0.0;
        let sc = h.build();
        let mut p = Problem::new(&sc);
        p.allowed.fill(false);
        p.x_hi[0] = 0.0;
        p.x_lo[0] = 1.0;
        assert!(matches!(initial_point(&p), Err(Error::Infeasible { task: 0, .. })));
    }

    #[test]
    fn deterministic_trace() {
        let sc = random_desk(5, 6, 6, 36).unwrap();
        let p = Problem::new(&sc);
        for rule in Rule::ALL {
            let a = run_bsum(&p, &SolverParams { seed: 3, ..params(rule) }).unwrap();
            let b = run_bsum(&p, &SolverParams { seed: 3, ..params(rule) }).unwrap();
            assert_eq!(a, b);
        }
    }
}
