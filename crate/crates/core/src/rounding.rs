//! Threshold rounding of a relaxed solution, capacity violations, a
//! penalised local search that trades delay against violations, and the
//! integrality gap.

use serde::{Deserialize, Serialize};

use crate::costmodel::{excess, loads, AllocationView, DecisionVector, Loads, Mode, Problem, TaskOption};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub delta_a: f64,
    pub delta_p: f64,
    pub delta_m: f64,
    pub delta_total: f64,
    pub xi: f64,
}

impl ViolationReport {
    pub fn penalty(&self) -> f64 {
        self.xi * self.delta_total
    }

    pub fn is_feasible(&self) -> bool {
        self.delta_total == 0.0
    }
}

/// Sums of per-station capacity excesses.
pub fn violations_of(l: &Loads, compute_cap: &[f64], cache_cap: &[f64], xi: f64) -> ViolationReport {
    let delta_a: f64 = l.spectrum.iter().map(|&v| excess(v, 1.0)).sum();
    let delta_p: f64 = l.compute_hz.iter().zip(compute_cap).map(|(&v, &c)| excess(v, c)).sum();
    let delta_m: f64 = l.cache_bits.iter().zip(cache_cap).map(|(&v, &c)| excess(v, c)).sum();
    ViolationReport { delta_a, delta_p, delta_m, delta_total: delta_a + delta_p + delta_m, xi }
}

pub fn violations(sc: &Scenario, dv: &DecisionVector, alloc: &AllocationView, xi: f64) -> ViolationReport {
    let compute: Vec<f64> = sc.stations.iter().map(|s| s.compute_hz).collect();
    let cache: Vec<f64> = sc.stations.iter().map(|s| s.cache_bits).collect();
    violations_of(&loads(sc, dv, alloc), &compute, &cache, xi)
}

/// Violations under the planning shares of `p`.
pub fn problem_violations(p: &Problem, dv: &DecisionVector, xi: f64) -> ViolationReport {
    violations_of(&p.loads(dv), &p.compute_cap, &p.cache_cap, xi)
}

/// Index of the largest entry among `candidates`; ties go to the lowest key.
fn pick<K: PartialOrd>(candidates: impl Iterator<Item = usize>, value: impl Fn(usize) -> f64, key: impl Fn(usize) -> K) -> Option<usize> {
    let mut best: Option<usize> = None;
    for c in candidates {
        best = match best {
            None => Some(c),
            Some(b) => {
                let (vc, vb) = (value(c), value(b));
                if vc > vb || (vc == vb && key(c) < key(b)) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Rounds entries at or above `theta` to one and the rest to zero, then
/// repairs each task so it runs in exactly one place: an offloaded task
/// keeps the allowed route with the largest relaxed value (ties: lower
/// planned delay, then lower column) and likewise one cache column.
pub fn threshold_round(p: &Problem, relaxed: &DecisionVector, theta: f64) -> Result<DecisionVector> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Parameter(format!("rounding threshold {theta} outside (0, 1)")));
    }
    let mut out = DecisionVector::zeros(p.tasks, p.stations, Mode::Binary);
    for k in 0..p.tasks {
        let x: f64 = if relaxed.x[k] >= theta { 1.0 } else { 0.0 };
        let x = x.clamp(p.x_lo[k], p.x_hi[k]);
        if x == 0.0 {
            out.set_local(k);
            continue;
        }
        let y = relaxed.y_row(k);
        let above: Vec<usize> = p.allowed_routes(k).filter(|&r| y[r] >= theta).collect();
        let pool: Vec<usize> = if above.is_empty() { p.allowed_routes(k).collect() } else { above };
        let route = pick(pool.into_iter(), |r| y[r], |r| (p.delay(k, r), r))
            .ok_or_else(|| Error::Infeasible { task: k, reason: "offloading forced with no allowed route".into() })?;
        let w = relaxed.w_row(k);
        let above: Vec<usize> = (0..p.routes()).filter(|&c| p.cacheable(k, c) && w[c] >= theta).collect();
        let pool: Vec<usize> = if above.is_empty() { (0..p.routes()).filter(|&c| p.cacheable(k, c)).collect() } else { above };
        let cache = pick(pool.into_iter(), |c| w[c], |c| c).unwrap_or(p.dc());
        out.set_offload(k, route, cache);
    }
    Ok(out)
}

fn station_penalty(p: &Problem, l: &Loads, m: usize) -> f64 {
    excess(l.spectrum[m], 1.0) + excess(l.compute_hz[m], p.compute_cap[m]) + excess(l.cache_bits[m], p.cache_cap[m])
}

fn touched(p: &Problem, k: usize, a: TaskOption, b: TaskOption) -> Vec<usize> {
    let mut s = vec![p.home[k]];
    for o in [a, b] {
        if let TaskOption::Offload { route, .. } = o {
            if route < p.stations {
                s.push(route);
            }
        }
    }
    s.sort_unstable();
    s.dedup();
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolveTrace {
    /// `B + xi * Delta` before the search and after every accepted move.
    pub penalized: Vec<f64>,
    pub moves: usize,
}

/// Local search on `B + xi * Delta` over single-task changes of route and
/// cache placement. Each step applies one strictly improving move: the
/// largest gain among moves that leave the penalty unchanged or lower it
/// for free, otherwise the move that removes penalty at the lowest
/// objective cost per unit. The search stops when no move improves.
/// Inputs without violations are returned unchanged.
pub fn penalized_resolve(p: &Problem, binary: &DecisionVector, xi: f64) -> Result<(DecisionVector, ResolveTrace)> {
    if binary.mode != Mode::Binary {
        return Err(Error::Parameter("penalized_resolve needs a binary decision".into()));
    }
    let start = problem_violations(p, binary, xi);
    let b0 = p.objective(binary);
    let mut trace = ResolveTrace { penalized: vec![b0 + start.penalty()], moves: 0 };
    if start.is_feasible() {
        return Ok((binary.clone(), trace));
    }
    let mut dv = binary.clone();
    let mut l = p.loads(&dv);
    let mut current: Vec<TaskOption> = (0..p.tasks).map(|k| p.option_of(&dv, k)).collect();
    let options: Vec<Vec<TaskOption>> = (0..p.tasks).map(|k| p.options(k)).collect();
    let mut value = *trace.penalized.last().unwrap();
    let max_moves = 4 * p.tasks * p.routes().pow(2) + 16;
    while trace.moves < max_moves {
        let mut best: Option<(usize, TaskOption, (u8, f64))> = None;
        for k in 0..p.tasks {
            let cur = current[k];
            let v_cur = p.option_value(k, cur);
            for &o in &options[k] {
                if o == cur {
                    continue;
                }
                let st = touched(p, k, cur, o);
                let before: f64 = st.iter().map(|&m| station_penalty(p, &l, m)).sum();
                p.account(&mut l, k, cur, -1.0);
                p.account(&mut l, k, o, 1.0);
                let after: f64 = st.iter().map(|&m| station_penalty(p, &l, m)).sum();
                p.account(&mut l, k, o, -1.0);
                p.account(&mut l, k, cur, 1.0);
                let db = p.option_value(k, o) - v_cur;
                let dpen = xi * (after - before);
                let change = db + dpen;
                if !(change < -1e-12 * value.abs().max(1.0)) {
                    continue;
                }
                // moves that remove no penalty rank first by their gain,
                // then the rest by objective cost per unit of penalty removed
                let key = if dpen >= 0.0 { (0, change) } else { (1, db / -dpen) };
                if best.map_or(true, |(_, _, b)| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
                    best = Some((k, o, key));
                }
            }
        }
        let Some((k, o, _)) = best else { break };
        let prev = current[k];
        p.apply(&mut dv, k, o);
        current[k] = o;
        // recompute from scratch so accumulated rounding never drifts
        l = p.loads(&dv);
        let now = p.objective(&dv) + problem_violations(p, &dv, xi).penalty();
        if now > value {
            // the incremental estimate was lost to cancellation; undo and stop
            p.apply(&mut dv, k, prev);
            break;
        }
        value = now;
        trace.penalized.push(value);
        trace.moves += 1;
    }
    Ok((dv, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub beta: Option<f64>,
    pub relaxed: f64,
    pub rounded: f64,
}

/// `relaxed / rounded`, where `rounded` already includes `xi * Delta`.
/// Undefined when the denominator is not positive, except that equal
/// objectives give exactly one.
pub fn integrality_gap(relaxed_obj: f64, rounded_obj: f64) -> Gap {
    let beta = if relaxed_obj == rounded_obj {
        Some(1.0)
    } else if rounded_obj > 0.0 {
        Some(relaxed_obj / rounded_obj)
    } else {
        None
    };
    Gap { beta, relaxed: relaxed_obj, rounded: rounded_obj }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{constraint_residuals, planning_allocation};
    use crate::fixtures::Hand;

    /// Two stations, each with one task the devices cannot run in time.
    fn pair() -> (Scenario, Problem) {
        let mut h = Hand::new(2);
        h.task(0, 1e6, 2.0, 300.0, 1e6);
        h.task(1, 1e6, 2.0, 300.0, 1e6);
        let sc = h.build();
        let p = Problem::new(&sc);
        (sc, p)
    }

    #[test]
    fn threshold_cases() {
        let (_, p) = pair();
        let mut r = DecisionVector::zeros(2, 2, Mode::Relaxed);
        r.x = vec![0.8, 0.69];
        r.y_row_mut(0).copy_from_slice(&[0.8, 0.0, 0.2]);
        r.y_row_mut(1).copy_from_slice(&[0.0, 0.69, 0.31]);
        r.w_row_mut(0)[2] = 1.0;
        r.w_row_mut(1)[2] = 1.0;
        // task 1 must offload, so its x is forced up regardless of the threshold
        let b = threshold_round(&p, &r, 0.7).unwrap();
        assert_eq!(b.x, vec![1.0, 1.0]);
        assert_eq!(b.chosen_route(0), Some(0));
        assert_eq!(b.chosen_route(1), Some(1));
        assert!(threshold_round(&p, &r, 7.0).is_err());
        assert!(threshold_round(&p, &r, 0.0).is_err());
    }

    #[test]
    fn repair_keeps_the_larger_route() {
        let (sc, p) = pair();
        let mut r = DecisionVector::zeros(2, 2, Mode::Relaxed);
        r.x = vec![1.0, 1.0];
        r.y_row_mut(0).copy_from_slice(&[0.8, 0.0, 0.75]);
        r.y_row_mut(1).copy_from_slice(&[0.0, 0.5, 0.5]);
        r.w_row_mut(0).copy_from_slice(&[0.3, 0.3, 0.4]);
        r.w_row_mut(1).copy_from_slice(&[0.0, 0.0, 1.0]);
        let b = threshold_round(&p, &r, 0.7).unwrap();
        assert_eq!(b.y_row(0), &[1.0, 0.0, 0.0]);
        // tie between home and data centre goes to the lower planned delay
        let want = if p.delay(1, 1) <= p.delay(1, 2) { 1 } else { 2 };
        assert_eq!(b.chosen_route(1), Some(want));
        assert_eq!(b.chosen_cache(0), Some(2));
        let res = constraint_residuals(&sc, &b, &planning_allocation(&sc));
        assert!(res.one_location.iter().all(|&v| v == 0.0));
        assert!(res.dominance.iter().all(|&v| v <= 0.0));
        b.validate().unwrap();
    }

    #[test]
    fn compute_overload_is_measured() {
        let (sc, p) = pair();
        let mut dv = DecisionVector::zeros(2, 2, Mode::Binary);
        dv.set_offload(0, 0, 2);
        dv.set_offload(1, 0, 2);
        let mut al = p.plan.clone();
        al.set_p(0, 0, 2e9);
        al.set_p(1, 0, 1e9);
        let v = violations(&sc, &dv, &al, 0.5);
        assert_eq!(v.delta_p, 1e9);
        assert_eq!(v.delta_a, 0.0);
        assert_eq!(v.delta_total, 1e9);
        assert_eq!(v.penalty(), 0.5e9);
        let ok = DecisionVector::zeros(2, 2, Mode::Binary);
        assert!(violations(&sc, &ok, &al, 0.5).is_feasible());
    }

    #[test]
    fn resolve_leaves_feasible_input_alone() {
        let (_, p) = pair();
        let mut dv = DecisionVector::zeros(2, 2, Mode::Binary);
        dv.set_offload(0, 0, 2);
        dv.set_offload(1, 1, 2);
        let (out, tr) = penalized_resolve(&p, &dv, 0.14285).unwrap();
        assert_eq!(out, dv);
        assert_eq!(tr.moves, 0);
    }

    #[test]
    fn resolve_moves_overflow_to_the_free_station() {
        let (sc, p) = pair();
        // task 1 forwarded onto station 0, which its own task already fills
        let mut dv = DecisionVector::zeros(2, 2, Mode::Binary);
        dv.set_offload(0, 0, 2);
        dv.set_offload(1, 0, 2);
        assert!(problem_violations(&p, &dv, 0.14285).delta_p > 0.0);
        let (out, tr) = penalized_resolve(&p, &dv, 0.14285).unwrap();
        assert!(problem_violations(&p, &out, 0.14285).is_feasible());
        assert!(tr.penalized.windows(2).all(|w| w[1] <= w[0]));
        let res = constraint_residuals(&sc, &out, &p.plan);
        assert!(res.routing_satisfied() && res.capacities_satisfied(&sc));
        // the cheaper of home execution and the data centre for task 1
        let want = if p.delay(1, 1) <= p.delay(1, 2) { 1 } else { 2 };
        assert_eq!(out.chosen_route(1), Some(want));
    }

    #[test]
    fn gap_conventions() {
        assert_eq!(integrality_gap(3.0, 3.0).beta, Some(1.0));
        assert_eq!(integrality_gap(2.0, 4.0).beta, Some(0.5));
        assert_eq!(integrality_gap(-2.0, -1.0).beta, None);
        let g = integrality_gap(1.0, 0.0);
        assert_eq!((g.beta, g.relaxed, g.rounded), (None, 1.0, 0.0));
    }
}
