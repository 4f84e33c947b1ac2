//! Base stations and overlapping collaboration spaces.
//!
//! Spaces are formed by overlapping k-means: a station may join several
//! spaces, and its reconstruction `phi(m)` is the mean of the centroids of
//! all spaces it belongs to. The objective counts a station once per space
//! it belongs to, `sum_i sum_{m in M_i} |m - phi(m)|^2`, so a station's
//! contribution is `|A_m| * |m - phi(m)|^2` for its space set `A_m`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Span, TopologyConfig, BITS_PER_GB};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Above this many centroids the per-station subset search switches from
/// exhaustive enumeration to the nearest-first greedy chain.
pub const EXACT_ASSIGN_LIMIT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: u32,
    pub position: Point,
    pub bandwidth_hz: f64,
    pub compute_hz: f64,
    pub cache_bits: f64,
    /// Inter-station link capacities keyed by neighbour id.
    pub x2_capacity_bps: BTreeMap<u32, f64>,
    pub dc_capacity_bps: f64,
}

impl BaseStation {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.compute_hz > 0.0 && self.cache_bits >= 0.0) {
            return Err(Error::Parameter(format!(
                "station {}: bandwidth and compute must be > 0 and cache >= 0",
                self.id
            )));
        }
        if !(self.dc_capacity_bps >= 0.0) || self.x2_capacity_bps.values().any(|c| !(*c >= 0.0)) {
            return Err(Error::Parameter(format!("station {}: negative link capacity", self.id)));
        }
        Ok(())
    }

    pub fn x2_to(&self, other: u32) -> f64 {
        self.x2_capacity_bps.get(&other).copied().unwrap_or(0.0)
    }
}

/// Checks that inter-station links exist in both directions.
pub fn check_link_symmetry(stations: &[BaseStation]) -> Result<()> {
    let by_id: BTreeMap<u32, &BaseStation> = stations.iter().map(|s| (s.id, s)).collect();
    for s in stations {
        for n in s.x2_capacity_bps.keys() {
            match by_id.get(n) {
                Some(t) if t.x2_capacity_bps.contains_key(&s.id) => {}
                _ => {
                    return Err(Error::Parameter(format!("link {}->{} has no reverse link", s.id, n)));
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollaborationSpace {
    pub members: Vec<u32>,
    pub centroid: Point,
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn mean_of(points: impl Iterator<Item = Point>) -> Point {
    let mut acc = [0.0, 0.0];
    let mut n = 0usize;
    for p in points {
        acc[0] += p[0];
        acc[1] += p[1];
        n += 1;
    }
    [acc[0] / n as f64, acc[1] / n as f64]
}

/// Contribution of one station assigned to `set` (indices into `centroids`).
fn assignment_cost(pos: Point, set: &[usize], centroids: &[Point]) -> f64 {
    let phi = mean_of(set.iter().map(|&i| centroids[i]));
    set.len() as f64 * dist2(pos, phi)
}

pub fn okm_objective(spaces: &[CollaborationSpace], stations: &[BaseStation]) -> Result<f64> {
    let mut memberships: BTreeMap<u32, Vec<Point>> = BTreeMap::new();
    for sp in spaces {
        for &m in &sp.members {
            memberships.entry(m).or_default().push(sp.centroid);
        }
    }
    let mut total = 0.0;
    for s in stations {
        let cents = memberships.get(&s.id).ok_or(Error::Coverage(s.id))?;
        let phi = mean_of(cents.iter().copied());
        total += cents.len() as f64 * dist2(s.position, phi);
    }
    Ok(total)
}

fn better(cost: f64, set: &[usize], best_cost: f64, best: &[usize]) -> bool {
    if cost != best_cost {
        return cost < best_cost;
    }
    (set.len(), set) < (best.len(), best)
}

/// Space indices a station at `pos` should belong to, given the centroids.
///
/// Exhaustive over all non-empty subsets for up to [`EXACT_ASSIGN_LIMIT`]
/// centroids; otherwise centroids are taken nearest first and appended while
/// the station's contribution strictly decreases. Ties prefer smaller sets,
/// then lower indices.
pub fn multi_assign(pos: Point, centroids: &[Point]) -> Vec<usize> {
    assert!(!centroids.is_empty(), "multi_assign needs at least one centroid");
    let r = centroids.len();
    if r <= EXACT_ASSIGN_LIMIT {
        let mut best: Vec<usize> = vec![0];
        let mut best_cost = f64::INFINITY;
        let mut set = Vec::with_capacity(r);
        for mask in 1u32..(1u32 << r) {
            set.clear();
            set.extend((0..r).filter(|i| mask & (1 << i) != 0));
            let cost = assignment_cost(pos, &set, centroids);
            if better(cost, &set, best_cost, &best) {
                best_cost = cost;
                best.clone_from(&set);
            }
        }
        return best;
    }
    greedy_chain(pos, centroids)
}

fn greedy_chain(pos: Point, centroids: &[Point]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..centroids.len()).collect();
    order.sort_by(|&a, &b| {
        dist2(pos, centroids[a])
            .partial_cmp(&dist2(pos, centroids[b]))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut set = vec![order[0]];
    let mut cost = assignment_cost(pos, &set, centroids);
    for &c in &order[1..] {
        set.push(c);
        let next = assignment_cost(pos, &set, centroids);
        if next < cost {
            cost = next;
        } else {
            set.pop();
            break;
        }
    }
    set.sort_unstable();
    set
}

/// One full assignment step. When `prev` is given, a station keeps its
/// previous set unless the new one is strictly cheaper.
fn assign_all(stations: &[BaseStation], centroids: &[Point], prev: Option<&[Vec<usize>]>) -> Vec<Vec<usize>> {
    stations
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cand = multi_assign(s.position, centroids);
            match prev {
                Some(p) if assignment_cost(s.position, &p[i], centroids) <= assignment_cost(s.position, &cand, centroids) => {
                    p[i].clone()
                }
                _ => cand,
            }
        })
        .collect()
}

/// Exact minimisation of the objective in each centroid in turn, the others
/// held at their latest values. Without overlap this is the member mean.
fn update_centroids(stations: &[BaseStation], assign: &[Vec<usize>], centroids: &mut [Point]) {
    for c in 0..centroids.len() {
        let mut num = [0.0, 0.0];
        let mut den = 0.0;
        for (s, set) in stations.iter().zip(assign) {
            if !set.contains(&c) {
                continue;
            }
            let k = set.len() as f64;
            let mut adj = [k * s.position[0], k * s.position[1]];
            for &o in set.iter().filter(|&&o| o != c) {
                adj[0] -= centroids[o][0];
                adj[1] -= centroids[o][1];
            }
            num[0] += adj[0] / k;
            num[1] += adj[1] / k;
            den += 1.0 / k;
        }
        if den > 0.0 {
            centroids[c] = [num[0] / den, num[1] / den];
        }
    }
}

fn objective_of(stations: &[BaseStation], assign: &[Vec<usize>], centroids: &[Point]) -> f64 {
    stations
        .iter()
        .zip(assign)
        .map(|(s, set)| assignment_cost(s.position, set, centroids))
        .sum()
}

fn spaces_of(stations: &[BaseStation], assign: &[Vec<usize>], centroids: &[Point]) -> Vec<CollaborationSpace> {
    centroids
        .iter()
        .enumerate()
        .filter_map(|(c, &centroid)| {
            let members: Vec<u32> = stations
                .iter()
                .zip(assign)
                .filter(|(_, set)| set.contains(&c))
                .map(|(s, _)| s.id)
                .collect();
            (!members.is_empty()).then_some(CollaborationSpace { members, centroid })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OkmRun {
    pub spaces: Vec<CollaborationSpace>,
    /// Objective after initial assignment, then after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

pub fn run_okm_cs(stations: &[BaseStation], r: usize, t_max: usize, epsilon: f64, seed: u64) -> Result<OkmRun> {
    if r == 0 || r > stations.len() {
        return Err(Error::Parameter(format!("r = {r} must lie in [1, {}]", stations.len())));
    }
    if !(epsilon > 0.0) || t_max == 0 {
        return Err(Error::Parameter("epsilon must be > 0 and t_max >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, stations.len(), r).into_vec();
    picks.sort_unstable();
    let mut centroids: Vec<Point> = picks.iter().map(|&i| stations[i].position).collect();
    let mut assign = assign_all(stations, &centroids, None);
    let mut prev = objective_of(stations, &assign, &centroids);
    let mut trace = vec![prev];
    let mut iterations = 0;
    for _ in 0..t_max {
        iterations += 1;
        update_centroids(stations, &assign, &mut centroids);
        assign = assign_all(stations, &centroids, Some(&assign));
        let cur = objective_of(stations, &assign, &centroids);
        trace.push(cur);
        if prev - cur < epsilon {
            break;
        }
        prev = cur;
    }
    Ok(OkmRun { spaces: spaces_of(stations, &assign, &centroids), trace, iterations })
}

/// Capacity defaults for stations whose CSV row omits them.
#[derive(Clone, Debug, PartialEq)]
pub struct StationDefaults {
    pub bandwidth_hz: f64,
    pub compute_hz: f64,
    pub cache_bits: f64,
    pub dc_capacity_bps: f64,
}

impl StationDefaults {
    /// Midpoints of the configured ranges.
    pub fn from_config(cfg: &TopologyConfig) -> StationDefaults {
        StationDefaults {
            bandwidth_hz: cfg.bandwidth_mhz.mid() * 1e6,
            compute_hz: cfg.compute_ghz.mid() * 1e9,
            cache_bits: cfg.cache_gb.mid() * BITS_PER_GB,
            dc_capacity_bps: cfg.dc_mbps.mid() * 1e6,
        }
    }
}

/// Reads `id,x,y[,B_hz,P_hz,C_bytes]` rows (header required).
pub fn import_stations(path: &Path, defaults: &StationDefaults) -> Result<Vec<BaseStation>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: name.clone(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |msg: String| Error::Parse { path: name.clone(), line, msg };
        if rec.len() < 3 {
            return Err(bad(format!("expected at least 3 columns, found {}", rec.len())));
        }
        let num = |i: usize, col: &str| -> Result<Option<f64>> {
            match rec.get(i) {
                None | Some("") => Ok(None),
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(Some)
                    .ok_or_else(|| bad(format!("column {col}: not a number: {v:?}"))),
            }
        };
        let id = rec[0].parse::<u32>().map_err(|_| bad(format!("column id: not an integer: {:?}", &rec[0])))?;
        let x = num(1, "x")?.ok_or_else(|| bad("column x is empty".into()))?;
        let y = num(2, "y")?.ok_or_else(|| bad("column y is empty".into()))?;
        let st = BaseStation {
            id,
            position: [x, y],
            bandwidth_hz: num(3, "B_hz")?.unwrap_or(defaults.bandwidth_hz),
            compute_hz: num(4, "P_hz")?.unwrap_or(defaults.compute_hz),
            cache_bits: num(5, "C_bytes")?.map(|b| b * 8.0).unwrap_or(defaults.cache_bits),
            x2_capacity_bps: BTreeMap::new(),
            dc_capacity_bps: defaults.dc_capacity_bps,
        };
        st.validate().map_err(|e| bad(e.to_string()))?;
        if out.iter().any(|s: &BaseStation| s.id == id) {
            return Err(bad(format!("duplicate station id {id}")));
        }
        out.push(st);
    }
    Ok(out)
}

/// Stations placed uniformly in a square with capacities drawn from the configured ranges.
pub fn synthetic_stations(n: usize, area_m: f64, cfg: &TopologyConfig, seed: u64) -> Vec<BaseStation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = Span(0.0, area_m);
    (0..n)
        .map(|i| BaseStation {
            id: i as u32,
            position: [side.sample(&mut rng), side.sample(&mut rng)],
            bandwidth_hz: cfg.bandwidth_mhz.sample(&mut rng) * 1e6,
            compute_hz: cfg.compute_ghz.sample(&mut rng) * 1e9,
            cache_bits: cfg.cache_gb.sample(&mut rng) * BITS_PER_GB,
            x2_capacity_bps: BTreeMap::new(),
            dc_capacity_bps: cfg.dc_mbps.sample(&mut rng) * 1e6,
        })
        .collect()
}

/// Adds symmetric links between every pair of `members`, capacity drawn
/// once per pair. Existing links are kept.
pub fn connect_members(stations: &mut [BaseStation], members: &[u32], x2_bps: Span, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[i + 1..] {
            let cap = x2_bps.sample(&mut rng);
            let ia = stations.iter().position(|s| s.id == a);
            let ib = stations.iter().position(|s| s.id == b);
            if let (Some(ia), Some(ib)) = (ia, ib) {
                if !stations[ia].x2_capacity_bps.contains_key(&b) {
                    stations[ia].x2_capacity_bps.insert(b, cap);
                    stations[ib].x2_capacity_bps.insert(a, cap);
                }
            }
        }
    }
}
