//! End-to-end orchestration: topology, workload, solve, round, simulate,
//! measure, and write the run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::cachesim::{simulate_caching, SimResult};
use crate::config::{ScenarioConfig, SpaceChoice, TopologySource};
use crate::costmodel::{final_allocation, AllocationView, DecisionVector, Problem};
use crate::error::{Error, Result};
use crate::metrics::{realized_delays, run_metrics, RunMetrics, TaskDelay};
use crate::rounding::{integrality_gap, penalized_resolve, problem_violations, threshold_round, ResolveTrace, ViolationReport};
use crate::scenario::{epoch_demands, sub_seed, Scenario, SEED_STREAM};
use crate::solver::{run_bsum, Rule, SolveTrace, SolverParams};
use crate::topology::{connect_members, import_stations, run_okm_cs, synthetic_stations, CollaborationSpace, StationDefaults};

const SEED_TOPOLOGY: u64 = 5;
const SEED_CLUSTER: u64 = 6;
const SEED_LINKS: u64 = 7;
const SEED_SOLVER: u64 = 8;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_OTHER: i32 = 1;

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rule: Option<Rule>,
    pub epochs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.rule {
            cfg.solver.rule = r;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    pub spaces: Vec<CollaborationSpace>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub chosen: usize,
}

/// Stations, OKM-CS spaces, and the scenario of the chosen space.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub clustering: Clustering,
    pub scenario: Scenario,
}

pub fn load_stations(cfg: &ScenarioConfig) -> Result<Vec<crate::topology::BaseStation>> {
    let t = &cfg.topology;
    match &t.source {
        TopologySource::Synthetic { stations, area_m } => {
            Ok(synthetic_stations(*stations, *area_m, t, sub_seed(cfg.seed, SEED_TOPOLOGY)))
        }
        TopologySource::File(p) => import_stations(p, &StationDefaults::from_config(t)),
    }
}

pub fn cluster(cfg: &ScenarioConfig) -> Result<(Vec<crate::topology::BaseStation>, Clustering)> {
    let stations = load_stations(cfg).map_err(|e| e.at("topology"))?;
    let t = &cfg.topology;
    let okm = run_okm_cs(&stations, t.r, t.okm_t_max, t.okm_epsilon, sub_seed(cfg.seed, SEED_CLUSTER))
        .map_err(|e| e.at("clustering"))?;
    let chosen = match &t.space {
        SpaceChoice::Index(i) if *i < okm.spaces.len() => *i,
        SpaceChoice::Index(i) => {
            return Err(Error::Config(format!("topology.space {i} out of range ({} spaces)", okm.spaces.len())))
        }
        // largest, ties to the lowest index
        SpaceChoice::Named(_) => {
            let best = okm.spaces.iter().map(|s| s.members.len()).max().unwrap_or(0);
            okm.spaces.iter().position(|s| s.members.len() == best).unwrap_or(0)
        }
    };
    Ok((stations, Clustering { spaces: okm.spaces, objective_trace: okm.trace, iterations: okm.iterations, chosen }))
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (stations, clustering) = cluster(cfg)?;
    let members = &clustering.spaces[clustering.chosen].members;
    let mut sub: Vec<_> = stations.into_iter().filter(|s| members.contains(&s.id)).collect();
    connect_members(&mut sub, members, cfg.topology.x2_mbps.scaled(1e6), sub_seed(cfg.seed, SEED_LINKS));
    let scenario = Scenario::generate(cfg, sub).map_err(|e| e.at("scenario"))?;
    Ok(Prepared { clustering, scenario })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub rule: Rule,
    pub trace: SolveTrace,
    pub relaxed_objective: f64,
    /// Objective of the repaired binary decision, without penalty.
    pub rounded_objective: f64,
    pub violations: ViolationReport,
    pub beta: Option<f64>,
    pub resolve: ResolveTrace,
    pub allocations: AllocationView,
    pub decisions: DecisionVector,
    /// Tasks for which no option meets the deadline (served best effort).
    pub deadline_infeasible: Vec<usize>,
}

/// Relaxed solve, threshold rounding, penalized repair and the granted allocation.
pub fn solve(sc: &Scenario, p: &Problem, cfg: &ScenarioConfig) -> Result<SolveReport> {
    let params = SolverParams::from_config(&cfg.solver, sub_seed(cfg.seed, SEED_SOLVER));
    let (relaxed, trace) = run_bsum(p, &params).map_err(|e| e.at("solver"))?;
    let relaxed_objective = p.objective(&relaxed);
    let xi = cfg.rounding.xi;
    let rounded = threshold_round(p, &relaxed, cfg.rounding.theta).map_err(|e| e.at("rounding"))?;
    let (decisions, resolve) = penalized_resolve(p, &rounded, xi).map_err(|e| e.at("rounding"))?;
    decisions.validate().map_err(|e| e.at("rounding"))?;
    let violations = problem_violations(p, &decisions, xi);
    let rounded_objective = p.objective(&decisions);
    let gap = integrality_gap(relaxed_objective, rounded_objective + violations.penalty());
    Ok(SolveReport {
        rule: params.rule,
        trace,
        relaxed_objective,
        rounded_objective,
        violations,
        beta: gap.beta,
        resolve,
        allocations: final_allocation(sc, &decisions, &p.plan),
        decisions,
        deadline_infeasible: (0..p.tasks).filter(|&k| !p.deadline_feasible[k]).collect(),
    })
}

/// Cache contents chosen by the decisions, as `(station, content)`.
pub fn placements(sc: &Scenario, dv: &DecisionVector) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..sc.n_tasks())
        .filter_map(|k| dv.chosen_cache(k).filter(|&n| n < sc.n_stations()).map(|n| (n, sc.tasks[k].content_id)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn simulate(sc: &Scenario, p: &Problem, dv: &DecisionVector, cfg: &ScenarioConfig) -> SimResult {
    let ids: Vec<u32> = sc.stations.iter().map(|s| s.id).collect();
    let demands: Vec<_> = (0..cfg.epochs as u64).map(|e| epoch_demands(cfg, &ids, &sc.popularity, e)).collect();
    simulate_caching(sc, &placements(sc, dv), &demands, &p.loads(dv), sub_seed(cfg.seed, SEED_STREAM))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub stations: Vec<u32>,
    pub tasks: usize,
    pub eta: f64,
    pub clustering: Clustering,
    pub solve: SolveReport,
    pub metrics: RunMetrics,
}

pub struct RunOutput {
    pub report: RunReport,
    pub sim: SimResult,
    pub delays: Vec<TaskDelay>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if !self.report.solve.violations.is_feasible() {
            EXIT_INFEASIBLE
        } else if !self.report.solve.trace.converged {
            EXIT_NOT_CONVERGED
        } else {
            EXIT_OK
        }
    }
}

/// Everything after topology and workload, on an already prepared scenario.
pub fn run_prepared(cfg: &ScenarioConfig, prep: &Prepared) -> Result<RunOutput> {
    let sc = &prep.scenario;
    let p = Problem::new(sc);
    let solve = solve(sc, &p, cfg)?;
    let sim = simulate(sc, &p, &solve.decisions, cfg);
    let delays = realized_delays(sc, &p, &solve.decisions, &solve.allocations).map_err(|e| e.at("metrics"))?;
    let metrics = run_metrics(sc, &solve.decisions, &delays, &sim, cfg.model.cpu_width_bits, cfg.model.word_bits, None)
        .map_err(|e| e.at("metrics"))?;
    let report = RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        stations: sc.stations.iter().map(|s| s.id).collect(),
        tasks: sc.n_tasks(),
        eta: sc.eta,
        clustering: prep.clustering.clone(),
        solve,
        metrics,
    };
    Ok(RunOutput { report, sim, delays })
}

pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep)
}

pub fn run_id(cfg: &ScenarioConfig) -> String {
    format!("{}-{}-s{}", cfg.name, cfg.solver.rule.short(), cfg.seed)
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    block: &'static str,
    objective: f64,
    proximal: f64,
}

#[derive(Serialize)]
struct MetricsRow {
    epoch: String,
    hits_local: u64,
    hits_neighbor: u64,
    misses: u64,
    hit_ratio: f64,
    saving_bits: f64,
    throughput_bps: f64,
}

#[derive(Serialize)]
struct HitRow {
    epoch: u64,
    bs: u32,
    content: usize,
    outcome: String,
}

#[derive(Serialize)]
struct DelayRow {
    task: usize,
    route: String,
    delay_s: f64,
    deadline_s: f64,
    deadline_feasible: bool,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, t: &SolveTrace) -> Result<()> {
    let rows = (0..t.objective_per_iter.len()).map(|i| TraceRow {
        iteration: i,
        block: if i == 0 { "init" } else { t.blocks[i - 1].name() },
        objective: t.objective_per_iter[i],
        proximal: t.proximal_per_iter[i],
    });
    write_csv(path, rows)
}

/// Writes `report.json`, `trace.csv`, `metrics.csv`, `hits.csv`,
/// `delays.csv` and `meta.json` (the only file with wall-clock data).
pub fn write_artifacts(dir: &Path, run_id: &str, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)?)?;
    write_trace_csv(&dir.join("trace.csv"), &out.report.solve.trace)?;
    let m = &out.report.metrics;
    let mut rows: Vec<MetricsRow> = out
        .sim
        .epochs
        .iter()
        .zip(&m.network_throughput_bps.per_epoch_bps)
        .map(|(e, &bps)| MetricsRow {
            epoch: e.epoch.to_string(),
            hits_local: e.counters.hits_local,
            hits_neighbor: e.counters.hits_neighbor,
            misses: e.counters.misses,
            hit_ratio: e.hit_ratio,
            saving_bits: e.saving_bits,
            throughput_bps: bps,
        })
        .collect();
    let tot = out.sim.totals();
    rows.push(MetricsRow {
        epoch: "all".into(),
        hits_local: tot.hits_local,
        hits_neighbor: tot.hits_neighbor,
        misses: tot.misses,
        hit_ratio: m.hit_ratio,
        saving_bits: m.bandwidth_saving_bits,
        throughput_bps: m.network_throughput_bps.aggregate_bps,
    });
    write_csv(&dir.join("metrics.csv"), rows)?;
    write_csv(
        &dir.join("hits.csv"),
        out.sim.trace.iter().map(|r| HitRow { epoch: r.epoch, bs: r.bs, content: r.content, outcome: r.outcome.label() }),
    )?;
    let dc = out.report.stations.len();
    write_csv(
        &dir.join("delays.csv"),
        out.delays.iter().map(|d| DelayRow {
            task: d.task,
            route: match d.route {
                None => "local".into(),
                Some(r) if r == dc => "dc".into(),
                Some(r) => format!("bs:{}", out.report.stations[r]),
            },
            delay_s: d.delay_s,
            deadline_s: d.deadline_s,
            deadline_feasible: d.deadline_feasible,
        }),
    )?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = serde_json::json!({
        "run_id": run_id,
        "finished_unix_s": secs,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleRow {
    pub rule: Rule,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub delta: f64,
    pub beta: Option<f64>,
    pub throughput_bps: f64,
}

pub struct Comparison {
    pub rows: Vec<RuleRow>,
    pub runs: Vec<RunOutput>,
}

/// Runs the three block rules on one shared scenario, one thread each.
pub fn compare_rules(cfg: &ScenarioConfig) -> Result<Comparison> {
    let prep = prepare(cfg)?;
    let rules = [Rule::Cyclic, Rule::GaussSouthwell, Rule::Randomized];
    let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = rules
            .iter()
            .map(|&rule| {
                let mut c = cfg.clone();
                c.solver.rule = rule;
                let prep = &prep;
                s.spawn(move || run_prepared(&c, prep))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rule worker panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = runs
        .iter()
        .map(|o| {
            let s = &o.report.solve;
            RuleRow {
                rule: s.rule,
                iterations: s.trace.iterations,
                converged: s.trace.converged,
                final_objective: s.rounded_objective,
                delta: s.violations.delta_total,
                beta: s.beta,
                throughput_bps: o.report.metrics.network_throughput_bps.aggregate_bps,
            }
        })
        .collect();
    Ok(Comparison { rows, runs })
}

#[derive(Serialize)]
struct RuleCsvRow {
    rule: &'static str,
    iters: usize,
    converged: bool,
    final_b: f64,
    delta: f64,
    beta: String,
    throughput_bps: f64,
}

pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("compare.csv"),
        cmp.rows.iter().map(|r| RuleCsvRow {
            rule: r.rule.short(),
            iters: r.iterations,
            converged: r.converged,
            final_b: r.final_objective,
            delta: r.delta,
            beta: r.beta.map_or("undefined".into(), |b| b.to_string()),
            throughput_bps: r.throughput_bps,
        }),
    )?;
    for run in &cmp.runs {
        let name = format!("trace_{}.csv", run.report.solve.rule.short());
        write_trace_csv(&dir.join(name), &run.report.solve.trace)?;
    }
    fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&cmp.rows)?)?;
    Ok(())
}

/// Exit status for an error: configuration problems, infeasibility, or other.
pub fn error_exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
        Error::Infeasible { .. } | Error::InfeasibleRate(_) => EXIT_INFEASIBLE,
        _ => EXIT_OTHER,
    }
}

pub fn run_dir(out: &Path, id: &str) -> PathBuf {
    out.join(id)
}
