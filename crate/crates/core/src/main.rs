use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mec4c::config::ScenarioConfig;
use mec4c::costmodel::Problem;
use mec4c::harness::{self, Overrides};
use mec4c::oracle::brute_force_solve;
use mec4c::solver::Rule;
use mec4c::Result;

#[derive(Parser)]
#[command(name = "mec4c", version, about = "Collaborative edge offloading and caching simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full pipeline for one rule; writes <out>/<run-id>/.
    Run(Common),
    /// All three block rules on one shared scenario.
    CompareRules(Common),
    /// Exact enumeration of a small scenario.
    Oracle(Common),
    /// Collaboration spaces only.
    Cluster(Common),
    /// Parse and check a config, then print it with defaults filled in.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// cyclic, gs or random
    #[arg(long)]
    rule: Option<Rule>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        Overrides { seed: self.seed, rule: self.rule, epochs: self.epochs }.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Run(c) => {
            let cfg = c.config()?;
            let id = harness::run_id(&cfg);
            let out = harness::run_pipeline(&cfg)?;
            let dir = harness::run_dir(&c.out, &id);
            harness::write_artifacts(&dir, &id, &out)?;
            let s = &out.report.solve;
            let m = &out.report.metrics;
            println!("run {id}: {} tasks on {} stations", out.report.tasks, out.report.stations.len());
            println!(
                "  iterations {} converged {} relaxed {:.6e} rounded {:.6e} delta {:.3e} beta {}",
                s.trace.iterations,
                s.trace.converged,
                s.relaxed_objective,
                s.rounded_objective,
                s.violations.delta_total,
                s.beta.map_or("undefined".into(), |b| format!("{b:.4}"))
            );
            println!(
                "  hit ratio {:.3} saving {:.3e} bits mean delay {:.4e} s throughput {:.3e} bit/s",
                m.hit_ratio, m.bandwidth_saving_bits, m.delay_stats.mean, m.network_throughput_bps.aggregate_bps
            );
            println!("  wrote {}", dir.display());
            Ok(out.exit_code())
        }
        Cmd::CompareRules(c) => {
            let cfg = c.config()?;
            let cmp = harness::compare_rules(&cfg)?;
            let dir = harness::run_dir(&c.out, &format!("{}-compare-s{}", cfg.name, cfg.seed));
            harness::write_comparison(&dir, &cmp)?;
            println!("{:<8} {:>6} {:>16} {:>12} {:>8}", "rule", "iters", "final B", "delta", "beta");
            for r in &cmp.rows {
                let beta = r.beta.map_or("-".into(), |b| format!("{b:.4}"));
                println!("{:<8} {:>6} {:>16.8e} {:>12.3e} {:>8}", r.rule.short(), r.iterations, r.final_objective, r.delta, beta);
            }
            println!("wrote {}", dir.display());
            Ok(cmp.runs.iter().map(|r| r.exit_code()).max().unwrap_or(0))
        }
        Cmd::Oracle(c) => {
            let cfg = c.config()?;
            let prep = harness::prepare(&cfg)?;
            let outcome = brute_force_solve(&Problem::new(&prep.scenario))?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(match outcome {
                mec4c::oracle::OracleOutcome::Optimal { .. } => harness::EXIT_OK,
                mec4c::oracle::OracleOutcome::Infeasible => harness::EXIT_INFEASIBLE,
            })
        }
        Cmd::Cluster(c) => {
            let cfg = c.config()?;
            let (_, cl) = harness::cluster(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&cl)?);
            Ok(harness::EXIT_OK)
        }
        Cmd::ValidateConfig { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(harness::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            harness::error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
