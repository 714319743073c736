//! Command-line front end for runs, sweeps, verification suites and the oracle.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use avgrl::harness::{self, ExperimentConfig, HarnessError, Suite};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avgrl", version, about = "Clipped optimistic value iteration for average-reward linear MDPs")]
struct Cli {
    /// Print the default configuration with every field spelled out.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Play the configured agent for every seed and write CSV traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean regret per horizon and the log-log slope.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T", value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one verification suite.
    Verify {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Exact gain and bias of an environment document.
    Oracle {
        #[arg(long)]
        env: PathBuf,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::parse(s).ok_or_else(|| {
        let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
        format!("unknown suite {s:?}; expected one of {}", names.join(", "))
    })
}

enum Outcome {
    Pass,
    Violation,
}

fn execute(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            for s in harness::run(&cfg, &out)? {
                println!("seed {} R_T {} J* {} ({:.3}s)", s.seed, s.regret, s.j_star, s.wall_clock_secs);
            }
            println!("wrote {}", out.display());
            Ok(Outcome::Pass)
        }
        Command::Sweep { config, horizons, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = harness::sweep(&cfg, &horizons, seeds)?;
            let out = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            let path = harness::write_sweep(&summary, &out)?;
            for p in &summary.points {
                println!("T {} mean R_T {:.4} stddev {:.4} ({} runs)", p.horizon, p.mean, p.stddev, p.runs);
            }
            match summary.slope {
                harness::Slope::Fitted { slope } => println!("log-log slope {slope:.4}"),
                harness::Slope::Degenerate => println!("log-log slope degenerate (non-positive mean regret)"),
                harness::Slope::Omitted => println!("log-log slope omitted (single horizon)"),
            }
            println!("wrote {}", path.display());
            if summary.failed_cells() > 0 {
                eprintln!("{} cells failed", summary.failed_cells());
                return Ok(Outcome::Violation);
            }
            Ok(Outcome::Pass)
        }
        Command::Verify { suite, config } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let outcome = harness::run_suite(suite, &cfg)?;
            for r in &outcome.reports {
                println!(
                    "{}: checked {} violations {} pass fraction {:.6} worst slack {}",
                    r.suite,
                    r.checked,
                    r.violations,
                    r.pass_fraction,
                    r.worst_slack.map_or("-".to_string(), |s| format!("{s:.3e}"))
                );
                if let Some(c) = &r.counterexample {
                    println!("  first counterexample: {c}");
                }
            }
            println!("{} {}", suite.name(), if outcome.passed { "PASS" } else { "FAIL" });
            Ok(if outcome.passed { Outcome::Pass } else { Outcome::Violation })
        }
        Command::Oracle { env } => {
            let report = harness::oracle_report(&env).with_context(|| format!("solving {}", env.display()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(Outcome::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_config {
        println!("{}", ExperimentConfig::default().to_json_pretty());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("nothing to do; see --help");
        return ExitCode::from(2);
    };
    match execute(command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| c.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_config));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
