use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ipo_cli::config::{ColoredKeysSettings, ExperimentConfig, Method, Overrides};
use ipo_cli::run::{retabulate, run_experiment};
use ipo_cli::{plot, selftest};
use ipo_core::gridworld::Color;
use ipo_core::nn::Checkpoint;
use ipo_core::rl::{evaluate, TrainedPolicy};

#[derive(Parser)]
#[command(name = "ipo", version, about = "Run and tabulate LQR and colored-keys experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory. Defaults to the config's `output`, then `results`.
    #[arg(long, env = "IPO_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, cell, seed) job of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Use seeds 0..N instead of the config's list.
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated methods, e.g. `gd,ipo-fixed`.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rebuild summary.json and the table from results.jsonl.
    Table {
        #[command(flatten)]
        out: OutArg,
    },
    /// Write plot-ready CSV series under <out>/plots.
    Plotdata {
        #[command(flatten)]
        out: OutArg,
    },
    /// Evaluate a saved gridworld checkpoint on held-out layouts.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "grey")]
        color: Color,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Number of held-out layouts.
        #[arg(long, default_value_t = 50)]
        layouts: usize,
        #[arg(long, default_value_t = 0)]
        layout_seed: u64,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
    },
    /// Run the built-in numerical oracle checks.
    Selftest,
}

fn out_dir(arg: OutArg, cfg: Option<&ExperimentConfig>) -> PathBuf {
    arg.out
        .or_else(|| cfg.and_then(|c| c.output.as_ref()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            seeds,
            methods,
            jobs,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&Overrides { seeds, methods })?;
            let out = out_dir(out, Some(&cfg));
            let report = run_experiment(&cfg, &out, jobs, true)?;
            print!("{}", report.table.to_text());
            println!("results in {}", report.out.display());
            let failed = report.summary.failures.len();
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Table { out } => {
            let (_, table) = retabulate(&out_dir(out, None))?;
            print!("{}", table.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plotdata { out } => {
            for p in plot::emit_plot_data(&out_dir(out, None))? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            checkpoint,
            color,
            episodes,
            layouts,
            layout_seed,
            eval_seed,
        } => {
            let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let mut nets = ckpt.into_nets()?;
            let policy = match nets.len() {
                0 => bail!("checkpoint holds no nets"),
                1 => TrainedPolicy::Single(nets.pop().expect("one net")),
                _ => TrainedPolicy::Ensemble(nets),
            };
            let settings = ColoredKeysSettings {
                layout_seed,
                eval_layouts: layouts,
                ..ColoredKeysSettings::default()
            };
            let res = evaluate(&policy, color, &settings.eval_layouts(), episodes, eval_seed)?;
            println!("{}", serde_json::to_string(&res)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let mut ok = true;
            for (key, check) in selftest::run_all() {
                match check {
                    Ok(c) => {
                        let verdict = if c.passed() { "PASS" } else { "FAIL" };
                        ok &= c.passed();
                        println!("{verdict} {key}: {} (error {:.3e}, tolerance {:.0e})", c.name, c.error, c.tolerance);
                    }
                    Err(e) => {
                        ok = false;
                        println!("FAIL {key}: {e:#}");
                    }
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
