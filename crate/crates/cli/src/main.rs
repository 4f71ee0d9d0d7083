use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use spi_core::benchmarks::BenchmarkKind;
use spi_core::harness::{self, AggregateStats, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "spi-lab", version, about = "Safe policy improvement experiments on tabular benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a performance experiment and write CSV tables and SVG plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the safety-bound audit on Wet Chicken.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the smallest κ of the error-propagation assumption on sampled datasets.
    CheckAssumption {
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        /// Episodes (Random MDPs) or steps (Wet Chicken) per dataset.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
}

fn print_table(stats: &[AggregateStats]) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!("{:<28} {:<32} {:>9} {:>6} {:>10} {:>10} {:>9}", "algorithm", "params", "size", "n", "mean", "cvar1%", "viol");
    for s in stats {
        println!(
            "{:<28} {:<32} {:>9} {:>6} {:>10} {:>10} {:>9}",
            s.algorithm,
            s.params,
            s.data_size,
            s.n,
            fmt(s.mean),
            fmt(s.cvar_1pct),
            fmt(s.bound_violation_rate)
        );
    }
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = load(&config, out)?;
            if cfg.mode != Mode::Performance {
                bail!("config is in bound_audit mode; use `spi-lab audit`");
            }
            log::info!(
                "{} trials x {} algorithms x {} sizes on {}",
                cfg.n_trials,
                cfg.algorithms.len(),
                cfg.data_sizes.len(),
                cfg.benchmark.name()
            );
            let records = harness::run(&cfg)?;
            let stats = harness::emit(&records, &cfg.output_dir)?;
            print_table(&stats);
            log::info!("wrote {}", cfg.output_dir.display());
        }
        Command::Audit { config, out } => {
            let cfg = load(&config, out)?;
            let output = harness::bound_audit(&cfg)?;
            let stats = harness::emit(&output.records, &cfg.output_dir)?;
            harness::emit_n_wedge(&output.n_wedge, &cfg.output_dir)?;
            print_table(&stats);
            print!("{}", output.n_wedge.to_text());
            log::info!("wrote {}", cfg.output_dir.display());
        }
        Command::CheckAssumption { benchmark, gamma, instances, size, seed, delta } => {
            let kind = BenchmarkKind::from_name(&benchmark)
                .with_context(|| format!("unknown benchmark `{benchmark}` (random_mdps | wet_chicken)"))?;
            let size = size.unwrap_or(match kind {
                BenchmarkKind::RandomMdps => 100,
                BenchmarkKind::WetChicken => 10_000,
            });
            let rows = harness::check_assumption(kind, gamma, instances, size, seed, delta)?;
            println!("instance,kappa,evaluated,excluded,kappa_below_inverse_gamma");
            for r in &rows {
                println!("{},{},{},{},{}", r.instance, r.kappa, r.evaluated, r.excluded, r.satisfied);
            }
            let held = rows.iter().filter(|r| r.satisfied).count();
            println!("# kappa < 1/gamma = {} on {held} of {} instances", 1.0 / gamma, rows.len());
        }
    }
    Ok(())
}
