use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qswitch::cli::{self, SweepParam};
use qswitch::engine::{format_float, RunConfig};
use qswitch::error::{Error, Result};

#[derive(Parser)]
#[command(name = "qswitch", about = "Quantum entanglement switch simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity-region membership report for a config.
    Capacity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Single simulation run; writes summary.json and CSV traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parameter sweep; writes one aggregated CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to sweep: q | T2 | mem | lambda_scale.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Seeds per value (consecutive from the config seed).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Parallel runs.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Output CSV path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Named experiment preset; writes a combined CSV.
    Preset {
        /// table-heavy | table-light | fig-memory | fig-T2 | fig-q
        name: String,
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = seed {
        config.run.seed = seed;
    }
    Ok(config)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Capacity { config } => {
            let config = load_config(&config, None)?;
            cli::cmd_capacity(&config, &mut std::io::stdout())
        }
        Command::Run { config, seed, out } => {
            let config = load_config(&config, seed)?;
            let result = cli::cmd_run(&config, &out)?;
            let a = &result.aggregates;
            println!(
                "served {} of {} requests; mean_fidelity {}; mean_latency_ns {}; mean_backlog_per_pair {}",
                a.served_count,
                a.arrivals_total,
                a.mean_fidelity.map(format_float).unwrap_or_else(|| "n/a".into()),
                a.mean_latency_ns.map(format_float).unwrap_or_else(|| "n/a".into()),
                format_float(a.mean_backlog_per_pair),
            );
            Ok(())
        }
        Command::Sweep { config, param, values, seeds, jobs, out, seed } => {
            let config = load_config(&config, seed)?;
            let param = SweepParam::parse(&param)?;
            cli::cmd_sweep(&config, param, &values, seeds, jobs, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Preset { name, seed, jobs, out } => {
            cli::cmd_preset(&name, seed, jobs, &out)?;
            println!("wrote preset {name} outputs under {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
