use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lrwh_cli::{run_scenario, run_timing_study, RunReport, ScenarioConfig};

#[derive(Parser)]
#[command(name = "lrwh", version, about = "Low-rank WaveHoltz Helmholtz experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a WaveHoltz or compression scenario.
    Run(Common),
    /// Time low-rank versus dense steps on the scenario's Green's function.
    Time(Common),
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `out_dir` from the config, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-block parallelism (timing always uses one).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

fn load(path: &PathBuf) -> Option<ScenarioConfig> {
    match ScenarioConfig::load(path) {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("error: {e}");
            None
        }
    }
}

fn prepare(c: &Common) -> Option<(ScenarioConfig, PathBuf)> {
    let mut cfg = load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }
    let out = c.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    Some((cfg, out))
}

fn finish(report: &RunReport, out: &PathBuf) -> Result<()> {
    report.write(out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => {
            return match load(&config) {
                Some(cfg) => {
                    println!("{}: ok ({})", config.display(), cfg.name);
                    ExitCode::SUCCESS
                }
                None => ExitCode::from(EXIT_CONFIG),
            };
        }
        Command::Run(c) => {
            let Some((cfg, out)) = prepare(&c) else { return ExitCode::from(EXIT_CONFIG) };
            run_scenario(&cfg).and_then(|r| {
                finish(&r, &out)?;
                match r.final_rho {
                    Some(rho) => println!("{}: converged={} iterations={} rho={rho:.3e}", cfg.name, r.converged, r.iterations),
                    None => println!("{}: {} compression rows", cfg.name, r.compression.len()),
                }
                Ok(r.converged)
            })
        }
        Command::Time(c) => {
            let Some((cfg, out)) = prepare(&c) else { return ExitCode::from(EXIT_CONFIG) };
            run_timing_study(&cfg).and_then(|rows| {
                let report = RunReport { name: cfg.name.clone(), seed: cfg.seed, converged: true, timings: rows, ..Default::default() };
                finish(&report, &out)?;
                Ok(true)
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
