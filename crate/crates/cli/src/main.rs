use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lemie_core::diagnostics::{ess_from_weights, fit_gpd_khat, GpdOptions, KHAT_UNRELIABLE};
use lemie_core::experiments::{
    run_scenario_with, scenario_data, scenario_truth, sweep, write_output, write_sweep, Method, RunOptions,
    ScenarioConfig,
};
use lemie_core::federation::THREADS_ENV;
use lemie_core::io::read_weights;
use lemie_core::Error;

const EXIT_FAILED_ROWS: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "lemie", version, about = "Multiple importance estimation for partitioned-data Bayesian inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run a scenario over its sweep grid.
    Sweep(RunArgs),
    /// ESS and tail-shape diagnostic of a weights file.
    Diagnose { weights: PathBuf },
    /// Print the truth summary of a scenario.
    Truth {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out/<scenario id>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated method names, e.g. `vanilla,mie2,lemie2_t1`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated Laplace types to build, e.g. `1,3`.
    #[arg(long, value_delimiter = ',')]
    laplace_types: Option<Vec<u8>>,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Also write each method's weighted sample.
    #[arg(long)]
    keep_weights: bool,
}

fn load(path: &Path, seed: Option<u64>) -> lemie_core::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut config = ScenarioConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn configure(args: &RunArgs) -> lemie_core::Result<ScenarioConfig> {
    let mut config = load(&args.config, args.seed)?;
    if let Some(names) = &args.methods {
        config.methods = names.iter().map(|s| s.parse::<Method>()).collect::<lemie_core::Result<_>>()?;
    }
    if let Some(types) = &args.laplace_types {
        config.laplace.types = types.clone();
    }
    if args.chunk_size.is_some() {
        config.chunk_size = args.chunk_size;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(args: &RunArgs, config: &ScenarioConfig) -> PathBuf {
    args.out_dir.clone().unwrap_or_else(|| Path::new("out").join(&config.id))
}

#[derive(Serialize)]
struct WeightDiagnostics {
    draws: usize,
    ess: f64,
    khat: f64,
    tail_count: usize,
    unreliable: bool,
}

fn execute(command: Command) -> lemie_core::Result<bool> {
    match command {
        Command::Run(args) => {
            let config = configure(&args)?;
            let options = RunOptions {
                keep_weights: args.keep_weights,
            };
            let out = run_scenario_with(&config, &options)?;
            let dir = out_dir(&args, &config);
            write_output(&dir, &out)?;
            println!("{} rows written to {}", out.rows.len(), dir.display());
            for f in &out.manifest.failures {
                eprintln!("{} failed: {}", f.method, f.error);
            }
            Ok(!out.has_failures())
        }
        Command::Sweep(args) => {
            let config = configure(&args)?;
            let configs = config.expand_sweep()?;
            let options = RunOptions {
                keep_weights: args.keep_weights,
            };
            let out = sweep(&configs, &options)?;
            let dir = out_dir(&args, &config);
            write_sweep(&dir, &out)?;
            println!("{} runs, {} rows written to {}", out.runs.len(), out.rows.len(), dir.display());
            for run in &out.runs {
                for f in &run.manifest.failures {
                    eprintln!("M = {}: {} failed: {}", run.manifest.parts, f.method, f.error);
                }
            }
            Ok(!out.has_failures())
        }
        Command::Diagnose { weights } => {
            let table = read_weights(&weights)?;
            let log_w: Vec<f64> = table.norm_weights.iter().filter(|&&w| w > 0.0).map(|w| w.ln()).collect();
            let fit = fit_gpd_khat(&log_w, &GpdOptions::default());
            let report = WeightDiagnostics {
                draws: table.norm_weights.len(),
                ess: ess_from_weights(&table.norm_weights),
                khat: fit.khat,
                tail_count: fit.tail_count,
                unreliable: fit.khat > KHAT_UNRELIABLE,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
        Command::Truth { config, seed } => {
            let config = load(&config, seed)?;
            let data = scenario_data(&config)?;
            let truth = scenario_truth(&config, &data)?;
            println!("{}", serde_json::to_string_pretty(&truth.summary())?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(n) = std::env::var(THREADS_ENV).map(|v| v.parse::<usize>()) {
        match n {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring invalid {THREADS_ENV}"),
        }
    }
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED_ROWS),
        Err(e @ (Error::Config(_) | Error::Propriety(_))) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

