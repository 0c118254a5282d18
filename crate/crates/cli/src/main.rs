use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lfconflict::experiment::{self, ExperimentConfig};
use lfconflict::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "lfconflict", version, about = "Conflict diagnostics for summary statistics in likelihood-free inference")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Observed {
    /// Observed data file; overrides the config.
    #[arg(long)]
    observed: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training set.
    GenTrain(Observed),
    /// Cross-validate forest hyperparameters for each target.
    Tune(Observed),
    /// Train and store one forest per target.
    Train(Observed),
    /// Rejection ABC baseline.
    Abc(Observed),
    /// Subset posteriors and calibrated conflict statistics per partition.
    Diagnose(Observed),
    /// Sliding-window conflict scan of an observed series.
    WindowScan(Observed),
    /// Run the invariant suites.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| Error::config("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::config(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let obs = |o: &Observed| o.observed.clone();
    match &cli.command {
        Command::Selftest => {
            let results = selftest::run_all(cli.seed.unwrap_or(0))?;
            for r in &results {
                println!("{} {:<28} checks={:<4} worst={:e}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.checks, r.worst);
            }
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::GenTrain(o) => {
            let cfg = load_config(cli)?;
            let t = experiment::cmd_gen_train(&cfg, obs(o).as_deref())?;
            println!("{} rows ({} discarded) -> {}", t.len(), t.discarded, cfg.train_path().display());
        }
        Command::Tune(o) => {
            let cfg = load_config(cli)?;
            let reps = experiment::cmd_tune(&cfg, obs(o).as_deref())?;
            print_json(&reps.iter().map(|r| r.best).collect::<Vec<_>>())?;
        }
        Command::Train(o) => {
            let cfg = load_config(cli)?;
            let forests = experiment::cmd_train(&cfg, obs(o).as_deref())?;
            for f in forests {
                println!("{}: {} trees on {} rows", f.response_name, f.trees.len(), f.n_train());
            }
        }
        Command::Abc(o) => {
            let cfg = load_config(cli)?;
            print_json(&experiment::cmd_abc(&cfg, obs(o).as_deref())?)?;
        }
        Command::Diagnose(o) => {
            let cfg = load_config(cli)?;
            for r in experiment::cmd_diagnose(&cfg, obs(o).as_deref())? {
                println!(
                    "{} | observed {} | imputed {}: R_obs={:.4} p={:.3}{}",
                    r.parameter,
                    r.observed_names.join(","),
                    r.imputed_names.join(","),
                    r.r_obs,
                    r.p_tilde,
                    if r.r_obs_floored { " (floored)" } else { "" }
                );
            }
        }
        Command::WindowScan(o) => {
            let cfg = load_config(cli)?;
            for (name, r) in cfg
                .target_indices()?
                .into_iter()
                .map(|i| cfg.prior().names()[i].clone())
                .zip(experiment::cmd_window_scan(&cfg, obs(o).as_deref())?)
            {
                println!("{name}: flagged times {:?}", r.flagged);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
