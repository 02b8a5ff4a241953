//! Command-line entry point: generate problem instances, train and evaluate
//! classifiers, sweep experiment axes, and run the verification suites.
//!
//! Exit codes: 0 success, 1 property or trial failure, 2 usage/config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use umset_core::harness::Method;

use umset::config::{ExperimentConfig, SweepConfig};
use umset::experiment::{run_experiment, SourceData};
use umset::export::{
    load_model, save_model, summary_csv, sweep_csv, write_atomic, write_metrics_jsonl,
};
use umset::manifest::read_pool_csv;
use umset::verify::run_all;

#[derive(Parser)]
#[command(
    name = "umset",
    about = "Train binary classifiers from multiple unlabeled sets with known class priors",
    version
)]
struct Cli {
    /// Suppress informational logging.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's method (umssc | mmc_u2b | mmc_u2 |
    /// mmc_u2c[:kappa] | epr).
    #[arg(long)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an unlabeled-set directory (set CSVs + manifest) from a
    /// config.
    Gen(RunArgs),
    /// Train per the config; writes metrics.jsonl, summary.csv, and one
    /// model document per seed.
    Train(RunArgs),
    /// Evaluate a trained model document on a labeled CSV (trailing 0/1
    /// label column).
    Eval {
        /// Model document written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Labeled test data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for eval.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the base experiment once per axis value (config must be a sweep
    /// document with base/axis/values).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the verification suites and report pass/fail per property.
    Verify {
        /// Output directory for verify.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corrupt a transition coefficient first (the equivalence check
        /// must then fail; used to prove the oracle bites).
        #[arg(long)]
        mutate: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Gen(args) => gen(args),
        Command::Train(args) => train(args),
        Command::Eval { model, data, out } => eval(&model, &data, out.as_deref()),
        Command::Sweep { config, out, seed } => sweep_cmd(&config, &out, seed),
        Command::Verify { out, mutate } => verify_cmd(out.as_deref(), mutate),
    }
}

fn load_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(method) = &args.method {
        config.method = parse_method(method)?;
    }
    Ok(config)
}

fn parse_method(text: &str) -> anyhow::Result<Method> {
    let method = match text {
        "umssc" => Method::Umssc,
        "mmc_u2b" => Method::MmcU2b,
        "mmc_u2" => Method::MmcU2,
        "epr" => Method::Epr,
        other => match other.strip_prefix("mmc_u2c") {
            Some("") => Method::MmcU2c { kappa: 1.0 },
            Some(rest) => {
                let kappa: f64 = rest
                    .strip_prefix(':')
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| anyhow::anyhow!("cannot parse method {other:?}"))?;
                Method::MmcU2c { kappa }
            }
            None => anyhow::bail!(
                "unknown method {other:?} (expected umssc, mmc_u2b, mmc_u2, mmc_u2c[:kappa], epr)"
            ),
        },
    };
    Ok(method)
}

/// Build one problem instance and write it as CSVs + manifest.
fn gen(args: RunArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(&args)?;
    let seed = config.seeds[0];
    let source = SourceData::load(&config)?;
    let data = umset::experiment::build_trial_data(&config, &source, seed)?;
    let manifest = umset::manifest::write_collection(
        &args.out,
        &data.collection,
        data.test.as_ref(),
        &config.data.dataset_name(),
        seed,
    )?;
    log::info!(
        "wrote {} sets ({} examples) to {}",
        manifest.set_files.len(),
        manifest.sizes.iter().sum::<usize>(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train(args: RunArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(&args)?;
    let result = run_experiment(&config)?;
    write_metrics_jsonl(&args.out.join("metrics.jsonl"), &result)?;
    write_atomic(
        &args.out.join("summary.csv"),
        summary_csv(&[&result]).as_bytes(),
    )?;
    for trial in &result.trials {
        if let Some(network) = &trial.network {
            save_model(
                &args.out.join(format!("model_seed{}.json", trial.seed)),
                network,
            )?;
        }
    }
    match (result.aggregate.mean_error, result.aggregate.std_error) {
        (Some(mean), Some(std)) => {
            println!(
                "{} {}: error {:.4} ({:.4}) over {} seed(s)",
                result.config.method,
                result.config.setting_label(),
                mean,
                std,
                result.aggregate.succeeded
            );
        }
        _ => println!("no successful trials"),
    }
    if result.aggregate.failed > 0 {
        for trial in &result.trials {
            if let Some(error) = &trial.error {
                eprintln!("seed {} failed: {error}", trial.seed);
            }
        }
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(model_path: &Path, data_path: &Path, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    if !model_path.exists() {
        anyhow::bail!(
            "model document {} does not exist (run `umset train` first)",
            model_path.display()
        );
    }
    let network = load_model(model_path)?;
    let pool = read_pool_csv(data_path)?;
    let error = umset_core::harness::evaluate(&network, &pool)?;
    println!("test_error {error:.6} on {} examples", pool.len());
    if let Some(dir) = out {
        let doc = serde_json::json!({
            "model": model_path.display().to_string(),
            "data": data_path.display().to_string(),
            "examples": pool.len(),
            "test_error": error,
        });
        write_atomic(&dir.join("eval.json"), doc.to_string().as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(config_path: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<ExitCode> {
    let mut config = SweepConfig::from_path(config_path)?;
    if let Some(seed) = seed {
        config.base.seeds = vec![seed];
    }
    let cells = umset::experiment::sweep(&config)?;
    let axis = match config.axis {
        umset::config::SweepAxis::SetNumber => "set_number",
        umset::config::SweepAxis::Tau => "tau",
        umset::config::SweepAxis::Epsilon => "epsilon",
    };
    write_atomic(&out.join("sweep.csv"), sweep_csv(axis, &cells).as_bytes())?;
    let mut failed = false;
    for (value, result) in &cells {
        match result.aggregate.mean_error {
            Some(mean) => println!(
                "{axis}={value}: error {mean:.4} ({:.4})",
                result.aggregate.std_error.unwrap_or(0.0)
            ),
            None => {
                println!("{axis}={value}: all seeds failed");
                failed = true;
            }
        }
        failed |= result.aggregate.failed > 0;
    }
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn verify_cmd(out: Option<&Path>, mutate: bool) -> anyhow::Result<ExitCode> {
    let reports = run_all(mutate);
    let mut all_pass = true;
    for report in &reports {
        println!(
            "[{}] {} measured={:.3e} tolerance={:.3e} ({})",
            if report.pass { "PASS" } else { "FAIL" },
            report.name,
            report.measured,
            report.tolerance,
            report.details
        );
        all_pass &= report.pass;
    }
    if let Some(dir) = out {
        let json = serde_json::to_string_pretty(&reports)?;
        write_atomic(&dir.join("verify.json"), json.as_bytes())?;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
