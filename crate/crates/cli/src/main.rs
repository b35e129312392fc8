use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bayesfn::verify::{run_criterion, CriterionReport, Suite, VerifyOptions};
use clap::{Parser, Subcommand};
use serde::Serialize;

mod config;
mod experiments;
mod output;
mod schema;

use config::{ExperimentConfig, OUTPUT_DIR_ENV};

/// Bayesian inverse problems on function space: experiments and checks.
#[derive(Parser)]
#[command(name = "bayesfn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config (or a previous run's manifest.json).
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config and the environment.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run an acceptance suite: regularity, wellposedness, approximation, samplers, spde or all.
    Verify {
        suite: String,
        /// Chain length used by the sampler checks instead of the nominal one.
        #[arg(long)]
        iters: Option<usize>,
        /// Print the reports as JSON instead of one line each.
        #[arg(long)]
        json: bool,
    },
    /// Print an annotated example of every experiment config.
    Schema,
}

/// Exit statuses.
mod status {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DEGENERATE: u8 = 3;
    pub const ORACLE: u8 = 4;
    pub const VERIFY_FAILED: u8 = 5;
}

fn classify(err: &anyhow::Error) -> u8 {
    use bayesfn::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::Config(_) | E::BasisMismatch { .. } | E::CostGuard { .. } | E::Domain(_)) => status::CONFIG,
        Some(E::OracleUnreliable { .. }) => status::ORACLE,
        Some(e) if e.is_numerical_degeneracy() => status::DEGENERATE,
        _ => status::OTHER,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    streams: serde_json::Value,
    config: &'a ExperimentConfig,
    outputs: Vec<output::ManifestEntry>,
}

fn run(path: PathBuf, output_dir: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let mut cfg = ExperimentConfig::load(&path)?;
    if output_dir.is_some() {
        cfg.output_dir = output_dir;
    }
    cfg.resolve_output_dir(std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from));
    let dir = cfg.output_dir.clone().expect("resolved above");
    let mut art = experiments::run(&cfg).with_context(|| format!("experiment {}", cfg.experiment.name()))?;
    let manifest = Manifest {
        tool: "bayesfn",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        seed: cfg.seed,
        streams: serde_json::json!({
            "main": experiments::STREAM_MAIN,
            "data": experiments::STREAM_DATA,
            "trajectory": experiments::STREAM_TRAJECTORY,
        }),
        config: &cfg,
        outputs: art.entries(),
    };
    art.json("manifest.json", "resolved config, seeds and the list of outputs", &manifest)?;
    art.write_all(&dir)?;
    Ok(dir)
}

fn verify(suite: &str, iters: Option<usize>, json: bool) -> anyhow::Result<bool> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let opts = VerifyOptions { iters };
    let mut reports: Vec<CriterionReport> = Vec::new();
    for s in suites {
        for &id in s.criteria() {
            let r = run_criterion(id, &opts)?;
            if !json {
                println!("{r}");
            }
            reports.push(r);
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if !json {
        println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_dir } => run(config, output_dir).map(|dir| {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }),
        Command::Verify { suite, iters, json } => verify(&suite, iters, json).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(status::VERIFY_FAILED)
            }
        }),
        Command::Schema => {
            print!("{}", schema::render());
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(classify(&e))
    })
}
