//! `cass-forge`: one subcommand per pipeline stage plus standalone tools.

mod standalone;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use forge_core::pipeline::{plan_stage, run_stage, PipelineConfig, Stage, StageReport};
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(name = "cass-forge", version, about = "Build, curate and evaluate a cross-vendor GPU assembly corpus")]
struct Cli {
    /// Plan without executing: stages report readiness and cache state,
    /// synthgen enumerates prompts without calling the endpoint.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct StageArgs {
    /// Pipeline config file; selects pipeline mode.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set eval.repetitions=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan repository trees and filter CUDA sources.
    Ingest {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        direct: standalone::IngestArgs,
    },
    /// Generate synthetic kernels from prompt templates.
    Synthgen {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        direct: standalone::SynthArgs,
    },
    /// Translate CUDA sources to HIP.
    Translate(StageArgs),
    /// Compile both vendors' builds.
    Compile(StageArgs),
    /// Split and normalise assembly listings.
    Extract(StageArgs),
    /// Align per-sample artifacts into corpus records.
    Align(StageArgs),
    /// Corpus statistics as CSV tables.
    Analyze {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        direct: standalone::AnalyzeArgs,
    },
    /// Select differentially runnable bench tasks.
    Bench(StageArgs),
    /// Judge candidate translations.
    Eval {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        direct: standalone::EvalArgs,
    },
    /// Run the build stages in order, reusing completed ones.
    All {
        #[command(flatten)]
        stage: StageArgs,
        /// Include the eval stage.
        #[arg(long)]
        with_eval: bool,
    },
    /// Drive one toolchain stage over a unit manifest.
    Buildfarm(standalone::BuildfarmArgs),
}

fn load(args: &StageArgs, extra: &[String]) -> Result<PipelineConfig> {
    let path = args.config.as_ref().context("--config is required here")?;
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    PipelineConfig::load(path, &overrides).with_context(|| format!("loading {}", path.display()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Runs (or plans) pipeline stages; true when no report is fatal.
fn pipeline(stages: &[Stage], args: &StageArgs, dry_run: bool) -> Result<bool> {
    let synth_dry = if dry_run && stages.contains(&Stage::Synthgen) { vec!["synth.dry_run=true".to_string()] } else { Vec::new() };
    let cfg = load(args, &synth_dry)?;
    if dry_run && stages != [Stage::Synthgen] {
        let plans = stages.iter().map(|s| plan_stage(*s, &cfg)).collect::<Result<Vec<_>, _>>()?;
        print_json(&plans)?;
        return Ok(true);
    }
    let mut reports: Vec<StageReport> = Vec::new();
    for &s in stages {
        let r = run_stage(s, &cfg)?;
        let ok = r.ok();
        reports.push(r);
        if !ok {
            break;
        }
    }
    for r in reports.iter().filter(|r| !r.ok()) {
        for e in &r.fatal_errors {
            tracing::error!(stage = ?r.stage, error = %e, "fatal");
        }
    }
    let ok = reports.iter().all(StageReport::ok);
    if reports.len() == 1 {
        print_json(&reports[0])?;
    } else {
        print_json(&reports)?;
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> Result<bool> {
    let dry = cli.dry_run;
    match cli.command {
        Command::Ingest { stage, direct } => match stage.config {
            Some(_) => pipeline(&[Stage::Ingest], &stage, dry),
            None => standalone::ingest(&direct, dry),
        },
        Command::Synthgen { stage, direct } => match stage.config {
            Some(_) => pipeline(&[Stage::Synthgen], &stage, dry),
            None => standalone::synthgen(&direct, dry),
        },
        Command::Translate(a) => pipeline(&[Stage::Translate], &a, dry),
        Command::Compile(a) => pipeline(&[Stage::Compile], &a, dry),
        Command::Extract(a) => pipeline(&[Stage::Extract], &a, dry),
        Command::Align(a) => pipeline(&[Stage::Align], &a, dry),
        Command::Analyze { stage, direct } => match stage.config {
            Some(_) => pipeline(&[Stage::Analyze], &stage, dry),
            None => standalone::analyze(&direct, dry),
        },
        Command::Bench(a) => pipeline(&[Stage::Bench], &a, dry),
        Command::Eval { stage, direct } => match stage.config {
            Some(_) => pipeline(&[Stage::Eval], &stage, dry),
            None => standalone::eval(&direct, dry),
        },
        Command::All { stage, with_eval } => {
            if stage.config.is_none() {
                bail!("--config is required");
            }
            let mut stages = vec![Stage::Ingest, Stage::Translate, Stage::Compile, Stage::Extract, Stage::Align, Stage::Analyze, Stage::Bench];
            if with_eval {
                stages.push(Stage::Eval);
            }
            pipeline(&stages, &stage, dry)
        }
        Command::Buildfarm(a) => standalone::buildfarm(&a, dry),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            tracing::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
