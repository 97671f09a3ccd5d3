use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use lexevo_core::metrics::{analyze_run, MetricsError};
use lexevo_core::runner::{replay, run_experiment, ExperimentConfig, ReplayError, RunError, RunOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORTED: u8 = 3;
const EXIT_BAD_INPUT: u8 = 4;
const EXIT_DIVERGED: u8 = 5;

#[derive(Parser)]
#[command(name = "lexevo", version, about = "Simulate language-strategy evolution under platform moderation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-trial event logs.
    Run(RunArgs),
    /// Compute metrics tables from a run directory.
    Analyze(AnalyzeArgs),
    /// Re-execute a recorded run and compare event streams.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// password or pet_trade.
    #[arg(long)]
    scenario: Option<String>,
    /// scripted:PATH or http:URL.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Dialogue turns per round.
    #[arg(long)]
    turns: Option<u32>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Model name for an HTTP provider.
    #[arg(long)]
    model: Option<String>,
    /// Scenario asset directory (spec.json, seeds.json, synonyms.json, keywords.json).
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Prompt template directory.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Regulation JSON file, re-read at every round start.
    #[arg(long)]
    regulation: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory containing trial-*.jsonl.
    #[arg(long)]
    run: PathBuf,
    /// Also report distinct-N for this N.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    distinct_n: Option<u32>,
    /// Label for the summary row (default: scenario/model from the manifest).
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run directory, or one trial log inside it.
    path: PathBuf,
}

fn build_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load_toml(path).map_err(anyhow::Error::msg)?;
            // paths inside the file are relative to the file, flags to the cwd
            if let Some(dir) = path.parent() {
                cfg.absolutize(dir);
            }
            cfg
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.scenario {
        cfg.scenario = v.clone();
    }
    if let Some(v) = &args.provider {
        cfg.provider = v.clone();
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.turns {
        cfg.turns_per_round = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = &args.model {
        cfg.model = Some(v.clone());
    }
    for (slot, v) in [
        (&mut cfg.assets, &args.assets),
        (&mut cfg.prompts, &args.prompts),
        (&mut cfg.regulation, &args.regulation),
    ] {
        if v.is_some() {
            slot.clone_from(v);
        }
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<u8> {
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_CONFIG);
        }
    };
    let opts = RunOptions {
        out: args.out.clone(),
        force: args.force,
        jobs: args.jobs,
    };
    match run_experiment(&cfg, &opts) {
        Ok(report) => {
            eprintln!(
                "wrote {} trial log(s) to {}",
                report.manifest.trials.len(),
                report.out.display()
            );
            let analysis = analyze_run(&report.out, None, None)
                .with_context(|| format!("analyzing {}", report.out.display()))?;
            analysis.write(&report.out)?;
            print!("{}", analysis.summary_csv());
            Ok(0)
        }
        Err(RunError::Config(m)) => {
            eprintln!("error: {m}");
            Ok(EXIT_CONFIG)
        }
        Err(e @ RunError::Aborted(_)) => {
            eprintln!("error: {e}");
            eprintln!("partial logs and manifest are in {}", args.out.display());
            Ok(EXIT_ABORTED)
        }
        Err(RunError::Io(m)) => Err(anyhow::Error::msg(m)),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<u8> {
    let extra = args.distinct_n.map(|n| n as usize);
    match analyze_run(&args.run, extra, args.label) {
        Ok(analysis) => {
            let files = analysis.write(&args.run)?;
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            print!("{}", analysis.summary_csv());
            Ok(0)
        }
        Err(e @ (MetricsError::Read { .. } | MetricsError::Empty(_))) => {
            eprintln!("error: {e}");
            Ok(EXIT_BAD_INPUT)
        }
        Err(MetricsError::Io(m)) => {
            eprintln!("error: {m}");
            Ok(EXIT_BAD_INPUT)
        }
    }
}

fn cmd_replay(path: &Path) -> anyhow::Result<u8> {
    match replay(path) {
        Ok(report) => {
            println!(
                "replayed {} trial(s), {} events, {} divergence(s)",
                report.trials, report.events, report.divergences
            );
            match report.first {
                None => Ok(0),
                Some(d) => {
                    println!("first divergence: trial {} line {}", d.trial, d.line);
                    println!("  recorded: {}", d.recorded.as_deref().unwrap_or("<end of log>"));
                    println!("  replayed: {}", d.replayed.as_deref().unwrap_or("<end of log>"));
                    Ok(EXIT_DIVERGED)
                }
            }
        }
        Err(e @ (ReplayError::HashMismatch { .. } | ReplayError::Setup(_) | ReplayError::Manifest(_))) => {
            eprintln!("error: {e}");
            Ok(EXIT_CONFIG)
        }
        Err(e @ ReplayError::Log { .. }) => {
            eprintln!("error: {e}");
            Ok(EXIT_BAD_INPUT)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Replay(args) => cmd_replay(&args.path),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
