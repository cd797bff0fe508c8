use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wormlab::harness::{self, ExperimentConfig, ExperimentKind, HarnessError};

/// Monte Carlo laboratory for random length worms.
#[derive(Parser)]
#[command(name = "worms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Density(RunArgs),
    Subcritical(RunArgs),
    VcSweep(RunArgs),
    Capacity(RunArgs),
    Green(RunArgs),
    LlnRange(RunArgs),
    Led(RunArgs),
    HittingSums(RunArgs),
    Subboxes(RunArgs),
    Campbell(RunArgs),
    Scales(RunArgs),
    TargetShooting(RunArgs),
    Explore(RunArgs),
    /// Print a named preset config as TOML.
    Preset { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn split(cmd: Command) -> Result<(ExperimentKind, RunArgs), String> {
    use Command::*;
    Ok(match cmd {
        Density(a) => (ExperimentKind::Density, a),
        Subcritical(a) => (ExperimentKind::Subcritical, a),
        VcSweep(a) => (ExperimentKind::VcSweep, a),
        Capacity(a) => (ExperimentKind::Capacity, a),
        Green(a) => (ExperimentKind::Green, a),
        LlnRange(a) => (ExperimentKind::LlnRange, a),
        Led(a) => (ExperimentKind::Led, a),
        HittingSums(a) => (ExperimentKind::HittingSums, a),
        Subboxes(a) => (ExperimentKind::Subboxes, a),
        Campbell(a) => (ExperimentKind::Campbell, a),
        Scales(a) => (ExperimentKind::Scales, a),
        TargetShooting(a) => (ExperimentKind::TargetShooting, a),
        Explore(a) => (ExperimentKind::Explore, a),
        Preset { name } => return Err(name),
    })
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => harness::load_config(path)?,
        (None, Some(name)) => harness::preset(name)?,
        (None, None) => {
            return Err(HarnessError::Validation(vec![harness::Issue {
                key: "--config".into(),
                message: "a config file or --preset is required".into(),
            }]))
        }
    };
    if cfg.kind != kind {
        return Err(HarnessError::Validation(vec![harness::Issue {
            key: "kind".into(),
            message: format!("config is for {}, subcommand is {kind}", cfg.kind),
        }]));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.budget.replicas = r;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = Some(o.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match split(cli.command) {
        Ok(x) => x,
        Err(name) => {
            return match harness::preset(&name) {
                Ok(cfg) => {
                    print!("{}", toml::to_string(&cfg).expect("preset serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match load(kind, &args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    match harness::run_to_dir(&cfg, &dir) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.summary).expect("json"));
            if out.partial {
                eprintln!("budget exhausted; outputs in {} are flagged partial", dir.display());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ HarnessError::Validation(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
