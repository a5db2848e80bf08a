//! Command-line front end for the location-privacy mechanisms.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use locpriv::a2c::{evaluate_policy, train};
use locpriv::experiment::{
    emit_curve, load_checkpoint, oracle_check, run_experiment, ExperimentConfig, Method,
};
use locpriv::{Error, Result};

#[derive(Parser)]
#[command(
    name = "locpriv",
    version,
    about = "History-aware location-privacy mechanisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment-shaped subcommands; each overrides the
/// matching config-file field.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON experiment config; omitted fields take profile defaults
    #[arg(long)]
    config: Option<PathBuf>,

    /// Base profile when no config file is given
    #[arg(long, value_parser = ["desk", "paper"], default_value = "desk")]
    profile: String,

    /// Override: single training/evaluation seed
    #[arg(long)]
    seed: Option<u64>,

    /// Override: comma-separated seed list
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Override: single Lagrange multiplier
    #[arg(long)]
    lambda: Option<f64>,

    /// Override: comma-separated lambda sweep
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,

    /// Override: transition-matrix family
    #[arg(long)]
    world: Option<String>,

    /// Override: grid side length
    #[arg(long)]
    side: Option<usize>,

    /// Override: training episodes
    #[arg(long)]
    episodes: Option<usize>,

    /// Override: trajectory horizon
    #[arg(long)]
    horizon: Option<usize>,

    /// Override: evaluation roll-outs
    #[arg(long)]
    rollouts: Option<usize>,

    /// Override: distortion reference in the Lagrangian
    #[arg(long)]
    dbar: Option<f64>,

    /// Override: method list (a2c, myopic, or both)
    #[arg(long)]
    methods: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None if self.profile == "paper" => ExperimentConfig::paper(),
            None => ExperimentConfig::desk(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(l) = self.lambda {
            cfg.lambdas = vec![l];
        }
        if let Some(l) = &self.lambdas {
            cfg.lambdas = l.clone();
        }
        if let Some(w) = &self.world {
            cfg.world = w.parse()?;
        }
        if let Some(v) = self.side {
            cfg.side = v;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.rollouts {
            cfg.rollouts = v;
        }
        if let Some(v) = self.dbar {
            cfg.dbar = v;
        }
        if let Some(m) = &self.methods {
            cfg.methods = match m.as_str() {
                "both" => vec![Method::A2c, Method::Myopic],
                other => vec![other.parse()?],
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one actor-critic policy and save checkpoints and curves
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for checkpoints, curves.csv, and the manifest
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
    },
    /// Evaluate a saved actor checkpoint
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Actor checkpoint path
        #[arg(long)]
        actor: PathBuf,
    },
    /// Run the myopic baseline over the lambda sweep
    Myopic {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for results.csv
        #[arg(long, default_value = "out/myopic")]
        out: PathBuf,
        /// Recompute cells that already exist in results.csv
        #[arg(long)]
        force: bool,
    },
    /// Aggregate results.csv into plot-ready trade-off curve data
    Curve {
        /// Directory containing results.csv (plot.csv is written beside it)
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        /// Restrict to one method
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the exact-enumeration property suites
    OracleCheck,
    /// Run the full experiment sweep (train, evaluate, baseline)
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        /// Recompute cells that already exist in results.csv
        #[arg(long)]
        force: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. }
        | Error::Domain(_)
        | Error::MassDrift { .. }
        | Error::ZeroProbabilityObservation { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Train { cfg, out } => {
            let cfg = cfg.resolve()?;
            let world = cfg.build_world()?;
            let lambda = cfg.lambdas[0];
            let seed = cfg.seeds[0];
            let tc = cfg.train_config(lambda, seed);
            eprintln!(
                "training: world={} lambda={lambda} seed={seed} episodes={}",
                cfg.world, tc.episodes
            );
            let res = train(&tc, &world)?;
            locpriv::experiment::save_training_run(&out, &cfg, &tc, &res)?;
            let (leak, dist, cost) = locpriv::experiment::smoothed_final(&res, 100);
            println!(
                "final (100-episode mean): leakage {leak:.6} bits/step, distortion {dist:.6}, cost {cost:.6}"
            );
            println!("artifacts in {}", out.display());
            Ok(0)
        }
        Command::Evaluate { cfg, actor } => {
            let cfg = cfg.resolve()?;
            let world = cfg.build_world()?;
            let actor = load_checkpoint(&actor)?;
            let res = evaluate_policy(
                &actor,
                &world,
                cfg.horizon,
                cfg.rollouts,
                cfg.lambdas[0],
                cfg.dbar,
                cfg.seeds[0],
            )?;
            println!("{}", serde_json::to_string_pretty(&res)?);
            Ok(0)
        }
        Command::Myopic { cfg, out, force } => {
            let mut cfg = cfg.resolve()?;
            cfg.methods = vec![Method::Myopic];
            let report = run_experiment(&cfg, &out, force)?;
            println!(
                "myopic sweep: {} computed, {} skipped -> {}",
                report.computed,
                report.skipped,
                report.results_path.display()
            );
            Ok(0)
        }
        Command::Curve { out, method } => {
            let filter = method.as_deref().map(str::parse).transpose()?;
            let results = out.join("results.csv");
            let plot = out.join("plot.csv");
            let n = emit_curve(&results, filter, &plot)?;
            println!("wrote {n} aggregated rows to {}", plot.display());
            Ok(0)
        }
        Command::OracleCheck => {
            let report = oracle_check()?;
            for s in &report.suites {
                println!(
                    "{}: {} ({} instances; {})",
                    s.name,
                    if s.passed { "pass" } else { "FAIL" },
                    s.instances,
                    s.detail
                );
            }
            if report.passed() {
                println!("all property suites passed");
                Ok(0)
            } else {
                let failed: Vec<&str> = report
                    .suites
                    .iter()
                    .filter(|s| !s.passed)
                    .map(|s| s.name)
                    .collect();
                eprintln!("property failure: {}", failed.join(", "));
                Ok(1)
            }
        }
        Command::Run { cfg, out, force } => {
            let cfg = cfg.resolve()?;
            let report = run_experiment(&cfg, &out, force)?;
            println!(
                "sweep complete: {} computed, {} skipped -> {}",
                report.computed,
                report.skipped,
                report.results_path.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
