use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convmcd::loss::HeadVariant;
use convmcd::targets::{ContourRadius, DistanceMapKind};
use convmcd_cli::commands::{
    cmd_eval, cmd_gradcheck, cmd_targets, cmd_train_demo, format_gradcheck, gradcheck_outcome,
    DemoOptions, EvalOptions, TargetsOptions,
};
use convmcd_cli::config::{ConfigError, RunConfig, Validated};
use convmcd_cli::CliError;

/// Multi-task segmentation targets, metrics and a toy trainer.
#[derive(Debug, Parser)]
#[command(name = "convmcd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive contour and distance-map targets from PNG masks.
    Targets {
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// d1, d2 or d3 [default: d3]
        #[arg(long)]
        distance: Option<DistanceMapKind>,
        /// Contour dilation radius: AUTO or a positive integer [default: AUTO]
        #[arg(long)]
        radius: Option<ContourRadius>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Score predictions against ground-truth masks.
    Eval {
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
        #[arg(long, value_name = "DIR")]
        gt: PathBuf,
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        trimap: Option<PathBuf>,
        /// Boundary matching tolerance in pixels [default: 2]
        #[arg(long)]
        mf_tolerance: Option<f64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train the toy network on synthetic shapes.
    TrainDemo {
        /// Training epochs over the 4 synthetic images.
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// mcd, mc or md [default: mcd]
        #[arg(long)]
        variant: Option<HeadVariant>,
        /// d1, d2 or d3 [default: d3]
        #[arg(long)]
        distance: Option<DistanceMapKind>,
        /// AUTO or a positive integer [default: AUTO]
        #[arg(long)]
        radius: Option<ContourRadius>,
        /// Adam learning rate.
        #[arg(long, default_value_t = convmcd::train::DEMO_LEARNING_RATE)]
        lr: f64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Compare every analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_conv_backward: bool,
    },
}

fn load(config: &ConfigArg) -> Result<Validated, CliError> {
    let raw = match &config.config {
        Some(path) => RunConfig::load(Path::new(path)),
        None => Ok(RunConfig::default()),
    };
    raw.and_then(|c| c.validate())
        .map_err(|e: ConfigError| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Targets {
            masks,
            out,
            distance,
            radius,
            config,
        } => {
            let cfg = load(&config)?;
            let manifest = cmd_targets(&TargetsOptions {
                masks,
                out,
                distance: distance.unwrap_or(cfg.distance),
                radius: radius.unwrap_or(cfg.radius),
                d1_direction: cfg.d1_direction,
            })?;
            println!("wrote targets for {} masks", manifest.entries.len());
        }
        Command::Eval {
            pred,
            gt,
            report,
            csv,
            trimap,
            mf_tolerance,
            config,
        } => {
            let mut protocol = load(&config)?.protocol;
            if let Some(t) = mf_tolerance {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(CliError::Input(format!("--mf-tolerance must be >= 0, got {t}")));
                }
                protocol.mf_tolerance = t;
            }
            let r = cmd_eval(&EvalOptions {
                pred,
                gt,
                report,
                csv,
                trimap,
                protocol,
            })?;
            let fmt = |v: Option<f64>| v.map_or("null".into(), |x| format!("{x:.4}"));
            println!(
                "{} images: dice {:.4} jaccard {:.4} hd {} mf {}",
                r.mean.images,
                r.mean.dice,
                r.mean.jaccard,
                fmt(r.mean.hd),
                fmt(r.mean.mf)
            );
        }
        Command::TrainDemo {
            iters,
            seed,
            out,
            variant,
            distance,
            radius,
            lr,
            config,
        } => {
            let cfg = load(&config)?;
            let summary = cmd_train_demo(&DemoOptions {
                iters,
                seed: seed.unwrap_or(cfg.seed),
                out,
                variant: variant.unwrap_or(cfg.variant),
                distance: distance.unwrap_or(cfg.distance),
                radius: radius.unwrap_or(cfg.radius),
                weights: cfg.weights,
                learning_rate: lr,
            })?;
            println!("final training dice: {:.4}", summary.train_dice);
        }
        Command::Gradcheck {
            seed,
            corrupt_conv_backward,
        } => {
            let report = cmd_gradcheck(seed, corrupt_conv_backward);
            print!("{}", format_gradcheck(&report));
            gradcheck_outcome(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
