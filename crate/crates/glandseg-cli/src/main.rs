//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data error,
//! 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use glandseg::pipeline::{
    cmd_evaluate, cmd_gridsearch, cmd_segment, cmd_synth, cmd_train, PipelineConfig,
};
use glandseg::{Error, Result};

#[derive(Parser)]
#[command(
    name = "glandseg",
    version,
    about = "Gland segmentation for H&E histology: CNN pixel classifiers + weighted-TV segmentation"
)]
struct Cli {
    /// Configuration file (key = value lines)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured RNG seed
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the configured output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (0 = one per core)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic gland dataset with ground truth and a manifest
    Synth,
    /// Train the Object-Net and Separator-Net from the manifest
    Train,
    /// Run the full segmentation pipeline over images
    Segment {
        /// Images to segment; defaults to every manifest entry
        images: Vec<PathBuf>,
    },
    /// Score predicted label maps against ground truth
    Evaluate {
        /// Directory holding `<stem>_labels.png` predictions
        /// (default: the output directory)
        pred_dir: Option<PathBuf>,
        /// Ground-truth manifest (default: paths.manifest from the config)
        manifest: Option<PathBuf>,
    },
    /// Exhaustive (alpha, beta, lambda) search maximizing object-level Dice
    Gridsearch,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    if config.jobs > 0 {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build_global();
    }

    match cli.command {
        Command::Synth => {
            let manifest = cmd_synth(&config)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train => {
            let artifacts = cmd_train(&config)?;
            println!("wrote {}", artifacts.object_checkpoint.display());
            println!("wrote {}", artifacts.separator_checkpoint.display());
        }
        Command::Segment { images } => {
            let outcome = cmd_segment(&config, &images)?;
            for img in &outcome.images {
                println!(
                    "{}: {} object(s), {} (confidence {:.4})",
                    img.name,
                    img.labels.count(),
                    img.decision.class,
                    img.decision.confidence
                );
            }
            println!("wrote {}", outcome.decisions_path.display());
        }
        Command::Evaluate { pred_dir, manifest } => {
            let pred_dir = pred_dir.unwrap_or_else(|| config.out_dir.clone());
            let manifest = manifest
                .or_else(|| config.manifest.clone())
                .ok_or_else(|| Error::Data("evaluate needs a manifest (argument or config)".into()))?;
            let report = cmd_evaluate(&pred_dir, &manifest)?;
            let table = report.to_table();
            print!("{table}");
            let out = pred_dir.join("metrics.tsv");
            std::fs::write(&out, &table).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            println!("wrote {}", out.display());
        }
        Command::Gridsearch => {
            let result = cmd_gridsearch(&config, &config.grid.clone())?;
            println!(
                "best: alpha={} beta={} lambda={} (mean object-Dice {:.4})",
                result.best_alpha, result.best_beta, result.best_lambda, result.best_dice
            );
            println!("wrote {}", config.out_dir.join("gridsearch.tsv").display());
        }
    }
    Ok(())
}
