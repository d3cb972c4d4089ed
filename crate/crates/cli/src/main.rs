//! Batch harness for dynamic-influence experiments against language-model
//! completion backends.
//!
//! Subcommands: `design` builds and checks balanced rating blocks; `run-ite`
//! and `run-pfn` administer the two studies and append raw records as JSONL;
//! `analyze` recomputes a run's statistics from the raw data; `report`
//! renders table and figure-data files; `calibrate-deprivation` solves for
//! the response-noise width that yields a target identical-triple rate.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 backend failure, 4 analysis failure.

mod config;
mod error;
mod http;
mod manifest;
mod report;
mod runner;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig, Study};
use crate::error::CliError;
use crate::report::{AnalyzeOverrides, ReportKind};

#[derive(Parser)]
#[command(
    name = "influence",
    version,
    about = "Administer and analyze dynamic-influence experiments on completion backends"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build balanced rating-study blocks and check their invariants.
    Design {
        /// Number of 16-participant blocks to build.
        #[arg(long, default_value_t = 1)]
        blocks: u32,
        /// Root design seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Statement bank file (builtin bank when omitted).
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Write the blocks as JSON to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the statement-rating study and append raw records to a run directory.
    RunIte {
        /// Run configuration file (documented defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory for manifest, data, and reports.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Use an HTTP completion backend at this URL.
        #[arg(long)]
        backend_url: Option<String>,
        /// Continue an interrupted run from its last complete participant.
        #[arg(long)]
        resume: bool,
    },
    /// Run the news-framing study and append raw records to a run directory.
    RunPfn {
        /// Run configuration file (documented defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory for manifest, data, and reports.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Use an HTTP completion backend at this URL.
        #[arg(long)]
        backend_url: Option<String>,
        /// Continue an interrupted run from its last complete participant.
        #[arg(long)]
        resume: bool,
    },
    /// Recompute a run's analysis from its raw data file.
    Analyze {
        /// Run directory produced by run-ite or run-pfn.
        run: PathBuf,
        /// Override the configured bootstrap resample count.
        #[arg(long)]
        resamples: Option<usize>,
        /// Override the configured bootstrap seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render report files into a run directory's reports/ folder.
    Report {
        /// Run directory produced by run-ite or run-pfn.
        run: PathBuf,
        /// Report kinds to render (all kinds for the run's study when omitted).
        #[arg(long = "kind", value_enum)]
        kind: Vec<ReportKind>,
    },
    /// Solve for the deprivation perturbation width hitting a target
    /// identical-triple rate.
    CalibrateDeprivation {
        /// Population mean of the latent deprivation score.
        #[arg(long, default_value_t = 4.30)]
        mean: f64,
        /// Population standard deviation of the latent score.
        #[arg(long, default_value_t = 1.61)]
        sd: f64,
        /// Target fraction of participants giving three identical ratings.
        #[arg(long, default_value_t = 0.5)]
        target: f64,
        /// Monte Carlo seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Design { blocks, seed, bank, out } => design(blocks, seed, bank, out),
        Cmd::RunIte { config, out, seed, backend_url, resume } => {
            let config = load_run_config(config, seed, backend_url, Study::Ite)?;
            let manifest = runner::run_ite(&config, &out, resume)?;
            print_run_summary(&manifest, &out);
            Ok(())
        }
        Cmd::RunPfn { config, out, seed, backend_url, resume } => {
            let config = load_run_config(config, seed, backend_url, Study::Pfn)?;
            let manifest = runner::run_pfn(&config, &out, resume)?;
            print_run_summary(&manifest, &out);
            Ok(())
        }
        Cmd::Analyze { run, resamples, seed } => {
            let overrides = AnalyzeOverrides { resamples, seed };
            report::analyze(&run, &overrides)?;
            println!("wrote {}", run.join(manifest::ANALYSIS_FILE).display());
            Ok(())
        }
        Cmd::Report { run, kind } => {
            for path in report::report(&run, &kind)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Cmd::CalibrateDeprivation { mean, sd, target, seed } => {
            let calibration = influence_core::sampler::calibrate_perturbation(
                mean, sd, target, seed,
            )
            .map_err(CliError::from)?;
            let mut text =
                serde_json::to_string_pretty(&calibration).expect("calibration serializes");
            text.push('\n');
            print!("{text}");
            Ok(())
        }
    }
}

fn load_run_config(
    path: Option<PathBuf>,
    seed: Option<u64>,
    backend_url: Option<String>,
    study: Study,
) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(path.as_deref())?;
    config.apply(&Overrides { seed, backend_url });
    config.resolve_study(study)?;
    Ok(config)
}

fn print_run_summary(manifest: &manifest::RunManifest, dir: &std::path::Path) {
    println!(
        "run {} complete: {} participants, {} records, {} rejections, {} queries -> {}",
        manifest.run_id,
        manifest.participants,
        manifest.records,
        manifest.rejections,
        manifest.queries,
        dir.display()
    );
}

fn design(
    blocks: u32,
    seed: u64,
    bank: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let bank = runner::load_bank(bank.as_deref())?;
    let mut built = Vec::new();
    let mut balanced = true;
    for block_id in 0..blocks {
        let block = influence_core::design::build_block(&bank, block_id, seed)?;
        let check = influence_core::design::validate_block(&block);
        println!(
            "block {block_id}: {} participants, {}",
            block.designs.len(),
            if check.pass() { "balanced" } else { "UNBALANCED" }
        );
        if !check.pass() {
            balanced = false;
            print!("{}", check.summary());
        }
        built.push(block);
    }
    if let Some(path) = &out {
        let mut text = serde_json::to_string_pretty(&built).expect("blocks serialize");
        text.push('\n');
        std::fs::write(path, text)?;
        println!("wrote {}", path.display());
    }
    if balanced {
        Ok(())
    } else {
        Err(CliError::analysis("block balance checks failed"))
    }
}
