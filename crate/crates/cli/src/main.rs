//! `gridfreq`: end-to-end driver for the grid-frequency forecasting
//! pipeline (ingest, train, evaluate, ensemble, export-curves).

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gridfreq_core::model::Building;

use artifacts::Paths;
use commands::SplitSel;
use config::{ResolvedBuilding, RunConfig};

#[derive(Parser)]
#[command(name = "gridfreq", version, about = "ConvLSTM grid-frequency forecasting pipeline")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, default_value = "gridfreq.toml")]
    config: PathBuf,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Scope {
    /// Single building id (A, B, or C).
    #[arg(long, conflicts_with = "all")]
    building: Option<String>,
    /// Process every configured building (the default when --building is absent).
    #[arg(long)]
    all: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, resample, gap-fill, scale, and window the raw CSVs.
    Ingest(Scope),
    /// Train per-building models from the ingested datasets.
    Train(Scope),
    /// Score a trained model and emit metrics plus an actual-vs-predicted CSV.
    Evaluate {
        #[command(flatten)]
        scope: Scope,
        /// Rows to score: train, test, or file=PATH for unseen data.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Combine the trained models into a weighted ensemble and report all metrics.
    Ensemble {
        /// Building whose series the ensemble predicts (default: first configured).
        #[arg(long)]
        building: Option<String>,
        /// Rows to score: train, test, or file=PATH for unseen data.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Merge per-building loss curves into one long-format CSV.
    ExportCurves(Scope),
}

fn scope_buildings(cfg: &RunConfig, scope: &Scope) -> Result<Vec<Building>> {
    match &scope.building {
        Some(id) => {
            let b = Building::from_str(id).map_err(|e| anyhow::anyhow!("{}", e))?;
            if !cfg.building.contains_key(b.id()) {
                anyhow::bail!("building {} is not configured", b.id());
            }
            Ok(vec![b])
        }
        None => Ok(cfg.configured_buildings()),
    }
}

/// Runs `job` per building, reporting every failure and succeeding only if
/// all did.
fn for_each_building(
    buildings: &[Building],
    job: impl Fn(Building) -> Result<String> + Sync,
    parallel: bool,
) -> Result<()> {
    let results: Vec<(Building, Result<String>)> = if parallel && buildings.len() > 1 {
        std::thread::scope(|s| {
            let job = &job;
            let handles: Vec<_> = buildings
                .iter()
                .map(|&b| s.spawn(move || (b, job(b))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    } else {
        buildings.iter().map(|&b| (b, job(b))).collect()
    };

    let mut failures = 0;
    for (b, result) in results {
        match result {
            Ok(summary) => println!("{}", summary),
            Err(e) => {
                eprintln!("building {} failed: {:#}", b.id(), e);
                failures += 1;
            }
        }
    }
    if failures > 0 {
        anyhow::bail!("{} of {} buildings failed", failures, buildings.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(&cli.config)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let paths = Paths::new(out_dir);

    let resolve = |b: Building| -> Result<ResolvedBuilding> { cfg.resolve_building(b, seed) };

    match &cli.command {
        Command::Ingest(scope) => {
            let buildings = scope_buildings(&cfg, scope)?;
            for_each_building(
                &buildings,
                |b| commands::ingest_building(&paths, &resolve(b)?, cfg.train_fraction),
                false,
            )
        }
        Command::Train(scope) => {
            let buildings = scope_buildings(&cfg, scope)?;
            for_each_building(
                &buildings,
                |b| commands::train_building(&paths, &resolve(b)?, cfg.train_fraction),
                true,
            )
        }
        Command::Evaluate { scope, split } => {
            let buildings = scope_buildings(&cfg, scope)?;
            let split = SplitSel::from_str(split)?;
            for_each_building(
                &buildings,
                |b| commands::evaluate_building(&paths, &resolve(b)?, &split, cfg.train_fraction),
                false,
            )
        }
        Command::Ensemble { building, split } => {
            let split = SplitSel::from_str(split)?;
            let members: Vec<ResolvedBuilding> = cfg
                .configured_buildings()
                .into_iter()
                .map(resolve)
                .collect::<Result<_>>()?;
            let source = match building {
                Some(id) => Building::from_str(id).map_err(|e| anyhow::anyhow!("{}", e))?,
                None => *cfg
                    .configured_buildings()
                    .first()
                    .context("no buildings configured")?,
            };
            let summary =
                commands::ensemble_run(&paths, &cfg, &members, source, &split, cfg.train_fraction)?;
            println!("{}", summary);
            Ok(())
        }
        Command::ExportCurves(scope) => {
            let buildings = scope_buildings(&cfg, scope)?;
            let summary = commands::export_curves(&paths, &buildings)?;
            println!("{}", summary);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
