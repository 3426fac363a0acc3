//! `dynfield gen-dataset`: supervised dataset CSV plus its map rasters.

use std::path::PathBuf;

use clap::Args;

use dynfield_core::grid::{Footprint, OccupancyGrid};
use dynfield_core::surrogate::dataset::{generate_dataset, generate_submaps, write_csv};

use super::Context;
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    /// Directory of PGM submaps to use as the static scenes.
    #[arg(long, conflicts_with = "generate")]
    pub maps: Option<PathBuf>,
    /// Generate this many procedural submaps instead.
    #[arg(long)]
    pub generate: Option<usize>,
    /// Robot positions per copy (each gets several orientations).
    #[arg(long)]
    pub samples_per_copy: Option<usize>,
}

pub fn run(ctx: &Context, args: GenDatasetArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "gen-dataset",
        ctx.seed,
        serde_json::to_value(&ctx.config).unwrap_or_default(),
    );
    let mut cfg = ctx.config.dataset.clone();
    cfg.seed = ctx.seed;
    if let Some(s) = args.samples_per_copy {
        cfg.samples_per_copy = s;
    }

    let maps: Vec<OccupancyGrid> = match (&args.maps, args.generate) {
        (Some(dir), _) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| CliError::Parse(format!("maps dir {}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::Parse(format!(
                    "no .pgm maps under {}",
                    dir.display()
                )));
            }
            paths
                .iter()
                .map(|p| {
                    manifest
                        .record_input(p)
                        .map_err(|e| CliError::Parse(format!("{e:#}")))?;
                    OccupancyGrid::load_pgm(p)
                        .map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
                })
                .collect::<Result<_, _>>()?
        }
        (None, generate) => generate_submaps(generate.unwrap_or(20), ctx.seed),
    };

    let footprints = [Footprint::folded_arm(), Footprint::outstretched_arm()];
    let weights = ctx
        .config
        .potential
        .weights()
        .map_err(|e| CliError::Parse(format!("{e:#}")))?;
    let rows = generate_dataset(&maps, &footprints, weights, &cfg)
        .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;

    // Persist the maps the rows refer to, so training can rebuild inputs.
    let maps_dir = ctx.out_dir.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(|e| CliError::Other(e.into()))?;
    for (i, map) in maps.iter().enumerate() {
        let path = maps_dir.join(format!("submap_{i:04}.pgm"));
        map.save_pgm(&path)
            .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
        manifest.record_output(&path);
    }

    let csv_path = ctx.out_dir.join("dataset.csv");
    write_csv(&rows, cfg.horizon, &csv_path).map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
    manifest.record_output(&csv_path);
    manifest.write(&ctx.out_dir).map_err(CliError::Other)?;

    println!(
        "gen-dataset: {} rows over {} submaps -> {}",
        rows.len(),
        maps.len(),
        csv_path.display()
    );
    Ok(())
}
