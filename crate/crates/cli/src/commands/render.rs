//! `dynfield render`: maps and exported field rasters to SVG or PGM.

use std::path::PathBuf;

use clap::Args;

use dynfield_core::grid::io::read_scalar_raster;
use dynfield_core::grid::OccupancyGrid;
use dynfield_core::render::{scalar_field_pgm, scalar_field_svg};

use super::Context;
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::CliError;

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A .pgm occupancy map or a scalar raster exported with its .hdr
    /// sidecar (SDF or potential).
    #[arg(long)]
    pub input: PathBuf,
    /// Output name (relative to --out-dir); .svg or .pgm decides the format.
    #[arg(long, default_value = "render.svg")]
    pub out: PathBuf,
}

pub fn run(ctx: &Context, args: RenderArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "render",
        ctx.seed,
        serde_json::to_value(&ctx.config).unwrap_or_default(),
    );
    manifest
        .record_input(&args.input)
        .map_err(|e| CliError::Parse(format!("{e:#}")))?;

    // Occupancy maps render 0/1; scalar rasters render their values, with
    // potential grids collapsed to the max over heading bins.
    let (geometry, values) = if args.input.extension().is_some_and(|e| e == "pgm") {
        let grid = OccupancyGrid::load_pgm(&args.input)
            .map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))?;
        let values = grid.cells().iter().map(|&c| c as f64).collect();
        (grid.geometry, values)
    } else {
        let raster = read_scalar_raster(&args.input)
            .map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))?;
        match raster.heading_bins {
            None | Some(1) => (raster.geometry, raster.values),
            Some(bins) => {
                let len = raster.geometry.len();
                let mut collapsed = vec![f64::NEG_INFINITY; len];
                for b in 0..bins {
                    for i in 0..len {
                        collapsed[i] = collapsed[i].max(raster.values[b * len + i]);
                    }
                }
                (raster.geometry, collapsed)
            }
        }
    };

    let out_path = ctx.out_dir.join(&args.out);
    let bytes = match out_path.extension().and_then(|e| e.to_str()) {
        Some("svg") => scalar_field_svg(&geometry, &values).into_bytes(),
        Some("pgm") => scalar_field_pgm(&geometry, &values),
        other => {
            return Err(CliError::Parse(format!(
                "unsupported render extension {other:?}; use .svg or .pgm"
            )))
        }
    };
    write_atomic(&out_path, &bytes).map_err(CliError::Other)?;
    manifest.record_output(&out_path);
    manifest.write(&ctx.out_dir).map_err(CliError::Other)?;
    println!("render: {} -> {}", args.input.display(), out_path.display());
    Ok(())
}
