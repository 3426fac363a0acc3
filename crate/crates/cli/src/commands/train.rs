//! `dynfield train`: fit one surrogate variant and write its checkpoint.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use dynfield_core::grid::OccupancyGrid;
use dynfield_core::surrogate::dataset::read_csv;
use dynfield_core::surrogate::train::{sequence_rmse, split_holdout, train};
use dynfield_core::surrogate::{ModelDims, ModelMeta, SurrogateModel, Variant};

use super::Context;
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::CliError;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV produced by gen-dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory with the submaps the dataset references.
    #[arg(long)]
    pub maps: PathBuf,
    /// Variant to train: d1, d2, or d3.
    #[arg(long)]
    pub variant: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Fraction of rows held out for evaluation.
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
}

pub fn run(ctx: &Context, args: TrainArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "train",
        ctx.seed,
        serde_json::to_value(&ctx.config).unwrap_or_default(),
    );
    let variant = Variant::parse(&args.variant)
        .ok_or_else(|| CliError::Parse(format!("unknown variant {:?}", args.variant)))?;
    manifest
        .record_input(&args.dataset)
        .map_err(|e| CliError::Parse(format!("{e:#}")))?;
    let rows = read_csv(&args.dataset)
        .map_err(|e| CliError::Parse(format!("dataset {}: {e}", args.dataset.display())))?;
    if rows.is_empty() {
        return Err(CliError::Parse("dataset is empty".into()));
    }

    let mut map_paths: Vec<PathBuf> = std::fs::read_dir(&args.maps)
        .map_err(|e| CliError::Parse(format!("maps dir {}: {e}", args.maps.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    map_paths.sort();
    let maps: Vec<OccupancyGrid> = map_paths
        .iter()
        .map(|p| {
            OccupancyGrid::load_pgm(p).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_, _>>()?;
    let max_submap = rows.iter().map(|r| r.submap_id).max().unwrap_or(0);
    if max_submap >= maps.len() {
        return Err(CliError::Parse(format!(
            "dataset references submap {max_submap} but only {} maps were found",
            maps.len()
        )));
    }

    let horizon = rows[0].targets.len() - 1;
    let weights = ctx
        .config
        .potential
        .weights()
        .map_err(|e| CliError::Parse(format!("{e:#}")))?;
    let meta = ModelMeta {
        horizon,
        weights,
        agent_step_m: ctx.config.dataset.agent_speed * ctx.config.dataset.dt,
        ..ModelMeta::default()
    };

    let mut train_cfg = ctx.config.train.clone();
    train_cfg.seed = ctx.seed;
    if let Some(e) = args.epochs {
        train_cfg.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        train_cfg.learning_rate = lr;
    }

    let (train_rows, held) = split_holdout(&rows, args.holdout.clamp(0.0, 0.9), ctx.seed);
    let mut model = SurrogateModel::new(variant, meta, ModelDims::default(), ctx.seed);
    let report = train(&mut model, &train_rows, &maps, &train_cfg)
        .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;

    let ckpt_path = ctx.out_dir.join(format!("npfield-{variant}.ckpt"));
    model
        .save_checkpoint(&ckpt_path)
        .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
    manifest.record_output(&ckpt_path);

    let mut curve = String::from("epoch,loss\n");
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(curve, "{i},{loss}");
    }
    let curve_path = ctx.out_dir.join("loss_curve.csv");
    write_atomic(&curve_path, curve.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&curve_path);

    let rmse = if held.is_empty() {
        f64::NAN
    } else {
        sequence_rmse(&model, &held, &maps).map_err(|e| CliError::Other(anyhow::anyhow!(e)))?
    };
    let eval = serde_json::json!({
        "variant": variant.as_str(),
        "train_rows": train_rows.len(),
        "holdout_rows": held.len(),
        "final_train_loss": report.final_loss,
        "holdout_sequence_rmse": rmse,
    });
    let eval_path = ctx.out_dir.join("eval.json");
    write_atomic(
        &eval_path,
        serde_json::to_string_pretty(&eval)
            .map_err(|e| CliError::Other(e.into()))?
            .as_bytes(),
    )
    .map_err(CliError::Other)?;
    manifest.record_output(&eval_path);
    manifest.write(&ctx.out_dir).map_err(CliError::Other)?;

    println!(
        "train: npfield-{variant} final loss {:.5}, holdout sequence RMSE {rmse:.4} -> {}",
        report.final_loss,
        ckpt_path.display()
    );
    Ok(())
}
