//! `dynfield plan`: one scenario, one planner, full artifact set.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;

use dynfield_core::bench::{self, Planner, Scenario};
use dynfield_core::grid::OccupancyGrid;
use dynfield_core::mpc::collision_post_check_frames;
use dynfield_core::planner::{inflate, plan_path, PlanError};
use dynfield_core::render::plan_overlay_svg;
use dynfield_core::surrogate::SurrogateModel;
use dynfield_core::world::PotentialFrame;

use super::Context;
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::CliError;

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario's map reference.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Planner: "mpc" (analytic stack), "mppi", or "surrogate".
    #[arg(long, default_value = "mpc")]
    pub planner: String,
    /// Trained checkpoint; required for the surrogate planner.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: PlanArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "plan",
        ctx.seed,
        serde_json::to_value(&ctx.config).unwrap_or_default(),
    );
    manifest
        .record_input(&args.scenario)
        .map_err(|e| CliError::Parse(format!("scenario: {e:#}")))?;

    let mut scenario = bench::load_scenario(&args.scenario)
        .map_err(|e| CliError::Parse(format!("scenario {}: {e}", args.scenario.display())))?;
    if let Some(map_path) = &args.map {
        manifest
            .record_input(map_path)
            .map_err(|e| CliError::Parse(format!("map: {e:#}")))?;
        scenario.map = OccupancyGrid::load_pgm(map_path)
            .map_err(|e| CliError::Parse(format!("map {}: {e}", map_path.display())))?;
    }
    if scenario.spec.seed == 0 {
        scenario.spec.seed = ctx.seed;
    }

    let planner = resolve_planner(&args, &mut manifest)?;
    let bench_config = bench::BenchConfig {
        mpc: ctx.config.mpc.clone(),
        mppi: ctx.config.mppi.clone(),
        weights: ctx
            .config
            .potential
            .weights()
            .map_err(|e| CliError::Parse(format!("{e:#}")))?,
        heading_bins: ctx.config.potential.heading_bins,
    };

    // Surface NoPath as its own exit code before running.
    let footprint = scenario
        .footprint()
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let inflated = inflate(&scenario.map, footprint.width() / 2.0);
    let (sx, sy, _) = scenario.spec.start;
    let (gx, gy, _) = scenario.spec.goal;
    let global_path = match plan_path(&inflated, (sx, sy), (gx, gy)) {
        Ok(p) => p,
        Err(e @ (PlanError::NoPath | PlanError::OutsideGrid)) => {
            return Err(CliError::NoPath(format!(
                "global planning failed for {}: {e}",
                scenario.spec.name
            )))
        }
        Err(e) => return Err(CliError::Other(anyhow::anyhow!(e))),
    };

    let (run, footprint) = bench::run_scenario(&scenario, &planner, &bench_config)
        .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;

    // Trajectory CSV.
    let mut csv = String::from("step,x,y,theta,v,accel,omega\n");
    for (i, s) in run.states.iter().enumerate() {
        let (a, w) = run
            .controls
            .get(i)
            .map(|u| (u.accel, u.omega))
            .unwrap_or((0.0, 0.0));
        let _ = writeln!(csv, "{i},{},{},{},{},{a},{w}", s.x, s.y, s.theta, s.v);
    }
    let traj_path = ctx.out_dir.join("trajectory.csv");
    write_atomic(&traj_path, csv.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&traj_path);

    // Global path polyline as a JSON array of [x, y] pairs.
    let path_json = serde_json::to_string_pretty(
        &global_path.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
    )
    .map_err(|e| CliError::Other(e.into()))?;
    let path_path = ctx.out_dir.join("global_path.json");
    write_atomic(&path_path, path_json.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&path_path);

    // Deterministic metrics and separate timing.
    let check = collision_post_check_frames(&run.states, &run.scenes, &footprint);
    let metrics = serde_json::json!({
        "planner": planner.name(),
        "scenario": scenario.spec.name,
        "goal_reached": run.goal_reached,
        "collision_free": check.passed,
        "steps": run.controls.len(),
        "path_length_m": bench::path_length(&run.states),
        "smoothness": if run.states.len() >= 3 { bench::smoothness(&run.states) } else { 0.0 },
        "aol": if run.states.len() >= 3 { bench::aol(&run.states) } else { 0.0 },
        "safety_distance_m": check.min_sdf,
    });
    let metrics_path = ctx.out_dir.join("metrics.json");
    write_atomic(
        &metrics_path,
        serde_json::to_string_pretty(&metrics)
            .map_err(|e| CliError::Other(e.into()))?
            .as_bytes(),
    )
    .map_err(CliError::Other)?;
    manifest.record_output(&metrics_path);

    // Per-replan reports as JSON lines (contains wall times; not part of the
    // deterministic output set).
    let mut jsonl = String::new();
    for report in &run.reports {
        let _ = writeln!(
            jsonl,
            "{}",
            serde_json::to_string(report).map_err(|e| CliError::Other(e.into()))?
        );
    }
    let reports_path = ctx.out_dir.join("reports.jsonl");
    write_atomic(&reports_path, jsonl.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&reports_path);

    // Overlay render: map, frame-0 potential heatmap, paths, obstacles.
    let frame0 = PotentialFrame::from_scene(
        run.scenes[0].clone(),
        &footprint,
        bench_config.weights,
        bench_config.heading_bins,
    )
    .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
    let svg = plan_overlay_svg(
        &scenario.map,
        Some(&frame0.potential),
        &global_path,
        &run.states,
        &scenario.spec.obstacles,
        &footprint,
        run.dt,
        (gx, gy),
    );
    let svg_path = ctx.out_dir.join("overlay.svg");
    write_atomic(&svg_path, svg.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&svg_path);

    manifest.write(&ctx.out_dir).map_err(CliError::Other)?;

    if !run.goal_reached {
        return Err(CliError::GoalUnreached(format!(
            "budget exhausted after {} steps",
            run.controls.len()
        )));
    }
    println!(
        "plan: {} reached the goal in {} steps (safety distance {:.3} m)",
        planner.name(),
        run.controls.len(),
        check.min_sdf
    );
    Ok(())
}

fn resolve_planner(args: &PlanArgs, manifest: &mut ManifestBuilder) -> Result<Planner, CliError> {
    match args.planner.as_str() {
        "mpc" => Ok(Planner::MpcAnalytic),
        "mppi" => Ok(Planner::Mppi),
        "surrogate" => {
            let path = args.checkpoint.as_ref().ok_or_else(|| {
                CliError::Parse("--planner surrogate requires --checkpoint".into())
            })?;
            manifest
                .record_input(path)
                .map_err(|e| CliError::Parse(format!("checkpoint: {e:#}")))?;
            let model = SurrogateModel::load_checkpoint(path)
                .map_err(|e| CliError::Parse(format!("checkpoint {}: {e}", path.display())))?;
            Ok(Planner::MpcSurrogate {
                name: format!("npfield-{}", model.variant),
                model: Arc::new(model),
            })
        }
        other => Err(CliError::Parse(format!(
            "unknown planner {other:?}; expected mpc, mppi, or surrogate"
        ))),
    }
}

/// Used by `Scenario`-producing helpers in tests.
#[allow(dead_code)]
pub fn scenario_from_parts(spec: dynfield_core::bench::ScenarioSpec, map: OccupancyGrid) -> Scenario {
    Scenario { spec, map }
}
