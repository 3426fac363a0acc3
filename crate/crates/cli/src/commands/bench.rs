//! `dynfield bench`: the comparative suite. Scenario x planner cells run on
//! a small thread pool; metrics, timing, table, and per-run traces land in
//! the output directory. Only `metrics.json` and `table` columns free of
//! wall time are bit-reproducible across runs.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use clap::Args;

use dynfield_core::bench::{
    self, aggregate, default_suite, load_scenario, render_table, BenchConfig, BenchReport,
    MetricsReport, Planner, Scenario, TimingReport,
};
use dynfield_core::surrogate::SurrogateModel;

use super::Context;
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::CliError;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of scenario TOML files; the shipped seeded suite if absent.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Comma-separated planners: mpc, mppi, or surrogate=<checkpoint>.
    #[arg(long, default_value = "mpc,mppi")]
    pub planners: String,
}

fn parse_planners(spec: &str, manifest: &mut ManifestBuilder) -> Result<Vec<Planner>, CliError> {
    spec.split(',')
        .map(|item| {
            let item = item.trim();
            if item == "mpc" {
                Ok(Planner::MpcAnalytic)
            } else if item == "mppi" {
                Ok(Planner::Mppi)
            } else if let Some(path) = item.strip_prefix("surrogate=") {
                let path = PathBuf::from(path);
                manifest
                    .record_input(&path)
                    .map_err(|e| CliError::Parse(format!("{e:#}")))?;
                let model = SurrogateModel::load_checkpoint(&path)
                    .map_err(|e| CliError::Parse(format!("checkpoint {}: {e}", path.display())))?;
                Ok(Planner::MpcSurrogate {
                    name: format!("npfield-{}", model.variant),
                    model: Arc::new(model),
                })
            } else {
                Err(CliError::Parse(format!("unknown planner {item:?}")))
            }
        })
        .collect()
}

fn load_suite(args: &BenchArgs, manifest: &mut ManifestBuilder) -> Result<Vec<Scenario>, CliError> {
    match &args.suite {
        None => default_suite().map_err(|e| CliError::Other(anyhow::anyhow!(e))),
        Some(dir) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| CliError::Parse(format!("suite dir {}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::Parse(format!(
                    "no scenario .toml files under {}",
                    dir.display()
                )));
            }
            paths
                .iter()
                .map(|p| {
                    manifest
                        .record_input(p)
                        .map_err(|e| CliError::Parse(format!("{e:#}")))?;
                    load_scenario(p).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<Scenario>, _>>()
        }
    }
}

pub fn run(ctx: &Context, args: BenchArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "bench",
        ctx.seed,
        serde_json::to_value(&ctx.config).unwrap_or_default(),
    );
    let planners = parse_planners(&args.planners, &mut manifest)?;
    let scenarios = load_suite(&args, &mut manifest)?;
    let config = BenchConfig {
        mpc: ctx.config.mpc.clone(),
        mppi: ctx.config.mppi.clone(),
        weights: ctx
            .config
            .potential
            .weights()
            .map_err(|e| CliError::Parse(format!("{e:#}")))?,
        heading_bins: ctx.config.potential.heading_bins,
    };

    // Scenario x planner cells are independent; run them on a work queue and
    // gather in deterministic (planner, scenario) order.
    let cells: Vec<(usize, usize)> = (0..planners.len())
        .flat_map(|p| (0..scenarios.len()).map(move |s| (p, s)))
        .collect();
    let results: Vec<Option<(MetricsReport, TimingReport, Vec<(usize, f64, f64, f64, f64)>)>> = {
        let slots: Mutex<Vec<Option<_>>> = Mutex::new(vec![None; cells.len()]);
        let next: Mutex<usize> = Mutex::new(0);
        std::thread::scope(|scope| {
            for _ in 0..ctx.threads.min(cells.len().max(1)) {
                scope.spawn(|| loop {
                    let idx = {
                        let mut guard = next.lock().unwrap();
                        if *guard >= cells.len() {
                            break;
                        }
                        let i = *guard;
                        *guard += 1;
                        i
                    };
                    let (p, s) = cells[idx];
                    let cell = run_cell(&scenarios[s], &planners[p], &config);
                    slots.lock().unwrap()[idx] = Some(cell);
                });
            }
        });
        slots.into_inner().unwrap()
    };

    let mut metrics = Vec::new();
    let mut timing = Vec::new();
    let traces_dir = ctx.out_dir.join("traces");
    std::fs::create_dir_all(&traces_dir).map_err(|e| CliError::Other(e.into()))?;
    for cell in results.into_iter().flatten() {
        let (m, t, trace) = cell;
        let mut csv = String::from("step,x,y,theta,v\n");
        for (i, x, y, theta, v) in &trace {
            let _ = writeln!(csv, "{i},{x},{y},{theta},{v}");
        }
        let trace_path = traces_dir.join(format!("{}__{}.csv", m.planner, m.scenario));
        write_atomic(&trace_path, csv.as_bytes()).map_err(CliError::Other)?;
        manifest.record_output(&trace_path);
        metrics.push(m);
        timing.push(t);
    }
    let aggregates = aggregate(&metrics, &timing);
    let report = BenchReport {
        metrics,
        timing,
        aggregates,
    };

    // Deterministic metrics (no wall time anywhere inside).
    let metrics_json = serde_json::json!({
        "metrics": report.metrics,
        "aggregates_deterministic": report.aggregates.iter().map(|a| {
            serde_json::json!({
                "planner": a.planner,
                "scenarios": a.scenarios,
                "successes": a.successes,
                "mean_path_length_m": a.mean_path_length_m,
                "mean_smoothness": a.mean_smoothness,
                "mean_aol": a.mean_aol,
                "mean_safety_distance_m": a.mean_safety_distance_m,
            })
        }).collect::<Vec<_>>(),
    });
    let metrics_path = ctx.out_dir.join("metrics.json");
    write_atomic(
        &metrics_path,
        serde_json::to_string_pretty(&metrics_json)
            .map_err(|e| CliError::Other(e.into()))?
            .as_bytes(),
    )
    .map_err(CliError::Other)?;
    manifest.record_output(&metrics_path);

    let timing_path = ctx.out_dir.join("timing.json");
    write_atomic(
        &timing_path,
        serde_json::to_string_pretty(&report.timing)
            .map_err(|e| CliError::Other(e.into()))?
            .as_bytes(),
    )
    .map_err(CliError::Other)?;
    manifest.record_output(&timing_path);

    let table = render_table(&report);
    let table_path = ctx.out_dir.join("table.txt");
    write_atomic(&table_path, table.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&table_path);
    manifest.write(&ctx.out_dir).map_err(CliError::Other)?;

    print!("{table}");
    Ok(())
}

type CellResult = (
    MetricsReport,
    TimingReport,
    Vec<(usize, f64, f64, f64, f64)>,
);

fn run_cell(scenario: &Scenario, planner: &Planner, config: &BenchConfig) -> CellResult {
    match bench::run_scenario(scenario, planner, config) {
        Ok((run, footprint)) => {
            let check = dynfield_core::mpc::collision_post_check_frames(
                &run.states,
                &run.scenes,
                &footprint,
            );
            let (length, smooth, angle) = if run.states.len() >= 3 {
                (
                    bench::path_length(&run.states),
                    bench::smoothness(&run.states),
                    bench::aol(&run.states),
                )
            } else {
                (bench::path_length(&run.states), 0.0, 0.0)
            };
            let solve_ms: Vec<f64> = run.reports.iter().map(|r| r.wall_time_ms).collect();
            let total: f64 = solve_ms.iter().sum();
            let trace = run
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| (i, s.x, s.y, s.theta, s.v))
                .collect();
            (
                MetricsReport {
                    planner: planner.name().to_string(),
                    scenario: scenario.spec.name.clone(),
                    goal_reached: run.goal_reached,
                    collision_free: check.passed,
                    success: run.goal_reached && check.min_sdf > 0.0,
                    steps: run.controls.len(),
                    path_length_m: length,
                    smoothness: smooth,
                    aol: angle,
                    safety_distance_m: check.min_sdf,
                },
                TimingReport {
                    planner: planner.name().to_string(),
                    scenario: scenario.spec.name.clone(),
                    replans: solve_ms.len(),
                    solve_ms_mean: if solve_ms.is_empty() {
                        0.0
                    } else {
                        total / solve_ms.len() as f64
                    },
                    solve_ms_total: total,
                },
                trace,
            )
        }
        Err(err) => {
            eprintln!(
                "scenario {} failed under {}: {err}",
                scenario.spec.name,
                planner.name()
            );
            (
                MetricsReport {
                    planner: planner.name().to_string(),
                    scenario: scenario.spec.name.clone(),
                    goal_reached: false,
                    collision_free: false,
                    success: false,
                    steps: 0,
                    path_length_m: f64::NAN,
                    smoothness: f64::NAN,
                    aol: f64::NAN,
                    safety_distance_m: f64::NAN,
                },
                TimingReport {
                    planner: planner.name().to_string(),
                    scenario: scenario.spec.name.clone(),
                    replans: 0,
                    solve_ms_mean: 0.0,
                    solve_ms_total: 0.0,
                },
                Vec::new(),
            )
        }
    }
}
