//! Sampling-based baseline planner: perturb a nominal control sequence with
//! Gaussian noise, roll out and score every sample against the same cost as
//! the optimizer, and average the samples weighted by exponentiated negative
//! cost.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, step, Control, RobotState};
use crate::mpc::{
    build_reference, total_cost, ExecutedRun, HorizonOracleSource, MpcConfig,
    MpcError, MpcProblem, SolveReport, SolveStatus,
};
use crate::seeding::derive_seed;
use crate::world::WorldModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MppiConfig {
    /// Number of sampled control sequences per update.
    pub samples: usize,
    /// Control noise standard deviations.
    pub sigma_accel: f64,
    pub sigma_omega: f64,
    /// Softmax temperature on the cost.
    pub temperature: f64,
    /// Update iterations per replan.
    pub iterations: usize,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            samples: 512,
            sigma_accel: 0.3,
            sigma_omega: 0.3,
            temperature: 1.0,
            iterations: 1,
        }
    }
}

/// Diagnostics of one update, mainly for tests.
#[derive(Debug, Clone)]
pub struct MppiStepInfo {
    pub weights: Vec<f64>,
    pub min_cost: f64,
    pub mean_cost: f64,
    pub wall_time_ms: f64,
}

/// One path-integral update of the nominal control sequence.
///
/// Draws `samples` Gaussian perturbations, clips each to the control bounds,
/// scores the rollouts with [`total_cost`], and returns the weighted average
/// with weights `exp(-(cost - min_cost) / temperature)`, clipped again.
pub fn mppi_step(
    problem: &MpcProblem<'_>,
    nominal: &[Control],
    cfg: &MppiConfig,
    seed: u64,
) -> (Vec<Control>, MppiStepInfo) {
    let start_time = Instant::now();
    let mpc = problem.config;
    let m = nominal.len();
    assert_eq!(m, mpc.horizon, "nominal length must match the horizon");
    assert!(cfg.samples >= 1 && cfg.temperature > 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accel_noise = Normal::new(0.0, cfg.sigma_accel).expect("sigma_accel > 0");
    let omega_noise = Normal::new(0.0, cfg.sigma_omega).expect("sigma_omega > 0");

    let mut sampled: Vec<Vec<Control>> = Vec::with_capacity(cfg.samples);
    let mut costs = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let controls: Vec<Control> = nominal
            .iter()
            .map(|u| {
                Control::new(
                    u.accel + accel_noise.sample(&mut rng),
                    u.omega + omega_noise.sample(&mut rng),
                )
                .clamped(mpc.a_max, mpc.omega_max)
            })
            .collect();
        let traj = rollout(problem.initial_state, &controls, mpc.dt);
        let (cost, _) = total_cost(&traj, problem);
        sampled.push(controls);
        costs.push(cost);
    }

    let min_cost = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = costs
        .iter()
        .map(|&c| (-(c - min_cost) / cfg.temperature).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let mut updated = vec![Control::default(); m];
    for (w, controls) in weights.iter().zip(&sampled) {
        for (out, u) in updated.iter_mut().zip(controls) {
            out.accel += w * u.accel;
            out.omega += w * u.omega;
        }
    }
    for u in &mut updated {
        *u = u.clamped(mpc.a_max, mpc.omega_max);
    }

    let info = MppiStepInfo {
        weights,
        min_cost,
        mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
        wall_time_ms: start_time.elapsed().as_secs_f64() * 1e3,
    };
    (updated, info)
}

/// Receding-horizon loop with [`mppi_step`] as the inner solver; mirrors
/// [`crate::mpc::receding_horizon_run`]. Sampling seeds derive from
/// `(run_seed, step, iteration)` so reruns are bitwise identical.
pub fn mppi_receding_run(
    world: &mut WorldModel,
    start: RobotState,
    global_path: &[(f64, f64)],
    mpc_config: &MpcConfig,
    cfg: &MppiConfig,
    source: &mut dyn HorizonOracleSource,
    run_seed: u64,
) -> Result<ExecutedRun, MpcError> {
    if global_path.is_empty() {
        return Err(MpcError::EmptyPath);
    }
    let goal = *global_path.last().unwrap();
    let mut states = vec![start];
    let mut controls: Vec<Control> = Vec::new();
    let mut scenes = vec![world.scene_at(0)];
    let mut reports: Vec<SolveReport> = Vec::new();
    let mut nominal = vec![Control::default(); mpc_config.horizon];
    let mut goal_reached = false;
    let mut prev_projection = crate::mpc::project_onto_path(global_path, start.x, start.y);
    let mut lead = 0.0f64;
    let mut stall_steps = 0usize;

    for step_idx in 0..mpc_config.step_budget {
        let current = *states.last().unwrap();
        if current.distance_to(goal.0, goal.1) <= mpc_config.goal_tolerance {
            goal_reached = true;
            break;
        }
        let oracle = source.oracle_at(world, step_idx, mpc_config.horizon)?;
        let projection = crate::mpc::project_onto_path(global_path, current.x, current.y);
        let advanced = projection - prev_projection;
        prev_projection = projection;
        // Grow the lead only during a sustained stall (not the initial
        // acceleration transient) and drain it as soon as progress resumes.
        if advanced < 0.3 * mpc_config.v_ref * mpc_config.dt {
            stall_steps += 1;
        } else {
            stall_steps = 0;
        }
        if stall_steps >= 3 {
            lead = (lead + mpc_config.v_ref * mpc_config.dt).min(mpc_config.reference_lead_cap);
        } else {
            lead = (lead - advanced.max(0.0)).max(0.0);
        }
        let reference = crate::mpc::reference_from_arc(
            global_path,
            projection + lead,
            current.theta,
            mpc_config.horizon,
            mpc_config.dt,
            mpc_config.v_ref,
        )?;
        let problem = MpcProblem::new(current, reference, oracle.as_ref(), mpc_config)?;

        let mut wall_ms = 0.0;
        for iter in 0..cfg.iterations.max(1) {
            let seed = derive_seed(run_seed, step_idx as u64, iter as u64);
            let (updated, info) = mppi_step(&problem, &nominal, cfg, seed);
            nominal = updated;
            wall_ms += info.wall_time_ms;
        }
        let traj = rollout(current, &nominal, mpc_config.dt);
        let (cost, breakdown) = total_cost(&traj, &problem);
        reports.push(SolveReport {
            trajectory: traj,
            iterations: cfg.iterations.max(1),
            final_cost: cost,
            breakdown,
            converged: true,
            status: SolveStatus::Sampled,
            cost_trace: vec![cost],
            wall_time_ms: wall_ms,
        });

        let u = nominal[0];
        let next = step(current, u, mpc_config.dt);
        controls.push(u);
        states.push(next);
        scenes.push(world.scene_at(step_idx + 1));

        // Time-shift the nominal for the next replan.
        nominal.rotate_left(1);
        let last = *nominal.last().unwrap();
        *nominal.last_mut().unwrap() = last;
    }

    if !goal_reached {
        let current = *states.last().unwrap();
        goal_reached = current.distance_to(goal.0, goal.1) <= mpc_config.goal_tolerance;
    }

    Ok(ExecutedRun {
        states,
        controls,
        scenes,
        reports,
        goal_reached,
        dt: mpc_config.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Footprint, GridGeometry, OccupancyGrid, PotentialWeights};
    use crate::mpc::{collision_post_check_frames, AnalyticStackSource};
    use crate::world::{build_potential_stack, DynamicObstacle, PotentialStack};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn stack_with_block() -> PotentialStack {
        let geom = GridGeometry::new(40, 40, 0.1, 0.0, 0.0).unwrap();
        let mut grid = OccupancyGrid::empty(geom);
        grid.fill_rect(21, 20, 23, 22, true);
        let fp = Footprint::rectangle(0.3, 0.2, "t").unwrap();
        build_potential_stack(
            &grid,
            &[],
            &fp,
            PotentialWeights::default(),
            10,
            1.0 / 3.0,
            8,
        )
        .unwrap()
    }

    fn straight_problem<'a>(
        stack: &'a PotentialStack,
        cfg: &'a MpcConfig,
        s0: RobotState,
    ) -> MpcProblem<'a> {
        let reference =
            build_reference(&[(s0.x, s0.y), (s0.x + 2.0, s0.y)], &s0, cfg.horizon, cfg.dt, 0.3)
                .unwrap();
        MpcProblem::new(s0, reference, stack, cfg).unwrap()
    }

    #[test]
    fn single_sample_returns_that_sample() {
        let stack = stack_with_block();
        let mpc = MpcConfig::default();
        let s0 = RobotState::at_rest(1.0, 2.0, 0.0);
        let problem = straight_problem(&stack, &mpc, s0);
        let cfg = MppiConfig {
            samples: 1,
            ..MppiConfig::default()
        };
        let nominal = vec![Control::default(); 10];
        let (updated, info) = mppi_step(&problem, &nominal, &cfg, 7);
        assert_eq!(info.weights, vec![1.0]);
        // Reproduce the single perturbed sample with the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let an = Normal::new(0.0, cfg.sigma_accel).unwrap();
        let on = Normal::new(0.0, cfg.sigma_omega).unwrap();
        for u in &updated {
            let expect = Control::new(an.sample(&mut rng), on.sample(&mut rng))
                .clamped(mpc.a_max, mpc.omega_max);
            assert_relative_eq!(u.accel, expect.accel, epsilon = 1e-12);
            assert_relative_eq!(u.omega, expect.omega, epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_temperature_approaches_uniform_average() {
        let stack = stack_with_block();
        let mpc = MpcConfig::default();
        let s0 = RobotState::at_rest(1.0, 2.0, 0.0);
        let problem = straight_problem(&stack, &mpc, s0);
        let cfg = MppiConfig {
            samples: 64,
            temperature: 1e9,
            ..MppiConfig::default()
        };
        let nominal = vec![Control::default(); 10];
        let (updated, info) = mppi_step(&problem, &nominal, &cfg, 11);

        // Uniform weights within rounding.
        for w in &info.weights {
            assert_relative_eq!(*w, 1.0 / 64.0, epsilon = 1e-7);
        }
        // Replay the sampled controls and average them uniformly.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let an = Normal::new(0.0, cfg.sigma_accel).unwrap();
        let on = Normal::new(0.0, cfg.sigma_omega).unwrap();
        let mut mean = vec![Control::default(); 10];
        for _ in 0..64 {
            for slot in mean.iter_mut() {
                let u = Control::new(an.sample(&mut rng), on.sample(&mut rng))
                    .clamped(mpc.a_max, mpc.omega_max);
                slot.accel += u.accel / 64.0;
                slot.omega += u.omega / 64.0;
            }
        }
        for (u, e) in updated.iter().zip(&mean) {
            assert!((u.accel - e.accel).abs() < 1e-6);
            assert!((u.omega - e.omega).abs() < 1e-6);
        }
    }

    #[test]
    fn weights_are_normalized() {
        let stack = stack_with_block();
        let mpc = MpcConfig::default();
        let s0 = RobotState::at_rest(1.0, 2.0, 0.0);
        let problem = straight_problem(&stack, &mpc, s0);
        let cfg = MppiConfig {
            samples: 256,
            ..MppiConfig::default()
        };
        let nominal = vec![Control::default(); 10];
        let (_, info) = mppi_step(&problem, &nominal, &cfg, 3);
        let sum: f64 = info.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "weight sum {sum}");
    }

    #[test]
    fn update_beats_nominal_on_blocking_scenario() {
        let stack = stack_with_block();
        let mpc = MpcConfig::default();
        // Head straight toward the block.
        let s0 = RobotState::at_rest(1.0, 2.15, 0.0);
        let problem = straight_problem(&stack, &mpc, s0);
        let cfg = MppiConfig {
            samples: 256,
            ..MppiConfig::default()
        };
        let nominal = vec![Control::default(); 10];
        let (updated, _) = mppi_step(&problem, &nominal, &cfg, 21);
        let nominal_cost = total_cost(&rollout(s0, &nominal, mpc.dt), &problem).0;
        let updated_cost = total_cost(&rollout(s0, &updated, mpc.dt), &problem).0;
        assert!(updated_cost < nominal_cost, "{updated_cost} vs {nominal_cost}");
    }

    #[test]
    fn expected_cost_improvement_across_seeds() {
        let stack = stack_with_block();
        let mpc = MpcConfig::default();
        let s0 = RobotState::at_rest(1.0, 2.15, 0.0);
        let problem = straight_problem(&stack, &mpc, s0);
        let cfg = MppiConfig {
            samples: 64,
            ..MppiConfig::default()
        };
        let nominal = vec![Control::default(); 10];
        let mut updated_sum = 0.0;
        let mut sampled_sum = 0.0;
        for seed in 0..50 {
            let (updated, info) = mppi_step(&problem, &nominal, &cfg, seed);
            updated_sum += total_cost(&rollout(s0, &updated, mpc.dt), &problem).0;
            sampled_sum += info.mean_cost;
        }
        assert!(updated_sum / 50.0 < sampled_sum / 50.0);
    }

    #[test]
    fn receding_run_reaches_goal_and_repeats_bitwise() {
        let geom = GridGeometry::new(50, 50, 0.1, 0.0, 0.0).unwrap();
        let grid = OccupancyGrid::empty(geom);
        let fp = Footprint::rectangle(0.3, 0.2, "t").unwrap();
        let mpc = MpcConfig::default();
        let cfg = MppiConfig {
            samples: 128,
            ..MppiConfig::default()
        };
        let run_once = || {
            let mut world = WorldModel::new(grid.clone(), vec![], 1.0 / 3.0);
            let mut source =
                AnalyticStackSource::new(fp.clone(), PotentialWeights::default(), 8);
            mppi_receding_run(
                &mut world,
                RobotState::at_rest(1.0, 2.5, 0.0),
                &[(1.0, 2.5), (3.0, 2.5)],
                &mpc,
                &cfg,
                &mut source,
                99,
            )
            .unwrap()
        };
        let a = run_once();
        assert!(a.goal_reached);
        let b = run_once();
        assert_eq!(a.states, b.states);
        assert_eq!(a.controls, b.controls);
    }

    #[test]
    fn crossing_scenario_mostly_collision_free() {
        // MPPI is stochastic; expect at least 80% of seeded runs to pass the
        // post-check on a perpendicular-crossing scenario.
        let geom = GridGeometry::new(50, 50, 0.1, 0.0, 0.0).unwrap();
        let grid = OccupancyGrid::empty(geom);
        let fp = Footprint::rectangle(0.4, 0.3, "t").unwrap();
        let mpc = MpcConfig::default();
        let cfg = MppiConfig {
            samples: 256,
            ..MppiConfig::default()
        };
        let mut passes = 0;
        for seed in 0..20 {
            let ob = DynamicObstacle::agent(2.5, 4.0, -FRAC_PI_2);
            let mut world = WorldModel::new(grid.clone(), vec![ob], 1.0 / 3.0);
            let mut source =
                AnalyticStackSource::new(fp.clone(), PotentialWeights::default(), 8);
            let run = mppi_receding_run(
                &mut world,
                RobotState::at_rest(1.0, 2.5, 0.0),
                &[(1.0, 2.5), (4.0, 2.5)],
                &mpc,
                &cfg,
                &mut source,
                seed,
            )
            .unwrap();
            let check = collision_post_check_frames(&run.states, &run.scenes, &fp);
            if run.goal_reached && check.passed {
                passes += 1;
            }
        }
        assert!(passes >= 16, "only {passes}/20 runs were safe");
    }
}
