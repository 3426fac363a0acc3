use dynfield_core::bench::*;
use dynfield_core::grid::*;
use dynfield_core::mpc::*;
use dynfield_core::dynamics::*;
use dynfield_core::planner::*;
use dynfield_core::world::*;

fn main() {
    let scenarios = default_suite().unwrap();
    let config = BenchConfig::default();
    for name in ["doorway-001", "doorway-005", "crossingroom-002", "headoncorridor-003"] {
        let sc = scenarios.iter().find(|s| s.spec.name == name).unwrap();
        let fp = sc.footprint().unwrap();
        let inflated = inflate(&sc.map, fp.width() / 2.0);
        let path = plan_path(&inflated, (sc.spec.start.0, sc.spec.start.1), (sc.spec.goal.0, sc.spec.goal.1)).unwrap();
        // Static worlds: obstacles removed entirely.
        let mut world = WorldModel::new(sc.map.clone(), vec![], config.mpc.dt);
        let mut source = AnalyticStackSource::new(fp.clone(), config.weights, config.heading_bins);
        let run = receding_horizon_run(&mut world, sc.start_state(), &path, &config.mpc, &mut source).unwrap();
        let last = run.states.last().unwrap();
        println!("{name} STATIC: reached={} steps={} final=({:.2},{:.2})", run.goal_reached, run.controls.len(), last.x, last.y);
    }
}
