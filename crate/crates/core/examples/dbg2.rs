use dynfield_core::bench::*;
use dynfield_core::mpc::collision_post_check_frames;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let scenarios = default_suite().unwrap();
    let config = BenchConfig::default();
    let (mut safe, mut reached) = (0, 0);
    for sc in &scenarios {
        match run_scenario(sc, &Planner::MpcAnalytic, &config) {
            Ok((run, fp)) => {
                let check = collision_post_check_frames(&run.states, &run.scenes, &fp);
                if check.min_sdf > 0.0 { safe += 1; }
                if run.goal_reached { reached += 1; }
                println!("{:26} reached={} steps={:3} min_sdf={:+.3}", sc.spec.name, run.goal_reached as u8, run.controls.len(), check.min_sdf);
            }
            Err(e) => println!("{:26} ERROR {e}", sc.spec.name),
        }
    }
    println!("safe {safe}/20 reached {reached}/20 total {:.0}s", t0.elapsed().as_secs_f64());
}
