//! Differentiable evaluation of the repulsive potential along the horizon:
//! bilinear interpolation over (x, y) crossed with linear interpolation over
//! the heading bins of the time-matched frame, with analytic gradients of
//! the interpolant for the solver.

use std::f64::consts::TAU;

use crate::grid::{Extent, PotentialGrid};
use crate::world::PotentialStack;

/// Interpolated potential value and its exact interpolant gradient
/// (d/dx, d/dy, d/dtheta) in potential-per-meter and potential-per-radian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSample {
    pub value: f64,
    pub grad: [f64; 3],
}

/// Field oracle interface consumed by the solvers. Implemented by the
/// analytic [`PotentialStack`] and by the learned surrogate adapters.
pub trait PotentialOracle {
    /// Largest step index the oracle can answer for.
    fn horizon(&self) -> usize;
    /// Interpolation domain; queries outside clamp to the boundary.
    fn extent(&self) -> Extent;
    fn sample(&self, step: usize, x: f64, y: f64, theta: f64) -> PotentialSample;
}

impl PotentialGrid {
    /// Sample the pooled potential at a continuous pose.
    ///
    /// Positions clamp to the rectangle spanned by the outermost cell
    /// centers, with zero positional gradient on the clamped axes; the
    /// heading wraps modulo 2*pi.
    pub fn sample(&self, x: f64, y: f64, theta: f64) -> PotentialSample {
        let g = &self.geometry;
        let res = g.resolution;
        let u = (x - g.origin_x) / res;
        let v = (y - g.origin_y) / res;

        let (u, u_clamped) = clamp_unit_range(u, g.width);
        let (v, v_clamped) = clamp_unit_range(v, g.height);

        let c0 = (u.floor() as usize).min(g.width.saturating_sub(2));
        let r0 = (v.floor() as usize).min(g.height.saturating_sub(2));
        let fu = if g.width == 1 { 0.0 } else { u - c0 as f64 };
        let fv = if g.height == 1 { 0.0 } else { v - r0 as f64 };
        let c1 = (c0 + 1).min(g.width - 1);
        let r1 = (r0 + 1).min(g.height - 1);

        let bins = self.heading_bins;
        let (b0, b1, ft) = if bins == 1 {
            (0, 0, 0.0)
        } else {
            let mut t = theta.rem_euclid(TAU) * bins as f64 / TAU;
            if t >= bins as f64 {
                t -= bins as f64;
            }
            let b0 = t.floor() as usize % bins;
            (b0, (b0 + 1) % bins, t - t.floor())
        };

        let mut value = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        let mut bin_values = [0.0; 2];
        for (slot, &b) in [b0, b1].iter().enumerate() {
            let v00 = self.value(b, r0, c0);
            let v01 = self.value(b, r0, c1);
            let v10 = self.value(b, r1, c0);
            let v11 = self.value(b, r1, c1);
            let bilinear = v00 * (1.0 - fu) * (1.0 - fv)
                + v01 * fu * (1.0 - fv)
                + v10 * (1.0 - fu) * fv
                + v11 * fu * fv;
            let ddu = ((v01 - v00) * (1.0 - fv) + (v11 - v10) * fv) / res;
            let ddv = ((v10 - v00) * (1.0 - fu) + (v11 - v01) * fu) / res;
            bin_values[slot] = bilinear;
            let w = if slot == 0 { 1.0 - ft } else { ft };
            value += w * bilinear;
            dx += w * ddu;
            dy += w * ddv;
            if bins == 1 {
                break;
            }
        }
        let dtheta = if bins == 1 {
            0.0
        } else {
            (bin_values[1] - bin_values[0]) * bins as f64 / TAU
        };

        PotentialSample {
            value,
            grad: [
                if u_clamped { 0.0 } else { dx },
                if v_clamped { 0.0 } else { dy },
                dtheta,
            ],
        }
    }
}

fn clamp_unit_range(t: f64, cells: usize) -> (f64, bool) {
    let hi = (cells - 1) as f64;
    if t < 0.0 {
        (0.0, true)
    } else if t > hi {
        (hi, true)
    } else {
        (t, false)
    }
}

/// Potential of frame `step` of the stack at a continuous pose.
pub fn sample(stack: &PotentialStack, step: usize, x: f64, y: f64, theta: f64) -> PotentialSample {
    stack.frame(step).potential.sample(x, y, theta)
}

/// One sample per step: `states[i]` is evaluated against frame `i`.
pub fn sample_path(stack: &PotentialStack, states: &[(f64, f64, f64)]) -> Vec<PotentialSample> {
    assert!(
        states.len() <= stack.frames.len(),
        "state sequence longer than the stack"
    );
    states
        .iter()
        .enumerate()
        .map(|(i, &(x, y, theta))| sample(stack, i, x, y, theta))
        .collect()
}

impl PotentialOracle for PotentialStack {
    fn horizon(&self) -> usize {
        self.horizon()
    }

    fn extent(&self) -> Extent {
        self.frames[0].potential.geometry.center_extent()
    }

    fn sample(&self, step: usize, x: f64, y: f64, theta: f64) -> PotentialSample {
        sample(self, step, x, y, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        Footprint, GridGeometry, OccupancyGrid, PotentialWeights,
    };
    use crate::world::{build_potential_stack, DynamicObstacle};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use std::f64::consts::PI;

    fn random_stack(seed: u64, horizon: usize) -> PotentialStack {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = GridGeometry::new(20, 16, 0.1, -0.3, 0.2).unwrap();
        let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.15) as u8).collect();
        let grid = OccupancyGrid::new(g, cells).unwrap();
        let ob = DynamicObstacle::agent(0.4, 0.8, rng.gen::<f64>() * TAU);
        let fp = Footprint::rectangle(0.25, 0.18, "t").unwrap();
        build_potential_stack(
            &grid,
            &[ob],
            &fp,
            PotentialWeights::default(),
            horizon,
            1.0 / 3.0,
            8,
        )
        .unwrap()
    }

    #[test]
    fn node_queries_reproduce_stored_values() {
        let stack = random_stack(5, 2);
        let pot = &stack.frame(1).potential;
        let g = pot.geometry;
        for (r, c, b) in [(0usize, 0usize, 0usize), (5, 7, 3), (15, 19, 7)] {
            let (x, y) = g.cell_center(r as i64, c as i64);
            let theta = TAU * b as f64 / 8.0;
            let s = sample(&stack, 1, x, y, theta);
            assert_relative_eq!(s.value, pot.value(b, r, c), epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_field_has_zero_gradient() {
        let grid = OccupancyGrid::empty(GridGeometry::new(10, 10, 0.1, 0.0, 0.0).unwrap());
        let fp = Footprint::rectangle(0.01, 0.01, "dot").unwrap();
        let stack = build_potential_stack(
            &grid,
            &[],
            &fp,
            PotentialWeights::default(),
            1,
            0.5,
            4,
        )
        .unwrap();
        let s = sample(&stack, 0, 0.43, 0.31, 1.234);
        assert_eq!(s.grad, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let stack = random_stack(17, 3);
        let ext = PotentialOracle::extent(&stack);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 1000 {
            let x = rng.gen_range(ext.x_min + 2.0 * h..ext.x_max - 2.0 * h);
            let y = rng.gen_range(ext.y_min + 2.0 * h..ext.y_max - 2.0 * h);
            let theta = rng.gen_range(0.0..TAU);
            let k = rng.gen_range(0..=3);
            // Skip queries within a few FD widths of an interpolation knot,
            // where the interpolant gradient legitimately jumps.
            let g = stack.frame(0).potential.geometry;
            let u = (x - g.origin_x) / g.resolution;
            let v = (y - g.origin_y) / g.resolution;
            let t = theta.rem_euclid(TAU) * 8.0 / TAU;
            let near_knot = |w: f64| (w - w.round()).abs() < 5.0 * h;
            if near_knot(u) || near_knot(v) || near_knot(t) {
                continue;
            }
            checked += 1;

            let s = sample(&stack, k, x, y, theta);
            let fd = [
                (sample(&stack, k, x + h, y, theta).value
                    - sample(&stack, k, x - h, y, theta).value)
                    / (2.0 * h),
                (sample(&stack, k, x, y + h, theta).value
                    - sample(&stack, k, x, y - h, theta).value)
                    / (2.0 * h),
                (sample(&stack, k, x, y, theta + h).value
                    - sample(&stack, k, x, y, theta - h).value)
                    / (2.0 * h),
            ];
            for i in 0..3 {
                let scale = s.grad[i].abs().max(1e-3);
                assert!(
                    (s.grad[i] - fd[i]).abs() / scale < 1e-4,
                    "grad[{i}] = {}, fd = {}, at ({x}, {y}, {theta}, k={k})",
                    s.grad[i],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn theta_wraps_periodically() {
        let stack = random_stack(23, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let ext = PotentialOracle::extent(&stack);
        for _ in 0..200 {
            let x = rng.gen_range(ext.x_min..ext.x_max);
            let y = rng.gen_range(ext.y_min..ext.y_max);
            let theta = rng.gen_range(-10.0..10.0);
            let a = sample(&stack, 0, x, y, theta);
            let b = sample(&stack, 0, x, y, theta + TAU);
            // theta + 2*pi rounds in f64, so equality holds to rounding of
            // the reduced angle rather than bitwise.
            assert_relative_eq!(a.value, b.value, epsilon = 1e-9);
            assert_relative_eq!(a.grad[2], b.grad[2], epsilon = 1e-6);
        }
    }

    #[test]
    fn frames_are_isolated() {
        let stack = random_stack(31, 4);
        let base = sample(&stack, 2, 0.5, 0.6, 0.7);
        // Rebuild a stack sharing frame 2 but with a different frame 3.
        let mut frames = stack.frames.clone();
        frames[3] = stack.frames[0].clone();
        let altered = PotentialStack { dt: stack.dt, frames };
        assert_eq!(sample(&altered, 2, 0.5, 0.6, 0.7), base);
    }

    #[test]
    fn out_of_bounds_clamps_with_zero_outward_gradient() {
        let stack = random_stack(41, 1);
        let ext = PotentialOracle::extent(&stack);
        let inside = sample(&stack, 0, ext.x_min, 1.0, 0.3);
        let outside = sample(&stack, 0, ext.x_min - 0.5, 1.0, 0.3);
        assert_eq!(outside.value, inside.value);
        assert_eq!(outside.grad[0], 0.0);
    }

    #[test]
    fn far_from_obstacles_is_low_potential() {
        // J < 0.1*w1*pi requires SDF > ~1.62 m at w2 = 5.
        let mut grid = OccupancyGrid::empty(GridGeometry::new(50, 50, 0.1, 0.0, 0.0).unwrap());
        grid.set(0, 0, true);
        let fp = Footprint::rectangle(0.1, 0.1, "t").unwrap();
        let w = PotentialWeights::default();
        let stack = build_potential_stack(&grid, &[], &fp, w, 3, 1.0 / 3.0, 4).unwrap();
        let states: Vec<(f64, f64, f64)> = (0..=3).map(|i| (4.0, 4.0 - 0.05 * i as f64, 0.2)).collect();
        for s in sample_path(&stack, &states) {
            assert!(s.value < 0.1 * w.max_potential(), "value {}", s.value);
        }
    }

    #[test]
    fn crossing_a_moving_obstacle_peaks_at_the_matching_step() {
        let grid = OccupancyGrid::empty(GridGeometry::new(50, 50, 0.1, 0.0, 0.0).unwrap());
        // Agent walks +x along y = 2.0 starting at x = 1.0; 0.1 m per step.
        let ob = DynamicObstacle::agent(1.0, 2.0, 0.0);
        let fp = Footprint::rectangle(0.2, 0.2, "t").unwrap();
        let w = PotentialWeights::default();
        let stack = build_potential_stack(&grid, &[ob], &fp, w, 10, 1.0 / 3.0, 4).unwrap();
        // Robot path crosses (1.5, 2.0) exactly at step 5, when the agent
        // center reaches x = 1.5.
        let states: Vec<(f64, f64, f64)> = (0..=10)
            .map(|i| (1.5, 2.0 + 0.25 * (5.0 - i as f64), PI / 2.0))
            .collect();
        let samples = sample_path(&stack, &states);
        assert!(samples[5].value > 0.9 * w.max_potential(), "peak {}", samples[5].value);
        let peak_idx = samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .unwrap()
            .0;
        assert_eq!(peak_idx, 5);
    }

    #[test]
    fn single_frame_path_is_single_sample() {
        let stack = random_stack(3, 1);
        let single = PotentialStack {
            dt: stack.dt,
            frames: vec![stack.frames[0].clone()],
        };
        let states = [(0.4, 0.5, 0.6)];
        let path = sample_path(&single, &states);
        assert_eq!(path.len(), 1);
        assert_eq!(path[0], sample(&single, 0, 0.4, 0.5, 0.6));
    }
}
