//! Dynamic obstacles, constant-velocity propagation, rasterization onto
//! occupancy grids, and horizon-indexed potential stacks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{
    compute_sdf, pointwise_costmap, Footprint, GridError, OccupancyGrid, PotentialGrid,
    PotentialWeights, SdfGrid,
};

/// Oriented rectangular obstacle moving with constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    /// Rectangle center in world coordinates (m).
    pub x: f64,
    pub y: f64,
    /// Motion direction and rectangle orientation (rad).
    pub heading: f64,
    /// Speed along the heading (m/s), >= 0.
    pub speed: f64,
    /// Half length along the heading (m).
    pub half_length: f64,
    /// Half width across the heading (m).
    pub half_width: f64,
}

impl DynamicObstacle {
    /// The 0.7 x 0.5 m walking-agent rectangle at 0.3 m/s.
    pub fn agent(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading,
            speed: 0.3,
            half_length: 0.35,
            half_width: 0.25,
        }
    }

    /// Whether a world point lies inside the rectangle (closed boundary).
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.heading.sin_cos();
        let dx = px - self.x;
        let dy = py - self.y;
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        along.abs() <= self.half_length && across.abs() <= self.half_width
    }
}

/// Obstacle advanced `k` steps of `dt` seconds along its heading.
pub fn propagate_obstacle(ob: &DynamicObstacle, k: usize, dt: f64) -> DynamicObstacle {
    let dist = k as f64 * dt * ob.speed;
    let (s, c) = ob.heading.sin_cos();
    DynamicObstacle {
        x: ob.x + dist * c,
        y: ob.y + dist * s,
        ..*ob
    }
}

/// Copy of the grid with the obstacle's rectangle stamped as occupied.
///
/// A cell is stamped iff its center falls inside the rectangle; obstacles may
/// be partially or fully off-grid.
pub fn stamp_obstacle(grid: &OccupancyGrid, ob: &DynamicObstacle) -> OccupancyGrid {
    let mut out = grid.clone();
    stamp_obstacle_in_place(&mut out, ob);
    out
}

pub(crate) fn stamp_obstacle_in_place(grid: &mut OccupancyGrid, ob: &DynamicObstacle) {
    let g = grid.geometry;
    let radius = (ob.half_length * ob.half_length + ob.half_width * ob.half_width).sqrt();
    let col_lo = (((ob.x - radius) - g.origin_x) / g.resolution).ceil() as i64;
    let col_hi = (((ob.x + radius) - g.origin_x) / g.resolution).floor() as i64;
    let row_lo = (((ob.y - radius) - g.origin_y) / g.resolution).ceil() as i64;
    let row_hi = (((ob.y + radius) - g.origin_y) / g.resolution).floor() as i64;
    for row in row_lo.max(0)..=row_hi.min(g.height as i64 - 1) {
        for col in col_lo.max(0)..=col_hi.min(g.width as i64 - 1) {
            let (cx, cy) = g.cell_center(row, col);
            if ob.contains(cx, cy) {
                grid.set(row as usize, col as usize, true);
            }
        }
    }
}

/// One time slice of the world: stamped occupancy and its SDF.
#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub occupancy: OccupancyGrid,
    pub sdf: SdfGrid,
}

impl SceneFrame {
    /// Stamp every obstacle propagated to `step` over the static grid.
    pub fn build(
        static_grid: &OccupancyGrid,
        obstacles: &[DynamicObstacle],
        step: usize,
        dt: f64,
    ) -> Self {
        let mut occupancy = static_grid.clone();
        for ob in obstacles {
            let moved = propagate_obstacle(ob, step, dt);
            stamp_obstacle_in_place(&mut occupancy, &moved);
        }
        let sdf = compute_sdf(&occupancy);
        Self { occupancy, sdf }
    }
}

/// A scene frame together with its footprint-pooled potential grid.
#[derive(Debug, Clone)]
pub struct PotentialFrame {
    pub scene: Arc<SceneFrame>,
    pub potential: PotentialGrid,
}

impl PotentialFrame {
    pub fn from_scene(
        scene: Arc<SceneFrame>,
        footprint: &Footprint,
        weights: PotentialWeights,
        heading_bins: usize,
    ) -> Result<Self, GridError> {
        let costmap = pointwise_costmap(&scene.sdf, weights);
        let potential = PotentialGrid::from_costmap(&costmap, footprint, heading_bins)?;
        Ok(Self { scene, potential })
    }
}

/// Horizon-indexed sequence of potential frames, one per MPC timestep.
///
/// Frame `k` embeds every obstacle at its pose propagated `k * dt` forward.
#[derive(Debug, Clone)]
pub struct PotentialStack {
    pub dt: f64,
    pub frames: Vec<Arc<PotentialFrame>>,
}

impl PotentialStack {
    /// Number of prediction steps (frames - 1).
    pub fn horizon(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn frame(&self, k: usize) -> &PotentialFrame {
        &self.frames[k]
    }
}

/// Frames 0..=horizon of the scene, pooled with the footprint.
pub fn build_potential_stack(
    static_grid: &OccupancyGrid,
    obstacles: &[DynamicObstacle],
    footprint: &Footprint,
    weights: PotentialWeights,
    horizon: usize,
    dt: f64,
    heading_bins: usize,
) -> Result<PotentialStack, GridError> {
    assert!(horizon >= 1, "potential stacks need at least one step");
    let frames = (0..=horizon)
        .map(|k| {
            let scene = Arc::new(SceneFrame::build(static_grid, obstacles, k, dt));
            PotentialFrame::from_scene(scene, footprint, weights, heading_bins).map(Arc::new)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PotentialStack { dt, frames })
}

/// Deterministic simulated world: a static grid plus constant-velocity
/// obstacles, with memoized per-step scene frames.
///
/// Scene `s` stamps every obstacle propagated `s` steps from its initial
/// pose, so frames are shared between the executed timeline and the
/// prediction stacks built along it.
#[derive(Debug)]
pub struct WorldModel {
    pub static_grid: OccupancyGrid,
    pub obstacles: Vec<DynamicObstacle>,
    pub dt: f64,
    scenes: Vec<Arc<SceneFrame>>,
}

impl WorldModel {
    pub fn new(static_grid: OccupancyGrid, obstacles: Vec<DynamicObstacle>, dt: f64) -> Self {
        Self {
            static_grid,
            obstacles,
            dt,
            scenes: Vec::new(),
        }
    }

    /// Scene at an absolute simulation step, built on demand.
    pub fn scene_at(&mut self, step: usize) -> Arc<SceneFrame> {
        while self.scenes.len() <= step {
            let s = self.scenes.len();
            let frame = SceneFrame::build(&self.static_grid, &self.obstacles, s, self.dt);
            self.scenes.push(Arc::new(frame));
        }
        Arc::clone(&self.scenes[step])
    }

    /// Obstacles as observed at a simulation step.
    pub fn obstacles_at(&self, step: usize) -> Vec<DynamicObstacle> {
        self.obstacles
            .iter()
            .map(|ob| propagate_obstacle(ob, step, self.dt))
            .collect()
    }
}
