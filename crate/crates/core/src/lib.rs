//! Local trajectory planning with dynamic potential fields.
//!
//! The library models the world as binary occupancy grids, derives exact
//! signed distance fields and footprint-pooled repulsive potentials from
//! them, and optimizes differential-drive trajectories against per-timestep
//! potential stacks with a damped Gauss-Newton MPC solver. An MPPI baseline,
//! a Theta* global planner, a dataset/training pipeline for small learned
//! potential surrogates, and a benchmark harness sit on top of the same
//! primitives.

pub mod bench;
pub mod dynamics;
pub mod grid;
pub mod mpc;
pub mod mppi;
pub mod planner;
pub mod query;
pub mod render;
pub mod seeding;
pub mod surrogate;
pub mod world;

pub use grid::{
    CostGrid, Footprint, GridGeometry, OccupancyGrid, PotentialGrid, PotentialWeights, SdfGrid,
};
pub use world::{DynamicObstacle, PotentialStack, SceneFrame, WorldModel};
