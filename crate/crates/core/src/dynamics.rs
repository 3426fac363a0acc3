//! Differential-drive kinematics: state/control types, fixed-step RK4
//! integration, rollouts, and integrator Jacobians for the solver.
//!
//! The model is `dx/dt = v cos(theta)`, `dy/dt = v sin(theta)`,
//! `dtheta/dt = omega`, `dv/dt = a`. Velocity and control limits are
//! enforced by the solver, not here.

use nalgebra::{Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};

/// Robot state (x, y, theta, v). Headings are stored unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta, v: 0.0 }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.theta, self.v)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            x: v[0],
            y: v[1],
            theta: v[2],
            v: v[3],
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}

/// Control input: linear acceleration and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub omega: f64,
}

impl Control {
    pub fn new(accel: f64, omega: f64) -> Self {
        Self { accel, omega }
    }

    pub fn clamped(self, a_max: f64, omega_max: f64) -> Self {
        Self {
            accel: self.accel.clamp(-a_max, a_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

/// A discrete trajectory: H+1 states and the H controls linking them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<RobotState>,
    pub controls: Vec<Control>,
}

#[inline]
fn derivative(s: &Vector4<f64>, u: Control) -> Vector4<f64> {
    let (sin_t, cos_t) = s[2].sin_cos();
    Vector4::new(s[3] * cos_t, s[3] * sin_t, u.omega, u.accel)
}

/// One RK4 step of the kinematic model.
pub fn step(state: RobotState, u: Control, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let s = state.to_vector();
    let k1 = derivative(&s, u);
    let k2 = derivative(&(s + k1 * (dt / 2.0)), u);
    let k3 = derivative(&(s + k2 * (dt / 2.0)), u);
    let k4 = derivative(&(s + k3 * dt), u);
    RobotState::from_vector(&(s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

/// Sequential application of [`step`] over a control sequence.
pub fn rollout(s0: RobotState, controls: &[Control], dt: f64) -> Trajectory {
    assert!(!controls.is_empty(), "rollout needs at least one control");
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(s0);
    for &u in controls {
        let next = step(*states.last().unwrap(), u, dt);
        states.push(next);
    }
    Trajectory {
        dt,
        states,
        controls: controls.to_vec(),
    }
}

/// Jacobian of the continuous dynamics w.r.t. the state.
fn dynamics_state_jacobian(s: &Vector4<f64>) -> Matrix4<f64> {
    let (sin_t, cos_t) = s[2].sin_cos();
    let mut j = Matrix4::zeros();
    j[(0, 2)] = -s[3] * sin_t;
    j[(0, 3)] = cos_t;
    j[(1, 2)] = s[3] * cos_t;
    j[(1, 3)] = sin_t;
    j
}

/// Jacobian of the continuous dynamics w.r.t. the control (constant).
fn dynamics_control_jacobian() -> Matrix4x2<f64> {
    let mut j = Matrix4x2::zeros();
    j[(2, 1)] = 1.0; // dtheta/dt = omega
    j[(3, 0)] = 1.0; // dv/dt = a
    j
}

/// Exact Jacobians of the RK4 step map, by chain rule through the stages.
///
/// Returns (A, B) with `A = d step / d state` (4x4) and
/// `B = d step / d control` (4x2).
pub fn linearize(state: RobotState, u: Control, dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let s = state.to_vector();
    let fu = dynamics_control_jacobian();
    let identity = Matrix4::identity();

    let k1 = derivative(&s, u);
    let dk1_ds = dynamics_state_jacobian(&s);
    let dk1_du = fu;

    let s2 = s + k1 * (dt / 2.0);
    let f2 = dynamics_state_jacobian(&s2);
    let k2 = derivative(&s2, u);
    let dk2_ds = f2 * (identity + dk1_ds * (dt / 2.0));
    let dk2_du = f2 * dk1_du * (dt / 2.0) + fu;

    let s3 = s + k2 * (dt / 2.0);
    let f3 = dynamics_state_jacobian(&s3);
    let k3 = derivative(&s3, u);
    let dk3_ds = f3 * (identity + dk2_ds * (dt / 2.0));
    let dk3_du = f3 * dk2_du * (dt / 2.0) + fu;

    let s4 = s + k3 * dt;
    let f4 = dynamics_state_jacobian(&s4);
    let dk4_ds = f4 * (identity + dk3_ds * dt);
    let dk4_du = f4 * dk3_du * dt + fu;

    let a = identity + (dk1_ds + dk2_ds * 2.0 + dk3_ds * 2.0 + dk4_ds) * (dt / 6.0);
    let b = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * (dt / 6.0);
    (a, b)
}

/// High-accuracy reference integration over one interval of length `dt`,
/// used as the oracle for integrator-order tests.
pub fn fine_reference(state: RobotState, u: Control, dt: f64, substeps: usize) -> RobotState {
    let h = dt / substeps as f64;
    let mut s = state;
    for _ in 0..substeps {
        s = step(s, u, h);
    }
    s
}
