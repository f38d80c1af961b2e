//! Planar world: torso wall, table, a free box and two 2-link stiffness-controlled arms,
//! with smoothed compliant contact. Offers a quasi-dynamic step (planning) and a
//! dynamic step (policy rollouts).

pub mod contact;
mod dynamics;
pub mod geometry;
pub mod kinematics;
mod params;

use std::f64::consts::PI;

pub use contact::{smoothed_normal_force, smoothed_normal_force_derivative};
pub use dynamics::{dynamic_step, quasi_dynamic_step, quasi_dynamic_step_traced, step_control_period, QuasiStepReport};
pub use geometry::{signed_distances, Contact, ContactKind, ContactSet};
pub use kinematics::{end_effector_pose, inverse_kinematics};
pub use params::{DynamicParams, QuasiParams, WorldParams};

/// Number of generalized coordinates: four arm joints then box `(x, z, theta)`.
pub const NDOF: usize = 7;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Robot joint angles `q_a` (rad) and box pose `q_u = (x, z, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub q_a: [f64; 4],
    pub q_u: [f64; 3],
}

impl Configuration {
    pub fn new(q_a: [f64; 4], q_u: [f64; 3]) -> Self {
        Configuration { q_a, q_u: [q_u[0], q_u[1], wrap_angle(q_u[2])] }
    }

    pub fn to_vec(&self) -> [f64; NDOF] {
        let mut v = [0.0; NDOF];
        v[..4].copy_from_slice(&self.q_a);
        v[4..].copy_from_slice(&self.q_u);
        v
    }

    /// Builds a configuration from a generalized vector, wrapping the box angle.
    pub fn from_vec(v: &[f64; NDOF]) -> Self {
        Configuration::new([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]])
    }

    pub fn is_finite(&self) -> bool {
        self.q_a.iter().chain(&self.q_u).all(|x| x.is_finite())
    }
}

/// Configuration plus generalized velocities (rad/s for joints, m/s and rad/s for the box).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicState {
    pub q: Configuration,
    pub v: [f64; NDOF],
}

impl DynamicState {
    pub fn at_rest(q: Configuration) -> Self {
        DynamicState { q, v: [0.0; NDOF] }
    }

    pub fn box_velocity(&self) -> [f64; 3] {
        [self.v[4], self.v[5], self.v[6]]
    }
}
