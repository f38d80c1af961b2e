use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical description of the planar scene: torso wall at `x = 0`, table at `z = 0`,
/// a free box and two 2-link position-controlled arms mounted on the torso.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldParams {
    /// Nominal gravity magnitude (m/s^2), acting along -z on the box only.
    pub gravity: f64,
    /// Added to the gravity magnitude (m/s^2).
    #[serde(default)]
    pub gravity_disturbance: f64,
    /// Box half-width along its local x and half-height along local z (m).
    pub box_half_extents: [f64; 2],
    pub box_mass: f64,
    /// Coulomb coefficient shared by every contact.
    pub friction: f64,
    pub fingertip_radius: f64,
    pub link_lengths: [f64; 2],
    /// Shoulder positions of arm 0 (upper) and arm 1 (lower).
    pub shoulders: [[f64; 2]; 2],
    /// Joint stiffness of the position controller (N m / rad).
    pub joint_stiffness: f64,
    /// Joint damping of the position controller in dynamic mode (N m s / rad).
    pub joint_damping: f64,
    /// Reflected joint inertia used in dynamic mode (kg m^2).
    pub joint_inertia: f64,
    /// Commands are clamped to `[-joint_limit, joint_limit]` (rad).
    pub joint_limit: f64,
    /// Penalty stiffness of the smoothed normal force (N/m).
    pub contact_stiffness: f64,
    /// Softplus smoothing length used by the planner's quasi-dynamic model (m).
    pub smoothing_planner: f64,
    /// Softplus smoothing length used by the dynamic simulator (m).
    pub smoothing_sim: f64,
    /// Normal damping in dynamic mode (N s / m), gated by the contact activation.
    pub contact_damping: f64,
    /// Velocity scale of the tanh friction regularization (m/s).
    pub friction_velocity: f64,
    pub quasi: QuasiParams,
    pub dynamic: DynamicParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiParams {
    /// Planner time step (s).
    pub step: f64,
    pub arm_damping: f64,
    pub box_damping_linear: f64,
    pub box_damping_angular: f64,
    pub max_newton_iterations: usize,
    /// Newton stops once the residual infinity norm is below this value.
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicParams {
    /// Simulation step (s).
    pub step: f64,
    /// Largest internal integration substep (s).
    pub max_substep: f64,
    /// Simulation steps per control (policy) period.
    pub control_substeps: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            gravity: 9.81,
            gravity_disturbance: 0.0,
            box_half_extents: [0.205, 0.13],
            box_mass: 0.45,
            friction: 1.0,
            fingertip_radius: 0.02,
            link_lengths: [0.30, 0.30],
            shoulders: [[0.0, 0.55], [0.0, 0.35]],
            joint_stiffness: 50.0,
            joint_damping: 2.0,
            joint_inertia: 0.02,
            joint_limit: std::f64::consts::PI,
            contact_stiffness: 1.0e4,
            smoothing_planner: 5.0e-3,
            smoothing_sim: 1.0e-3,
            contact_damping: 60.0,
            friction_velocity: 1.0e-3,
            quasi: QuasiParams::default(),
            dynamic: DynamicParams::default(),
        }
    }
}

impl Default for QuasiParams {
    fn default() -> Self {
        QuasiParams {
            step: 1.0 / 15.0,
            arm_damping: 0.5,
            box_damping_linear: 5.0,
            box_damping_angular: 0.2,
            max_newton_iterations: 60,
            residual_tolerance: 1e-9,
        }
    }
}

impl Default for DynamicParams {
    fn default() -> Self {
        DynamicParams { step: 1.0 / 60.0, max_substep: 1.0 / 960.0, control_substeps: 4 }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("box_half_extents[0]", self.box_half_extents[0]),
            ("box_half_extents[1]", self.box_half_extents[1]),
            ("box_mass", self.box_mass),
            ("fingertip_radius", self.fingertip_radius),
            ("link_lengths[0]", self.link_lengths[0]),
            ("link_lengths[1]", self.link_lengths[1]),
            ("joint_stiffness", self.joint_stiffness),
            ("joint_damping", self.joint_damping),
            ("joint_inertia", self.joint_inertia),
            ("joint_limit", self.joint_limit),
            ("contact_stiffness", self.contact_stiffness),
            ("smoothing_planner", self.smoothing_planner),
            ("smoothing_sim", self.smoothing_sim),
            ("contact_damping", self.contact_damping),
            ("friction_velocity", self.friction_velocity),
            ("quasi.step", self.quasi.step),
            ("quasi.arm_damping", self.quasi.arm_damping),
            ("quasi.box_damping_linear", self.quasi.box_damping_linear),
            ("quasi.box_damping_angular", self.quasi.box_damping_angular),
            ("quasi.residual_tolerance", self.quasi.residual_tolerance),
            ("dynamic.step", self.dynamic.step),
            ("dynamic.max_substep", self.dynamic.max_substep),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("scene parameter `{name}` must be > 0, got {v}")));
            }
        }
        if !(self.friction > 0.0 && self.friction <= 2.0) {
            return Err(Error::Config(format!("friction must lie in (0, 2], got {}", self.friction)));
        }
        if self.gravity_disturbance < 0.0 || !self.gravity_disturbance.is_finite() {
            return Err(Error::Config("gravity_disturbance must be finite and >= 0".into()));
        }
        if self.dynamic.control_substeps == 0 || self.quasi.max_newton_iterations == 0 {
            return Err(Error::Config("substep and iteration counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_gravity(&self) -> f64 {
        self.gravity + self.gravity_disturbance
    }

    /// Rotational inertia of the box about its center (kg m^2).
    pub fn box_inertia(&self) -> f64 {
        let (w, h) = (2.0 * self.box_half_extents[0], 2.0 * self.box_half_extents[1]);
        self.box_mass * (w * w + h * h) / 12.0
    }

    /// Control period (s).
    pub fn control_period(&self) -> f64 {
        self.dynamic.step * self.dynamic.control_substeps as f64
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: WorldParams = toml::from_str(s).map_err(|e| Error::Config(format!("scene: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene parameters serialize")
    }
}
