//! The pivot-and-lift environment: task reward, terminations, domain randomization and
//! vectorized stepping. A point-reach task shares the same interface for debugging.

mod point_reach;
mod vec_env;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::geometry::box_corners;
use crate::sim::{end_effector_pose, inverse_kinematics, step_control_period, wrap_angle, Configuration, DynamicState, WorldParams};

pub use point_reach::{PointReachConfig, PointReachEnv};
pub use vec_env::VecEnv;

pub const OBS_DIM: usize = 11;
pub const ACT_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_trans: f64,
    pub w_rot: f64,
    pub w_action: f64,
    pub w_velocity: f64,
    pub w_termination: f64,
    /// Weight of the squared angular velocity inside the velocity penalty (m^2/rad^2).
    pub angular_velocity_weight: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { w_trans: 0.07, w_rot: 0.03, w_action: -0.002, w_velocity: -0.002, w_termination: -1.0, angular_velocity_weight: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationParams {
    pub table_center: [f64; 2],
    /// Largest allowed distance of the box center from `table_center` (m).
    pub max_distance: f64,
    /// Lowest allowed box corner height (m).
    pub min_corner_height: f64,
}

impl Default for TerminationParams {
    fn default() -> Self {
        TerminationParams { table_center: [0.35, 0.0], max_distance: 1.0, min_corner_height: -0.02 }
    }
}

/// Supports of the per-episode randomization. Ranges are `[low, high]`. The box rests
/// on the table, so only the x component of `nominal_position` is used directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomizationSpec {
    pub nominal_position: [f64; 2],
    pub position_radius: f64,
    pub rotation: [f64; 2],
    pub action_noise_std: f64,
    pub gravity_disturbance: [f64; 2],
    pub dimension_scale: [f64; 2],
    pub mass_scale: [f64; 2],
    pub friction_scale: [f64; 2],
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        RandomizationSpec {
            nominal_position: [0.35, 0.13],
            position_radius: 0.05,
            rotation: [-0.05, 0.05],
            action_noise_std: 0.02,
            gravity_disturbance: [0.0, 0.5],
            dimension_scale: [0.9, 1.1],
            mass_scale: [0.8, 1.2],
            friction_scale: [0.8, 1.0],
        }
    }
}

impl RandomizationSpec {
    /// Every support collapsed onto its nominal value.
    pub fn none() -> Self {
        RandomizationSpec {
            position_radius: 0.0,
            rotation: [0.0, 0.0],
            action_noise_std: 0.0,
            gravity_disturbance: [0.0, 0.0],
            dimension_scale: [1.0, 1.0],
            mass_scale: [1.0, 1.0],
            friction_scale: [1.0, 1.0],
            ..RandomizationSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Goal box pose (x, z, theta).
    pub goal: [f64; 3],
    pub weights: RewardWeights,
    pub termination: TerminationParams,
    pub randomization: RandomizationSpec,
    pub episode_length: usize,
    /// Joint-command change per unit of normalized action (rad).
    pub action_scale: f64,
    /// Fingertip positions of the home posture, arm 0 then arm 1 (m).
    pub home_fingertips: [[f64; 2]; 2],
    pub success_trans: f64,
    pub success_rot: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            goal: [0.15, 0.40, -FRAC_PI_2],
            weights: RewardWeights::default(),
            termination: TerminationParams::default(),
            randomization: RandomizationSpec::default(),
            episode_length: 300,
            action_scale: 0.05,
            home_fingertips: [[0.10, 0.45], [0.04, 0.14]],
            success_trans: 0.05,
            success_rot: 0.2,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.randomization;
        let ranges = [
            ("rotation", r.rotation),
            ("gravity_disturbance", r.gravity_disturbance),
            ("dimension_scale", r.dimension_scale),
            ("mass_scale", r.mass_scale),
            ("friction_scale", r.friction_scale),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("randomization range `{name}` must satisfy low <= high")));
            }
        }
        if r.dimension_scale[0] <= 0.0 || r.mass_scale[0] <= 0.0 || r.friction_scale[0] <= 0.0 || r.gravity_disturbance[0] < 0.0 {
            return Err(Error::Config("randomization scales must be positive".into()));
        }
        if r.position_radius < 0.0 || r.action_noise_std < 0.0 {
            return Err(Error::Config("position radius and action noise must be >= 0".into()));
        }
        if self.episode_length == 0 || !(self.action_scale > 0.0) {
            return Err(Error::Config("episode_length and action_scale must be positive".into()));
        }
        if !(self.success_trans > 0.0 && self.success_rot > 0.0) {
            return Err(Error::Config("success thresholds must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: EnvConfig = toml::from_str(s).map_err(|e| Error::Config(format!("env config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("env config serializes")
    }
}

/// Planar translation and wrapped rotation distance of `q_u` to `goal`.
pub fn goal_distances(q_u: &[f64; 3], goal: &[f64; 3]) -> (f64, f64) {
    ((q_u[0] - goal[0]).hypot(q_u[1] - goal[1]), wrap_angle(q_u[2] - goal[2]).abs())
}

/// Shaped task reward: inverse-distance terms for translation and rotation plus action,
/// velocity and termination penalties. `a` is the joint-command change (rad), `v_u` the
/// box velocity.
pub fn task_reward(q_u: &[f64; 3], a: &[f64; 4], v_u: &[f64; 3], terminated: bool, goal: &[f64; 3], w: &RewardWeights) -> f64 {
    let (d_trans, d_rot) = goal_distances(q_u, goal);
    let action: f64 = a.iter().map(|x| x * x).sum();
    let velocity = v_u[0] * v_u[0] + v_u[1] * v_u[1] + w.angular_velocity_weight * v_u[2] * v_u[2];
    let term = if terminated { w.w_termination } else { 0.0 };
    w.w_trans / (d_trans + 0.1) + w.w_rot / (d_rot + 0.1) + w.w_action * action + w.w_velocity * velocity + term
}

/// True when the box has left the table area, dropped, or tipped past the torso.
pub fn check_termination(q_u: &[f64; 3], half: [f64; 2], t: &TerminationParams) -> bool {
    let dist = (q_u[0] - t.table_center[0]).hypot(q_u[1] - t.table_center[1]);
    if !(dist <= t.max_distance) {
        return true;
    }
    let lowest = box_corners(q_u, half).iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
    lowest < t.min_corner_height || q_u[0] < -half[0]
}

/// Values drawn for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizationSample {
    /// Offset drawn on the disc around the nominal position; only the first component
    /// moves the box in the plane.
    pub disc_offset: [f64; 2],
    pub rotation: f64,
    pub gravity_disturbance: f64,
    pub dimension_scale: f64,
    pub mass_scale: f64,
    pub friction_scale: f64,
}

impl RandomizationSample {
    pub const NAMES: [&'static str; 7] = ["disc_dx", "disc_dy", "rotation", "gravity_disturbance", "dimension_scale", "mass_scale", "friction_scale"];

    pub fn values(&self) -> [f64; 7] {
        [self.disc_offset[0], self.disc_offset[1], self.rotation, self.gravity_disturbance, self.dimension_scale, self.mass_scale, self.friction_scale]
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Joint angles placing the fingertips at the configured home positions.
pub fn home_posture(world: &WorldParams, cfg: &EnvConfig) -> Result<[f64; 4]> {
    let refs = [[1.0, 1.0], [-1.0, 2.0]];
    let mut q = [0.0; 4];
    for arm in 0..2 {
        let [x, z] = cfg.home_fingertips[arm];
        let ik = inverse_kinematics(world, arm, Vector2::new(x, z), refs[arm])
            .ok_or_else(|| Error::Config(format!("home fingertip {arm} at ({x}, {z}) is unreachable")))?;
        q[2 * arm] = ik[0];
        q[2 * arm + 1] = ik[1];
    }
    Ok(q)
}

/// Samples the episode's physical parameters and initial box pose. The box is placed
/// with its lowest corner on the table.
pub fn randomize<R: Rng + ?Sized>(spec: &RandomizationSpec, rng: &mut R, nominal: &WorldParams) -> (WorldParams, [f64; 3], RandomizationSample) {
    let radius = spec.position_radius * rng.random::<f64>().sqrt();
    let angle = 2.0 * PI * rng.random::<f64>();
    let sample = RandomizationSample {
        disc_offset: [radius * angle.cos(), radius * angle.sin()],
        rotation: uniform(rng, spec.rotation),
        gravity_disturbance: uniform(rng, spec.gravity_disturbance),
        dimension_scale: uniform(rng, spec.dimension_scale),
        mass_scale: uniform(rng, spec.mass_scale),
        friction_scale: uniform(rng, spec.friction_scale),
    };
    let mut p = nominal.clone();
    p.gravity_disturbance = nominal.gravity_disturbance + sample.gravity_disturbance;
    p.box_half_extents = nominal.box_half_extents.map(|h| h * sample.dimension_scale);
    p.box_mass = nominal.box_mass * sample.mass_scale;
    p.friction = nominal.friction * sample.friction_scale;
    let x = spec.nominal_position[0] + sample.disc_offset[0];
    let probe = [0.0, 0.0, sample.rotation];
    let z = -box_corners(&probe, p.box_half_extents).iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
    (p, [x, z, sample.rotation], sample)
}

/// Outcome of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    /// Task reward of the transition.
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub d_trans: f64,
    pub d_rot: f64,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Per-rollout evaluation metrics shared by policy evaluation and plan replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutMetrics {
    /// Sum of task rewards over the rollout.
    pub task_return: f64,
    pub min_trans: f64,
    pub min_rot: f64,
    pub final_trans: f64,
    pub final_rot: f64,
    /// Both thresholds met simultaneously at some step.
    pub success: bool,
    pub terminated: bool,
    pub steps: usize,
    pub sample: RandomizationSample,
}

impl RolloutMetrics {
    /// Metrics of a rollout that has not moved yet.
    pub fn start(q_u: &[f64; 3], cfg: &EnvConfig, sample: RandomizationSample) -> Self {
        let (d_trans, d_rot) = goal_distances(q_u, &cfg.goal);
        RolloutMetrics {
            task_return: 0.0,
            min_trans: d_trans,
            min_rot: d_rot,
            final_trans: d_trans,
            final_rot: d_rot,
            success: d_trans <= cfg.success_trans && d_rot <= cfg.success_rot,
            terminated: false,
            steps: 0,
            sample,
        }
    }

    pub fn record(&mut self, out: &StepOutcome, cfg: &EnvConfig) {
        self.task_return += out.reward;
        self.min_trans = self.min_trans.min(out.d_trans);
        self.min_rot = self.min_rot.min(out.d_rot);
        self.final_trans = out.d_trans;
        self.final_rot = out.d_rot;
        self.success |= out.d_trans <= cfg.success_trans && out.d_rot <= cfg.success_rot;
        self.terminated |= out.terminated;
        self.steps += 1;
    }
}

/// Interface shared by training environments.
pub trait Environment: Send {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn observe(&self) -> Vec<f64>;
    /// Starts a new episode with fresh randomization.
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
    /// Robot joint configuration seen by the style discriminator.
    fn style_state(&self) -> Vec<f64>;
    fn episode_step(&self) -> usize;
}

/// One pivot-and-lift environment instance with its own random stream.
#[derive(Debug, Clone)]
pub struct PivotEnv {
    cfg: EnvConfig,
    nominal: WorldParams,
    params: WorldParams,
    home: [f64; 4],
    state: DynamicState,
    command: [f64; 4],
    steps: usize,
    sample: RandomizationSample,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl PivotEnv {
    /// Creates and resets an environment; `stream` selects an independent random stream
    /// for the same `seed`.
    pub fn new(nominal: &WorldParams, cfg: &EnvConfig, seed: u64, stream: u64) -> Result<Self> {
        nominal.validate()?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let home = home_posture(nominal, cfg)?;
        let noise = (cfg.randomization.action_noise_std > 0.0).then(|| Normal::new(0.0, cfg.randomization.action_noise_std).expect("positive std"));
        let q = Configuration::new(home, [cfg.randomization.nominal_position[0], cfg.randomization.nominal_position[1], 0.0]);
        let mut env = PivotEnv {
            cfg: cfg.clone(),
            nominal: nominal.clone(),
            params: nominal.clone(),
            home,
            state: DynamicState::at_rest(q),
            command: home,
            steps: 0,
            sample: RandomizationSample {
                disc_offset: [0.0; 2],
                rotation: 0.0,
                gravity_disturbance: 0.0,
                dimension_scale: 1.0,
                mass_scale: 1.0,
                friction_scale: 1.0,
            },
            rng,
            noise,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn state(&self) -> &DynamicState {
        &self.state
    }

    pub fn command(&self) -> [f64; 4] {
        self.command
    }

    pub fn home(&self) -> [f64; 4] {
        self.home
    }

    pub fn sample(&self) -> &RandomizationSample {
        &self.sample
    }

    fn observation_of(&self) -> Vec<f64> {
        let q = &self.state.q;
        let ee = end_effector_pose(&q.q_a, &self.params);
        let mut obs = Vec::with_capacity(OBS_DIM);
        obs.extend(q.q_a.iter().map(|a| wrap_angle(*a)));
        obs.extend_from_slice(&[q.q_u[0], q.q_u[1], wrap_angle(q.q_u[2])]);
        obs.extend_from_slice(&ee);
        obs
    }

    /// Applies an absolute stiffness command (plus action noise) for one control period.
    /// `delta` is the command change charged by the action penalty.
    pub fn step_command(&mut self, command: [f64; 4], delta: [f64; 4]) -> Result<StepOutcome> {
        let limit = self.params.joint_limit;
        self.command = command.map(|c| c.clamp(-limit, limit));
        let mut executed = self.command;
        if let Some(noise) = &self.noise {
            for c in &mut executed {
                *c += noise.sample(&mut self.rng);
            }
        }
        self.state = step_control_period(&self.state, &executed, &self.params)?;
        self.steps += 1;
        let q_u = self.state.q.q_u;
        let terminated = check_termination(&q_u, self.params.box_half_extents, &self.cfg.termination);
        let reward = task_reward(&q_u, &delta, &self.state.box_velocity(), terminated, &self.cfg.goal, &self.cfg.weights);
        let (d_trans, d_rot) = goal_distances(&q_u, &self.cfg.goal);
        Ok(StepOutcome {
            observation: self.observation_of(),
            reward,
            terminated,
            truncated: !terminated && self.steps >= self.cfg.episode_length,
            d_trans,
            d_rot,
        })
    }
}

impl Environment for PivotEnv {
    fn observation_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACT_DIM
    }

    fn observe(&self) -> Vec<f64> {
        self.observation_of()
    }

    fn reset(&mut self) -> Vec<f64> {
        let (params, q_u, sample) = randomize(&self.cfg.randomization, &mut self.rng, &self.nominal);
        self.params = params;
        self.sample = sample;
        self.state = DynamicState::at_rest(Configuration::new(self.home, q_u));
        self.command = self.home;
        self.steps = 0;
        self.observation_of()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != ACT_DIM {
            return Err(Error::Shape(format!("action has {} entries, expected {ACT_DIM}", action.len())));
        }
        if let Some(index) = action.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite { index, context: "policy action".into() });
        }
        let delta: [f64; 4] = std::array::from_fn(|i| self.cfg.action_scale * action[i].clamp(-1.0, 1.0));
        let command = std::array::from_fn(|i| self.command[i] + delta[i]);
        self.step_command(command, delta)
    }

    fn style_state(&self) -> Vec<f64> {
        self.state.q.q_a.to_vec()
    }

    fn episode_step(&self) -> usize {
        self.steps
    }
}
