use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::error::{Error, Result};

/// A point finger moved by bounded per-axis steps toward a fixed target; reward is the
/// negative distance after each move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointReachConfig {
    pub start: [f64; 2],
    pub target: [f64; 2],
    /// Largest per-axis displacement per step.
    pub step_size: f64,
    pub horizon: usize,
}

impl Default for PointReachConfig {
    fn default() -> Self {
        PointReachConfig { start: [0.0, 0.0], target: [0.6, -0.4], step_size: 0.05, horizon: 40 }
    }
}

impl PointReachConfig {
    fn reward(&self, p: &[f64; 2]) -> f64 {
        -(p[0] - self.target[0]).hypot(p[1] - self.target[1])
    }

    /// Episode return of a fixed per-step action.
    pub fn rollout(&self, policy: impl Fn(&[f64; 2]) -> [f64; 2]) -> f64 {
        let mut p = self.start;
        let mut total = 0.0;
        for _ in 0..self.horizon {
            let a = policy(&p);
            for i in 0..2 {
                p[i] += self.step_size * a[i].clamp(-1.0, 1.0);
            }
            total += self.reward(&p);
        }
        total
    }

    /// Best attainable return: each axis independently moves at full speed toward the
    /// target and stops on it, which minimizes the distance at every step.
    pub fn optimal_return(&self) -> f64 {
        let (t, h) = (self.target, self.step_size);
        self.rollout(|p| std::array::from_fn(|i| ((t[i] - p[i]) / h).clamp(-1.0, 1.0)))
    }

    /// Return of the policy that never moves.
    pub fn idle_return(&self) -> f64 {
        self.rollout(|_| [0.0; 2])
    }

    /// `(R - R_idle) / (R_opt - R_idle)`: 0 for standing still, 1 for the optimum.
    pub fn normalized_score(&self, ret: f64) -> f64 {
        let idle = self.idle_return();
        (ret - idle) / (self.optimal_return() - idle)
    }
}

#[derive(Debug, Clone)]
pub struct PointReachEnv {
    cfg: PointReachConfig,
    p: [f64; 2],
    steps: usize,
}

impl PointReachEnv {
    pub fn new(cfg: PointReachConfig) -> Self {
        PointReachEnv { p: cfg.start, cfg, steps: 0 }
    }

    pub fn config(&self) -> &PointReachConfig {
        &self.cfg
    }
}

impl Environment for PointReachEnv {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.p[0], self.p[1], self.cfg.target[0] - self.p[0], self.cfg.target[1] - self.p[1]]
    }

    fn reset(&mut self) -> Vec<f64> {
        self.p = self.cfg.start;
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != 2 {
            return Err(Error::Shape(format!("action has {} entries, expected 2", action.len())));
        }
        if let Some(index) = action.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite { index, context: "policy action".into() });
        }
        for (p, a) in self.p.iter_mut().zip(action) {
            *p += self.cfg.step_size * a.clamp(-1.0, 1.0);
        }
        self.steps += 1;
        let reward = self.cfg.reward(&self.p);
        Ok(StepOutcome { observation: self.observe(), reward, terminated: false, truncated: self.steps >= self.cfg.horizon, d_trans: -reward, d_rot: 0.0 })
    }

    fn style_state(&self) -> Vec<f64> {
        self.p.to_vec()
    }

    fn episode_step(&self) -> usize {
        self.steps
    }
}
