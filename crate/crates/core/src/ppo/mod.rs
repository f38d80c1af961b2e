//! PPO with generalized advantage estimation, a diagonal Gaussian policy with a
//! state-independent log-std, and a KL-adaptive learning rate.

mod trainer;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpSpec, Tensor};

pub use trainer::{load_policy_snapshot, IterationMetrics, Trainer, TrainerSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub tau: f64,
    pub clip_range: f64,
    pub learning_rate: f64,
    pub kl_target: f64,
    pub horizon: usize,
    pub minibatch_size: usize,
    pub num_envs: usize,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_iterations: usize,
    pub log_std_init: f64,
    pub log_std_bounds: [f64; 2],
    pub lr_bounds: [f64; 2],
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    /// Scale of the policy output layer at initialization.
    pub policy_output_scale: f64,
    /// Global gradient-norm cap per network; 0 disables it.
    pub max_grad_norm: f64,
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            tau: 0.95,
            clip_range: 0.2,
            learning_rate: 5e-5,
            kl_target: 8e-3,
            horizon: 64,
            minibatch_size: 512,
            num_envs: 64,
            epochs: 4,
            entropy_coef: 0.0,
            value_coef: 1.0,
            max_iterations: 1500,
            log_std_init: -1.0,
            log_std_bounds: [-4.0, 1.0],
            lr_bounds: [1e-7, 1e-3],
            policy_hidden: MlpSpec::DEFAULT_HIDDEN.to_vec(),
            value_hidden: MlpSpec::DEFAULT_HIDDEN.to_vec(),
            policy_output_scale: 0.01,
            max_grad_norm: 1.0,
            checkpoint_every: 100,
        }
    }
}

impl PpoConfig {
    pub fn samples_per_iteration(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.samples_per_iteration();
        if n == 0 || self.minibatch_size == 0 || n % self.minibatch_size != 0 {
            return Err(Error::Config(format!("minibatch size {} must divide samples per iteration {n}", self.minibatch_size)));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("gamma and tau must lie in [0, 1]".into()));
        }
        if !(self.clip_range > 0.0) || !(self.learning_rate > 0.0) || !(self.kl_target > 0.0) || self.epochs == 0 {
            return Err(Error::Config("clip range, learning rate, KL target and epochs must be positive".into()));
        }
        let [lo, hi] = self.log_std_bounds;
        if !(lo <= self.log_std_init && self.log_std_init <= hi) {
            return Err(Error::Config("log_std_init must lie inside log_std_bounds".into()));
        }
        if !(self.lr_bounds[0] > 0.0 && self.lr_bounds[0] <= self.lr_bounds[1]) {
            return Err(Error::Config("lr_bounds must be positive and ordered".into()));
        }
        Ok(())
    }
}

/// Diagonal Gaussian policy: MLP mean and a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &PpoConfig, rng: &mut R) -> Result<Self> {
        let mean = Mlp::init(MlpSpec::new(obs_dim, cfg.policy_hidden.clone(), act_dim), cfg.policy_output_scale, rng)?;
        Ok(GaussianPolicy { mean, log_std: vec![cfg.log_std_init; act_dim] })
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Means for a batch of (normalized) observations.
    pub fn means(&self, obs: &Tensor) -> Result<Vec<f64>> {
        Ok(self.mean.forward(obs)?.into_data())
    }

    /// Draws `mean + std * eps`; returns the unclamped sample.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        mean.iter().zip(&self.log_std).map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(mean, &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// KL(old || new) between diagonal Gaussians.
pub fn gaussian_kl(mean_old: &[f64], log_std_old: &[f64], mean_new: &[f64], log_std_new: &[f64]) -> f64 {
    (0..mean_old.len())
        .map(|i| {
            let (so, sn) = (log_std_old[i].exp(), log_std_new[i].exp());
            log_std_new[i] - log_std_old[i] + (so * so + (mean_old[i] - mean_new[i]).powi(2)) / (2.0 * sn * sn) - 0.5
        })
        .sum()
}

/// Running mean and variance of observations (parallel-merge update).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    pub const CLIP: f64 = 10.0;

    pub fn new(dim: usize) -> Self {
        RunningNorm { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn update(&mut self, rows: &[Vec<f64>]) {
        if rows.is_empty() {
            return;
        }
        let dim = self.mean.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                mean[i] += r[i] / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                var[i] += (r[i] - mean[i]).powi(2) / n;
            }
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = mean[i] - self.mean[i];
            let m2 = self.var[i] * self.count + var[i] * n + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.var).map(|((v, m), s2)| ((v - m) / (s2 + 1e-8).sqrt()).clamp(-Self::CLIP, Self::CLIP)).collect()
    }
}

/// Frozen policy used for evaluation: observation normalization plus the mean action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub policy: GaussianPolicy,
    pub obs_norm: RunningNorm,
}

impl PolicySnapshot {
    /// Deterministic actions (clamped means) for a batch of raw observations.
    pub fn act(&self, observations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if observations.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.obs_norm.mean.len();
        let flat: Vec<f64> = observations.iter().flat_map(|o| self.obs_norm.normalize(o)).collect();
        let means = self.policy.means(&Tensor::matrix(observations.len(), dim, flat)?)?;
        Ok(means.chunks(self.policy.act_dim()).map(|m| m.iter().map(|v| v.clamp(-1.0, 1.0)).collect()).collect())
    }
}

/// GAE over a `[T][N]` rollout. `dones[t][n]` marks that the transition at `t` ended an
/// episode; `last_values` bootstraps the final step. Returns raw advantages and returns.
pub fn compute_gae(
    rewards: &[Vec<f64>],
    values: &[Vec<f64>],
    dones: &[Vec<bool>],
    last_values: &[f64],
    gamma: f64,
    tau: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t_len = rewards.len();
    let n = last_values.len();
    let mut adv = vec![vec![0.0; n]; t_len];
    let mut ret = vec![vec![0.0; n]; t_len];
    for e in 0..n {
        let mut next_adv = 0.0;
        let mut next_value = last_values[e];
        for t in (0..t_len).rev() {
            let live = if dones[t][e] { 0.0 } else { 1.0 };
            let delta = rewards[t][e] + gamma * next_value * live - values[t][e];
            next_adv = delta + gamma * tau * live * next_adv;
            adv[t][e] = next_adv;
            ret[t][e] = next_adv + values[t][e];
            next_value = values[t][e];
        }
    }
    (adv, ret)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
    // One correction pass removes the rounding residue of the mean.
    let residual = adv.iter().sum::<f64>() / n;
    for a in adv.iter_mut() {
        *a -= residual;
    }
}

/// Per-sample clipped surrogate `min(rho A, clip(rho, 1-eps, 1+eps) A)` and whether the
/// unclipped branch is active (carries gradient).
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// KL-adaptive learning rate: shrink by 1.5 above twice the target, grow by 1.5 below
/// half of it, then clamp.
pub fn adapt_learning_rate(lr: f64, kl: f64, target: f64, bounds: [f64; 2]) -> f64 {
    let next = if kl > 2.0 * target {
        lr / 1.5
    } else if kl < 0.5 * target {
        lr * 1.5
    } else {
        lr
    };
    next.clamp(bounds[0], bounds[1])
}
