//! Adversarial motion prior: demo transition statistics, a least-squares discriminator
//! with an input-gradient penalty, and the style and combined rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Mlp, MlpSpec, Tape, Tensor};
use crate::planner::Demonstration;

/// Length of a discriminator observation `(q_a_t, q_a_{t+1})`.
pub const TRANSITION_DIM: usize = 8;

pub type Transition = [f64; TRANSITION_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmpConfig {
    /// Task-reward weight in the combined reward.
    pub lambda: f64,
    pub gradient_penalty: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    /// Policy transitions per discriminator minibatch (half newest, half replay); the
    /// demo side uses the same count.
    pub batch_size: usize,
    /// Lower bound on the per-dimension demo standard deviation.
    pub std_floor: f64,
    pub hidden: Vec<usize>,
}

impl Default for AmpConfig {
    fn default() -> Self {
        AmpConfig {
            lambda: 0.9,
            gradient_penalty: 10.0,
            weight_decay: 1e-4,
            learning_rate: 5e-5,
            replay_capacity: 100_000,
            batch_size: 512,
            std_floor: 1e-3,
            hidden: MlpSpec::DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.gradient_penalty < 0.0 || self.weight_decay < 0.0 || !(self.learning_rate > 0.0) || !(self.std_floor > 0.0) {
            return Err(Error::Config("discriminator coefficients must be non-negative and lr, std_floor positive".into()));
        }
        if self.batch_size < 2 || self.hidden.contains(&0) {
            return Err(Error::Config("discriminator batch size must be >= 2 and hidden widths >= 1".into()));
        }
        Ok(())
    }
}

/// Demonstration transitions with normalization statistics frozen at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoTransitionSet {
    raw: Vec<Transition>,
    normalized: Vec<Transition>,
    pub mean: Transition,
    pub std: Transition,
}

impl DemoTransitionSet {
    /// Pairs consecutive configurations, one control period apart.
    pub fn from_sequence(q_a: &[[f64; 4]], std_floor: f64) -> Result<Self> {
        if q_a.len() < 2 {
            return Err(Error::Precondition(format!("a demonstration needs at least 2 configurations, got {}", q_a.len())));
        }
        let raw: Vec<Transition> = q_a.windows(2).map(|w| concat(&w[0], &w[1])).collect();
        let n = raw.len() as f64;
        let mut mean = [0.0; TRANSITION_DIM];
        for t in &raw {
            for i in 0..TRANSITION_DIM {
                mean[i] += t[i] / n;
            }
        }
        let mut var = [0.0; TRANSITION_DIM];
        for t in &raw {
            for i in 0..TRANSITION_DIM {
                var[i] += (t[i] - mean[i]).powi(2) / n;
            }
        }
        let std = var.map(|v| v.sqrt().max(std_floor));
        let mut set = DemoTransitionSet { raw, normalized: Vec::new(), mean, std };
        set.normalized = set.raw.iter().map(|t| set.normalize(t)).collect();
        Ok(set)
    }

    pub fn from_demo(demo: &Demonstration, std_floor: f64) -> Result<Self> {
        Self::from_sequence(&demo.q_a, std_floor)
    }

    /// The selected transitions with this set's normalization statistics.
    pub fn subset(&self, indices: &[usize]) -> Self {
        DemoTransitionSet {
            raw: indices.iter().map(|&i| self.raw[i]).collect(),
            normalized: indices.iter().map(|&i| self.normalized[i]).collect(),
            mean: self.mean,
            std: self.std,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[Transition] {
        &self.raw
    }

    pub fn normalized(&self) -> &[Transition] {
        &self.normalized
    }

    pub fn normalize(&self, t: &Transition) -> Transition {
        std::array::from_fn(|i| (t[i] - self.mean[i]) / self.std[i])
    }
}

/// Raw (unnormalized) transition `[q_t, q_next]`.
pub fn concat(a: &[f64; 4], b: &[f64; 4]) -> Transition {
    [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
}

/// Discriminator features of a state pair, normalized by the demo statistics.
pub fn observation_map(q_t: &[f64; 4], q_next: &[f64; 4], stats: &DemoTransitionSet) -> Transition {
    stats.normalize(&concat(q_t, q_next))
}

/// `E_demo[(D-1)^2] + E_policy[(D+1)^2] + w_gp * E_demo[|grad_x D|^2]`.
pub fn discriminator_loss(d_demo: &[f64], d_policy: &[f64], grad_sq_demo: &[f64], gp_weight: f64) -> Result<f64> {
    if d_demo.is_empty() || d_policy.is_empty() || grad_sq_demo.len() != d_demo.len() {
        return Err(Error::Precondition("discriminator loss needs non-empty batches and one gradient norm per demo sample".into()));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|x| f(*x)).sum::<f64>() / v.len() as f64;
    Ok(mean(d_demo, &|d| (d - 1.0).powi(2)) + mean(d_policy, &|d| (d + 1.0).powi(2)) + gp_weight * mean(grad_sq_demo, &|g| g))
}

/// `max(0, 1 - (D - 1)^2 / 4)`.
pub fn style_reward(d: f64) -> f64 {
    (1.0 - 0.25 * (d - 1.0).powi(2)).max(0.0)
}

/// `lambda * r_G + (1 - lambda) * r_S`.
pub fn combined_reward(r_g: f64, r_s: f64, lambda: f64) -> f64 {
    lambda * r_g + (1.0 - lambda) * r_s
}

/// Ring buffer of normalized policy transitions plus the newest rollout.
#[derive(Debug, Clone)]
pub struct PolicyReplay {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
    newest: Vec<Transition>,
}

impl PolicyReplay {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Precondition("policy replay capacity must be >= 1".into()));
        }
        Ok(PolicyReplay { capacity, data: Vec::new(), next: 0, newest: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn newest(&self) -> &[Transition] {
        &self.newest
    }

    pub fn stored(&self) -> &[Transition] {
        &self.data
    }

    /// Stores a rollout's transitions, replacing the newest batch and evicting the
    /// oldest entries when full.
    pub fn push_rollout(&mut self, transitions: Vec<Transition>) {
        for t in &transitions {
            if self.data.len() < self.capacity {
                self.data.push(*t);
            } else {
                self.data[self.next] = *t;
            }
            self.next = (self.next + 1) % self.capacity;
        }
        self.newest = transitions;
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Transition {
        self.data[rng.random_range(0..self.data.len())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscriminatorMetrics {
    pub loss: f64,
    pub grad_penalty: f64,
    /// Fraction of demo samples with `D > 0`.
    pub demo_accuracy: f64,
    /// Fraction of policy samples with `D < 0`.
    pub policy_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    opt: AdamState,
    gp_weight: f64,
    batch_size: usize,
}

/// Packs transitions into a `[batch, 8]` tensor.
pub fn to_tensor(batch: &[Transition]) -> Tensor {
    Tensor::matrix(batch.len(), TRANSITION_DIM, batch.iter().flatten().copied().collect()).expect("consistent batch shape")
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: &AmpConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let net = Mlp::init(MlpSpec::new(TRANSITION_DIM, cfg.hidden.clone(), 1), 1.0, rng)?;
        let opt = AdamState::new(net.param_count(), AdamConfig { lr: cfg.learning_rate, weight_decay: cfg.weight_decay, ..AdamConfig::default() });
        Ok(Discriminator { net, opt, gp_weight: cfg.gradient_penalty, batch_size: cfg.batch_size })
    }

    pub fn from_parts(net: Mlp, opt: AdamState, cfg: &AmpConfig) -> Result<Self> {
        if net.spec().input_dim != TRANSITION_DIM || net.spec().output_dim != 1 || opt.m.len() != net.param_count() {
            return Err(Error::Checkpoint("discriminator parameters do not match the transition layout".into()));
        }
        Ok(Discriminator { net, opt, gp_weight: cfg.gradient_penalty, batch_size: cfg.batch_size })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.opt
    }

    /// Discriminator outputs for normalized transitions.
    pub fn score(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.net.forward(&to_tensor(batch))?.into_data())
    }

    /// Style rewards for normalized transitions.
    pub fn style_rewards(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        Ok(self.score(batch)?.into_iter().map(style_reward).collect())
    }

    /// One optimizer step on explicit demo and policy minibatches.
    pub fn train_step(&mut self, demo: &[Transition], policy: &[Transition]) -> Result<DiscriminatorMetrics> {
        if demo.is_empty() || policy.is_empty() {
            return Err(Error::Precondition("discriminator update needs non-empty demo and policy batches".into()));
        }
        let mut grads = vec![0.0; self.net.param_count()];
        let mut tape = Tape::new();
        let d_demo = self.net.forward_recorded(&to_tensor(demo), &mut tape)?.into_data();
        let nd = demo.len() as f64;
        let gp_weights = vec![self.gp_weight / nd; demo.len()];
        let penalties = self.net.input_grad_penalty_into(&tape, &gp_weights, &mut grads)?;
        let g_demo: Vec<f64> = d_demo.iter().map(|d| 2.0 * (d - 1.0) / nd).collect();
        self.net.backward_into(&tape, &g_demo, &mut grads)?;
        let d_pol = self.net.forward_recorded(&to_tensor(policy), &mut tape)?.into_data();
        let np = policy.len() as f64;
        let g_pol: Vec<f64> = d_pol.iter().map(|d| 2.0 * (d + 1.0) / np).collect();
        self.net.backward_into(&tape, &g_pol, &mut grads)?;
        let loss = discriminator_loss(&d_demo, &d_pol, &penalties, self.gp_weight)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { index: 0, context: format!("discriminator loss {loss}") });
        }
        self.opt.step(self.net.params_mut(), &grads)?;
        Ok(DiscriminatorMetrics {
            loss,
            grad_penalty: penalties.iter().sum::<f64>() / nd,
            demo_accuracy: d_demo.iter().filter(|d| **d > 0.0).count() as f64 / nd,
            policy_accuracy: d_pol.iter().filter(|d| **d < 0.0).count() as f64 / np,
        })
    }

    /// One epoch over the newest rollout. Each minibatch holds `batch_size` policy
    /// transitions (half from the newest rollout, half sampled from the whole replay)
    /// and as many demo transitions sampled uniformly. Returns averaged metrics.
    pub fn update<R: Rng + ?Sized>(&mut self, demo: &DemoTransitionSet, replay: &PolicyReplay, rng: &mut R) -> Result<DiscriminatorMetrics> {
        if replay.is_empty() || replay.newest().is_empty() || demo.is_empty() {
            return Err(Error::Precondition("discriminator update needs demo data and at least one stored rollout".into()));
        }
        let half = (self.batch_size / 2).max(1);
        let mut order: Vec<usize> = (0..replay.newest().len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut sum = DiscriminatorMetrics::default();
        let mut count = 0.0;
        for chunk in order.chunks(half) {
            let mut policy: Vec<Transition> = chunk.iter().map(|&i| replay.newest()[i]).collect();
            for _ in 0..chunk.len() {
                policy.push(replay.sample(rng));
            }
            let demo_batch: Vec<Transition> = (0..policy.len()).map(|_| demo.normalized()[rng.random_range(0..demo.len())]).collect();
            let m = self.train_step(&demo_batch, &policy)?;
            sum.loss += m.loss;
            sum.grad_penalty += m.grad_penalty;
            sum.demo_accuracy += m.demo_accuracy;
            sum.policy_accuracy += m.policy_accuracy;
            count += 1.0;
        }
        Ok(DiscriminatorMetrics {
            loss: sum.loss / count,
            grad_penalty: sum.grad_penalty / count,
            demo_accuracy: sum.demo_accuracy / count,
            policy_accuracy: sum.policy_accuracy / count,
        })
    }

    /// Sign accuracy on labeled held-out data.
    pub fn accuracy(&self, demo: &[Transition], policy: &[Transition]) -> Result<f64> {
        let d = self.score(demo)?;
        let p = self.score(policy)?;
        let correct = d.iter().filter(|x| **x > 0.0).count() + p.iter().filter(|x| **x < 0.0).count();
        Ok(correct as f64 / (d.len() + p.len()) as f64)
    }
}
