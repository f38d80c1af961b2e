use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adapt_learning_rate, clipped_surrogate, compute_gae, gaussian_kl, normalize_advantages, GaussianPolicy, PolicySnapshot, PpoConfig, RunningNorm};
use crate::amp::{combined_reward, observation_map, AmpConfig, DemoTransitionSet, Discriminator, PolicyReplay, Transition};
use crate::env::{Environment, VecEnv};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Checkpoint, Mlp, MlpSpec, Tape, Tensor};

/// Completed episodes kept for the reported episode-return statistics.
const EPISODE_WINDOW: usize = 100;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: u64,
    /// Mean and std of task return over the most recent completed episodes (NaN before
    /// the first episode ends).
    pub episode_reward_mean: f64,
    pub episode_reward_std: f64,
    pub episodes_completed: usize,
    pub step_task_reward: f64,
    pub style_reward: f64,
    pub disc_loss: f64,
    pub disc_demo_accuracy: f64,
    pub disc_policy_accuracy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub learning_rate: f64,
    pub clamp_fraction: f64,
    pub env_errors: usize,
    pub aborted: bool,
    pub wall_time: f64,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iteration,env_steps,episode_reward_mean,episode_reward_std,episodes_completed,step_task_reward,style_reward,disc_loss,disc_demo_accuracy,disc_policy_accuracy,approx_kl,clip_fraction,policy_loss,value_loss,learning_rate,clamp_fraction,env_errors,aborted,wall_time";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.iteration,
            self.env_steps,
            self.episode_reward_mean,
            self.episode_reward_std,
            self.episodes_completed,
            self.step_task_reward,
            self.style_reward,
            self.disc_loss,
            self.disc_demo_accuracy,
            self.disc_policy_accuracy,
            self.approx_kl,
            self.clip_fraction,
            self.policy_loss,
            self.value_loss,
            self.learning_rate,
            self.clamp_fraction,
            self.env_errors,
            self.aborted as u8,
            self.wall_time
        )
    }

    pub fn parse_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 19 {
            return None;
        }
        let r = |i: usize| f[i].parse::<f64>().ok();
        Some(IterationMetrics {
            iteration: f[0].parse().ok()?,
            env_steps: f[1].parse().ok()?,
            episode_reward_mean: r(2)?,
            episode_reward_std: r(3)?,
            episodes_completed: f[4].parse().ok()?,
            step_task_reward: r(5)?,
            style_reward: r(6)?,
            disc_loss: r(7)?,
            disc_demo_accuracy: r(8)?,
            disc_policy_accuracy: r(9)?,
            approx_kl: r(10)?,
            clip_fraction: r(11)?,
            policy_loss: r(12)?,
            value_loss: r(13)?,
            learning_rate: r(14)?,
            clamp_fraction: r(15)?,
            env_errors: f[16].parse().ok()?,
            aborted: f[17] == "1",
            wall_time: r(18)?,
        })
    }
}

/// Everything a trainer needs besides its environments.
#[derive(Debug, Clone)]
pub struct TrainerSetup {
    pub ppo: PpoConfig,
    pub amp: AmpConfig,
    /// Robot joint trajectory to imitate; required when `amp.lambda < 1`.
    pub demo: Option<Vec<[f64; 4]>>,
    pub seed: u64,
    /// Step environments on the rayon pool (when the feature is enabled).
    pub parallel: bool,
    /// Report zero wall time so logs are byte-reproducible.
    pub deterministic: bool,
}

struct Rollout {
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    means: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    task_rewards: Vec<f64>,
    dones: Vec<Vec<bool>>,
    raw_obs: Vec<Vec<f64>>,
    transitions: Vec<Transition>,
    clamped: usize,
    env_errors: usize,
}

#[derive(Default)]
struct UpdateStats {
    policy_loss: f64,
    value_loss: f64,
    kl: f64,
    clip_fraction: f64,
    aborted: bool,
}

/// PPO trainer with an optional adversarial style reward.
pub struct Trainer<E: Environment> {
    cfg: PpoConfig,
    amp_cfg: AmpConfig,
    seed: u64,
    deterministic: bool,
    envs: VecEnv<E>,
    policy: GaussianPolicy,
    value: Mlp,
    policy_opt: AdamState,
    value_opt: AdamState,
    obs_norm: RunningNorm,
    style: Option<(Discriminator, DemoTransitionSet, PolicyReplay)>,
    rng: ChaCha8Rng,
    disc_rng: ChaCha8Rng,
    lr: f64,
    iteration: usize,
    env_steps: u64,
    running_returns: Vec<f64>,
    recent_returns: VecDeque<f64>,
    started: Instant,
}

impl<E: Environment> Trainer<E> {
    pub fn new(envs: Vec<E>, setup: TrainerSetup) -> Result<Self> {
        let TrainerSetup { ppo: cfg, amp: amp_cfg, demo, seed, parallel, deterministic } = setup;
        cfg.validate()?;
        amp_cfg.validate()?;
        if envs.len() != cfg.num_envs {
            return Err(Error::Config(format!("expected {} environments, got {}", cfg.num_envs, envs.len())));
        }
        let obs_dim = envs[0].observation_dim();
        let act_dim = envs[0].action_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let disc_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d15c);
        let policy = GaussianPolicy::new(obs_dim, act_dim, &cfg, &mut rng)?;
        let value = Mlp::init(MlpSpec::new(obs_dim, cfg.value_hidden.clone(), 1), 1.0, &mut rng)?;
        let style = if amp_cfg.lambda < 1.0 {
            let demo = demo.ok_or_else(|| Error::Config("a demonstration is required when lambda < 1".into()))?;
            if envs[0].style_state().len() != 4 {
                return Err(Error::Config("style transitions need a 4-joint robot state".into()));
            }
            let set = DemoTransitionSet::from_sequence(&demo, amp_cfg.std_floor)?;
            let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15c_0000);
            Some((Discriminator::new(&amp_cfg, &mut init_rng)?, set, PolicyReplay::new(amp_cfg.replay_capacity)?))
        } else {
            None
        };
        let adam = AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() };
        let n = envs.len();
        Ok(Trainer {
            policy_opt: AdamState::new(policy.mean.param_count() + act_dim, adam),
            value_opt: AdamState::new(value.param_count(), adam),
            lr: cfg.learning_rate,
            obs_norm: RunningNorm::new(obs_dim),
            envs: VecEnv::new(envs, parallel),
            policy,
            value,
            style,
            rng,
            disc_rng,
            cfg,
            amp_cfg,
            seed,
            deterministic,
            iteration: 0,
            env_steps: 0,
            running_returns: vec![0.0; n],
            recent_returns: VecDeque::new(),
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn amp_config(&self) -> &AmpConfig {
        &self.amp_cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn value_net(&self) -> &Mlp {
        &self.value
    }

    pub fn discriminator(&self) -> Option<&Discriminator> {
        self.style.as_ref().map(|s| &s.0)
    }

    pub fn envs(&self) -> &VecEnv<E> {
        &self.envs
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot { policy: self.policy.clone(), obs_norm: self.obs_norm.clone() }
    }

    fn values_of(&self, obs_n: &[Vec<f64>]) -> Result<Vec<f64>> {
        if obs_n.is_empty() {
            return Ok(Vec::new());
        }
        let t = Tensor::matrix(obs_n.len(), obs_n[0].len(), obs_n.concat())?;
        Ok(self.value.forward(&t)?.into_data())
    }

    fn collect(&mut self) -> Result<Rollout> {
        let n = self.envs.len();
        let act_dim = self.policy.act_dim();
        let horizon = self.cfg.horizon;
        let mut ro = Rollout {
            obs: Vec::with_capacity(n * horizon),
            actions: Vec::with_capacity(n * horizon),
            log_probs: Vec::with_capacity(n * horizon),
            means: Vec::with_capacity(n * horizon),
            values: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
            task_rewards: Vec::with_capacity(n * horizon),
            dones: Vec::with_capacity(horizon),
            raw_obs: Vec::with_capacity(n * horizon),
            transitions: Vec::new(),
            clamped: 0,
            env_errors: 0,
        };
        let style_on = self.style.is_some();
        for _ in 0..horizon {
            let raw: Vec<Vec<f64>> = self.envs.observations().to_vec();
            let obs_n: Vec<Vec<f64>> = raw.iter().map(|o| self.obs_norm.normalize(o)).collect();
            let flat = Tensor::matrix(n, obs_n[0].len(), obs_n.concat())?;
            let means = self.policy.means(&flat)?;
            let values = self.value.forward(&flat)?.into_data();
            let mut actions = Vec::with_capacity(n);
            let mut env_actions = Vec::with_capacity(n);
            for e in 0..n {
                let mean = &means[e * act_dim..(e + 1) * act_dim];
                let a = self.policy.sample(mean, &mut self.rng);
                ro.log_probs.push(self.policy.log_prob(mean, &a));
                ro.means.push(mean.to_vec());
                let clamped: Vec<f64> = a.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
                ro.clamped += clamped.iter().zip(&a).filter(|(c, v)| c != v).count();
                env_actions.push(clamped);
                actions.push(a);
            }
            let before = if style_on { self.envs.style_states() } else { Vec::new() };
            let outcomes = self.envs.step(&env_actions);
            let after = if style_on { self.envs.style_states() } else { Vec::new() };
            let mut rewards = vec![0.0; n];
            let mut dones = vec![false; n];
            let mut truncated_obs = Vec::new();
            for (e, out) in outcomes.into_iter().enumerate() {
                match out {
                    Ok(o) => {
                        rewards[e] = o.reward;
                        self.running_returns[e] += o.reward;
                        dones[e] = o.done();
                        if o.truncated && !o.terminated {
                            truncated_obs.push((e, self.obs_norm.normalize(&o.observation)));
                        }
                    }
                    Err(err) => {
                        log::warn!("environment {e} failed at iteration {}: {err}; resetting", self.iteration);
                        ro.env_errors += 1;
                        dones[e] = true;
                    }
                }
                if style_on {
                    if let Some((_, demo, _)) = &self.style {
                        let q0: [f64; 4] = before[e][..4].try_into().expect("4 joints");
                        let q1: [f64; 4] = after[e][..4].try_into().expect("4 joints");
                        ro.transitions.push(observation_map(&q0, &q1, demo));
                    }
                }
            }
            ro.task_rewards.extend_from_slice(&rewards);
            let (idx, boot_obs): (Vec<usize>, Vec<Vec<f64>>) = truncated_obs.into_iter().unzip();
            let boot = self.values_of(&boot_obs)?;
            let mut combined = rewards.clone();
            if let Some((disc, _, _)) = &self.style {
                let start = ro.transitions.len() - n;
                let style = disc.style_rewards(&ro.transitions[start..])?;
                for e in 0..n {
                    combined[e] = combined_reward(rewards[e], style[e], self.amp_cfg.lambda);
                }
            }
            for (e, v) in idx.into_iter().zip(boot) {
                combined[e] += self.cfg.gamma * v;
            }
            for e in 0..n {
                if dones[e] {
                    self.recent_returns.push_back(self.running_returns[e]);
                    if self.recent_returns.len() > EPISODE_WINDOW {
                        self.recent_returns.pop_front();
                    }
                    self.running_returns[e] = 0.0;
                }
            }
            self.envs.reset_done(&dones);
            ro.raw_obs.extend(raw);
            ro.obs.extend(obs_n);
            ro.actions.extend(actions);
            ro.values.push(values);
            ro.rewards.push(combined);
            ro.dones.push(dones);
        }
        Ok(ro)
    }

    /// Runs one collect / update cycle and returns its log row.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        let ro = self.collect()?;
        let n = self.envs.len();
        let samples = ro.obs.len();
        let last_obs: Vec<Vec<f64>> = self.envs.observations().iter().map(|o| self.obs_norm.normalize(o)).collect();
        let last_values = self.values_of(&last_obs)?;
        let (adv, ret) = compute_gae(&ro.rewards, &ro.values, &ro.dones, &last_values, self.cfg.gamma, self.cfg.tau);
        let mut advantages: Vec<f64> = adv.concat();
        let returns: Vec<f64> = ret.concat();
        normalize_advantages(&mut advantages);

        let mut metrics = IterationMetrics { iteration: self.iteration + 1, ..Default::default() };
        if let Some((disc, _, _)) = &self.style {
            let style = disc.style_rewards(&ro.transitions)?;
            metrics.style_reward = style.iter().sum::<f64>() / style.len() as f64;
        }
        let stats = self.update(&ro, &advantages, &returns)?;
        if !stats.aborted {
            if let Some((disc, demo, replay)) = &mut self.style {
                replay.push_rollout(ro.transitions.clone());
                match disc.update(demo, replay, &mut self.disc_rng) {
                    Ok(m) => {
                        metrics.disc_loss = m.loss;
                        metrics.disc_demo_accuracy = m.demo_accuracy;
                        metrics.disc_policy_accuracy = m.policy_accuracy;
                    }
                    Err(e @ Error::NonFinite { .. }) => log::warn!("discriminator update skipped: {e}"),
                    Err(e) => return Err(e),
                }
            }
        }
        self.obs_norm.update(&ro.raw_obs);
        self.iteration += 1;
        self.env_steps += samples as u64;

        let k = self.recent_returns.len();
        metrics.episodes_completed = k;
        if k > 0 {
            let mean = self.recent_returns.iter().sum::<f64>() / k as f64;
            metrics.episode_reward_mean = mean;
            metrics.episode_reward_std = (self.recent_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
        } else {
            metrics.episode_reward_mean = f64::NAN;
            metrics.episode_reward_std = f64::NAN;
        }
        metrics.env_steps = self.env_steps;
        metrics.step_task_reward = ro.task_rewards.iter().sum::<f64>() / samples as f64;
        metrics.approx_kl = stats.kl;
        metrics.clip_fraction = stats.clip_fraction;
        metrics.policy_loss = stats.policy_loss;
        metrics.value_loss = stats.value_loss;
        metrics.learning_rate = self.lr;
        metrics.clamp_fraction = ro.clamped as f64 / (samples * self.policy.act_dim()) as f64;
        metrics.env_errors = ro.env_errors;
        metrics.aborted = stats.aborted;
        metrics.wall_time = if self.deterministic { 0.0 } else { self.started.elapsed().as_secs_f64() };
        debug_assert_eq!(samples, n * self.cfg.horizon);
        Ok(metrics)
    }

    fn update(&mut self, ro: &Rollout, advantages: &[f64], returns: &[f64]) -> Result<UpdateStats> {
        let samples = ro.obs.len();
        let mb = self.cfg.minibatch_size;
        let act_dim = self.policy.act_dim();
        let obs_dim = ro.obs[0].len();
        let saved = (self.policy.clone(), self.value.clone(), self.policy_opt.clone(), self.value_opt.clone(), self.lr);
        let mut stats = UpdateStats::default();
        let mut count = 0.0;
        let mut clipped = 0usize;
        let mut order: Vec<usize> = (0..samples).collect();
        let mut policy_tape = Tape::new();
        let mut value_tape = Tape::new();
        for _ in 0..self.cfg.epochs {
            for i in (1..samples).rev() {
                order.swap(i, self.rng.random_range(0..=i));
            }
            for chunk in order.chunks(mb) {
                let m = chunk.len() as f64;
                let obs = Tensor::matrix(chunk.len(), obs_dim, chunk.iter().flat_map(|&i| ro.obs[i].iter().copied()).collect())?;
                let means = self.policy.mean.forward_recorded(&obs, &mut policy_tape)?.into_data();
                let v = self.value.forward_recorded(&obs, &mut value_tape)?.into_data();
                let log_std = &self.policy.log_std;
                let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
                let mut g_mean = vec![0.0; chunk.len() * act_dim];
                let mut g_log_std = vec![0.0; act_dim];
                let mut policy_loss = 0.0;
                let mut kl = 0.0;
                for (k, &i) in chunk.iter().enumerate() {
                    let mean = &means[k * act_dim..(k + 1) * act_dim];
                    let a = &ro.actions[i];
                    let ratio = (self.policy.log_prob(mean, a) - ro.log_probs[i]).exp();
                    let (obj, active) = clipped_surrogate(ratio, advantages[i], self.cfg.clip_range);
                    policy_loss -= obj / m;
                    clipped += usize::from(!active);
                    if active {
                        // d(-rho A)/dlogp = -rho A
                        let w = -ratio * advantages[i] / m;
                        for j in 0..act_dim {
                            let diff = a[j] - mean[j];
                            g_mean[k * act_dim + j] = w * diff * inv_var[j];
                            g_log_std[j] += w * (diff * diff * inv_var[j] - 1.0);
                        }
                    }
                    kl += gaussian_kl(&ro.means[i], &saved.0.log_std, mean, log_std) / m;
                }
                let entropy = self.policy.entropy();
                for g in &mut g_log_std {
                    *g -= self.cfg.entropy_coef;
                }
                let mut g_value = vec![0.0; chunk.len()];
                let mut value_loss = 0.0;
                for (k, &i) in chunk.iter().enumerate() {
                    let err = v[k] - returns[i];
                    value_loss += err * err / m;
                    g_value[k] = 2.0 * self.cfg.value_coef * err / m;
                }
                let total = policy_loss + self.cfg.value_coef * value_loss - self.cfg.entropy_coef * entropy;
                if !total.is_finite() || !kl.is_finite() {
                    log::warn!("non-finite PPO loss at iteration {}; restoring parameters", self.iteration + 1);
                    (self.policy, self.value, self.policy_opt, self.value_opt, self.lr) = saved;
                    stats.aborted = true;
                    return Ok(stats);
                }
                let mut pg = vec![0.0; self.policy.mean.param_count() + act_dim];
                let n_mean = self.policy.mean.param_count();
                self.policy.mean.backward_into(&policy_tape, &g_mean, &mut pg[..n_mean])?;
                pg[n_mean..].copy_from_slice(&g_log_std);
                let mut vg = vec![0.0; self.value.param_count()];
                self.value.backward_into(&value_tape, &g_value, &mut vg)?;
                clip_grad_norm(&mut pg, self.cfg.max_grad_norm);
                clip_grad_norm(&mut vg, self.cfg.max_grad_norm);

                self.lr = adapt_learning_rate(self.lr, kl, self.cfg.kl_target, self.cfg.lr_bounds);
                self.policy_opt.lr = self.lr;
                self.value_opt.lr = self.lr;
                let mut params: Vec<f64> = self.policy.mean.params().iter().chain(&self.policy.log_std).copied().collect();
                self.policy_opt.step(&mut params, &pg)?;
                self.policy.mean.params_mut().copy_from_slice(&params[..n_mean]);
                let [lo, hi] = self.cfg.log_std_bounds;
                for (dst, src) in self.policy.log_std.iter_mut().zip(&params[n_mean..]) {
                    *dst = src.clamp(lo, hi);
                }
                self.value_opt.step(self.value.params_mut(), &vg)?;

                stats.policy_loss += policy_loss;
                stats.value_loss += value_loss;
                stats.kl += kl;
                count += 1.0;
            }
        }
        stats.policy_loss /= count;
        stats.value_loss /= count;
        stats.kl /= count;
        stats.clip_fraction = clipped as f64 / (samples * self.cfg.epochs) as f64;
        Ok(stats)
    }

    /// Runs until `max_iterations`, calling `on_iteration` after every row.
    pub fn train(&mut self, mut on_iteration: impl FnMut(&Self, &IterationMetrics) -> Result<()>) -> Result<()> {
        while self.iteration < self.cfg.max_iterations {
            let m = self.iterate()?;
            on_iteration(self, &m)?;
        }
        Ok(())
    }

    /// Serializes networks, optimizer moments, normalization statistics and RNG positions.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.seed);
        c.set_meta("iteration", self.iteration);
        c.set_meta("env_steps", self.env_steps);
        c.set_meta("learning_rate", format!("{:e}", self.lr));
        c.set_meta("lambda", self.amp_cfg.lambda);
        c.set_meta("policy_dims", dims(&self.policy.mean));
        c.set_meta("value_dims", dims(&self.value));
        c.set_meta("adam_steps", format!("{} {}", self.policy_opt.step, self.value_opt.step));
        c.set_meta("rng_word_pos", format!("{} {}", self.rng.get_word_pos(), self.disc_rng.get_word_pos()));
        c.push_array("policy.mean", self.policy.mean.params().to_vec());
        c.push_array("policy.log_std", self.policy.log_std.clone());
        c.push_array("value", self.value.params().to_vec());
        c.push_array("policy.adam.m", self.policy_opt.m.clone());
        c.push_array("policy.adam.v", self.policy_opt.v.clone());
        c.push_array("value.adam.m", self.value_opt.m.clone());
        c.push_array("value.adam.v", self.value_opt.v.clone());
        c.push_array("obs_norm.mean", self.obs_norm.mean.clone());
        c.push_array("obs_norm.var", self.obs_norm.var.clone());
        c.push_array("obs_norm.count", vec![self.obs_norm.count]);
        if let Some((disc, _, _)) = &self.style {
            c.set_meta("disc_dims", dims(disc.net()));
            c.set_meta("disc_adam_steps", disc.optimizer().step);
            c.push_array("disc", disc.net().params().to_vec());
            c.push_array("disc.adam.m", disc.optimizer().m.clone());
            c.push_array("disc.adam.v", disc.optimizer().v.clone());
        }
        c
    }

    /// Restores a checkpoint written by [`Trainer::checkpoint`]. Environments keep their
    /// current episodes; the iteration counter continues from the stored value.
    pub fn restore(&mut self, c: &Checkpoint) -> Result<()> {
        check_dims(c, "policy_dims", &self.policy.mean)?;
        check_dims(c, "value_dims", &self.value)?;
        let policy = Mlp::from_params(self.policy.mean.spec().clone(), c.array("policy.mean")?.to_vec()).map_err(as_checkpoint)?;
        let log_std = c.array("policy.log_std")?.to_vec();
        let value = Mlp::from_params(self.value.spec().clone(), c.array("value")?.to_vec()).map_err(as_checkpoint)?;
        let (pm, pv) = (c.array("policy.adam.m")?, c.array("policy.adam.v")?);
        let (vm, vv) = (c.array("value.adam.m")?, c.array("value.adam.v")?);
        let (nm, nv) = (c.array("obs_norm.mean")?, c.array("obs_norm.var")?);
        if log_std.len() != self.policy.act_dim()
            || pm.len() != self.policy_opt.m.len()
            || pv.len() != pm.len()
            || vm.len() != self.value_opt.m.len()
            || vv.len() != vm.len()
            || nm.len() != self.obs_norm.mean.len()
            || nv.len() != nm.len()
        {
            return Err(Error::Checkpoint("array lengths do not match the trainer layout".into()));
        }
        let parse_pair = |key: &str| -> Result<(u128, u128)> {
            let s = c.meta(key).ok_or_else(|| Error::Checkpoint(format!("missing `{key}`")))?;
            let mut it = s.split(' ').map(str::parse::<u128>);
            match (it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b))) => Ok((a, b)),
                _ => Err(Error::Checkpoint(format!("bad `{key}` value `{s}`"))),
            }
        };
        let (ps, vs) = parse_pair("adam_steps")?;
        let (rp, dp) = parse_pair("rng_word_pos")?;
        let meta_num =
            |key: &str| -> Result<f64> { c.meta(key).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Checkpoint(format!("missing or bad `{key}`"))) };
        let iteration = meta_num("iteration")? as usize;
        let env_steps = meta_num("env_steps")? as u64;
        let lr = meta_num("learning_rate")?;
        if let Some((disc, _, _)) = &mut self.style {
            check_dims(c, "disc_dims", disc.net())?;
            let net = Mlp::from_params(disc.net().spec().clone(), c.array("disc")?.to_vec()).map_err(as_checkpoint)?;
            let mut opt = disc.optimizer().clone();
            opt.m = c.array("disc.adam.m")?.to_vec();
            opt.v = c.array("disc.adam.v")?.to_vec();
            opt.step = meta_num("disc_adam_steps")? as u64;
            *disc = Discriminator::from_parts(net, opt, &self.amp_cfg)?;
        }
        self.policy = GaussianPolicy { mean: policy, log_std };
        self.value = value;
        self.policy_opt.m = pm.to_vec();
        self.policy_opt.v = pv.to_vec();
        self.policy_opt.step = ps as u64;
        self.value_opt.m = vm.to_vec();
        self.value_opt.v = vv.to_vec();
        self.value_opt.step = vs as u64;
        self.obs_norm = RunningNorm { mean: nm.to_vec(), var: nv.to_vec(), count: c.array("obs_norm.count")?.first().copied().unwrap_or(1e-4) };
        self.rng.set_word_pos(rp);
        self.disc_rng.set_word_pos(dp);
        self.iteration = iteration;
        self.env_steps = env_steps;
        self.lr = lr;
        self.policy_opt.lr = lr;
        self.value_opt.lr = lr;
        Ok(())
    }
}

fn dims(net: &Mlp) -> String {
    net.spec().widths().iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

fn check_dims(c: &Checkpoint, key: &str, net: &Mlp) -> Result<()> {
    match c.meta(key) {
        Some(d) if d == dims(net) => Ok(()),
        Some(d) => Err(Error::Checkpoint(format!("{key} {d} does not match configured {}", dims(net)))),
        None => Err(Error::Checkpoint(format!("missing `{key}`"))),
    }
}

fn clip_grad_norm(g: &mut [f64], max_norm: f64) {
    if !(max_norm > 0.0) {
        return;
    }
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

/// Loads the deterministic policy from a trainer checkpoint, checking its input and
/// output widths against the environment's.
pub fn load_policy_snapshot(c: &Checkpoint, obs_dim: usize, act_dim: usize) -> Result<PolicySnapshot> {
    let dims = c.meta("policy_dims").ok_or_else(|| Error::Checkpoint("missing `policy_dims`".into()))?;
    let widths: Vec<usize> =
        dims.split(',').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| Error::Checkpoint(format!("bad policy_dims `{dims}`")))?;
    if widths.len() < 2 || widths[0] != obs_dim || widths[widths.len() - 1] != act_dim {
        return Err(Error::Checkpoint(format!("policy dims {dims} do not match observation {obs_dim} / action {act_dim}")));
    }
    let spec = MlpSpec::new(obs_dim, widths[1..widths.len() - 1].to_vec(), act_dim);
    let mean = Mlp::from_params(spec, c.array("policy.mean")?.to_vec()).map_err(as_checkpoint)?;
    let log_std = c.array("policy.log_std")?.to_vec();
    let (nm, nv) = (c.array("obs_norm.mean")?, c.array("obs_norm.var")?);
    if log_std.len() != act_dim || nm.len() != obs_dim || nv.len() != obs_dim {
        return Err(Error::Checkpoint("snapshot arrays do not match observation/action dims".into()));
    }
    let count = c.array("obs_norm.count")?.first().copied().unwrap_or(1e-4);
    Ok(PolicySnapshot { policy: GaussianPolicy { mean, log_std }, obs_norm: RunningNorm { mean: nm.to_vec(), var: nv.to_vec(), count } })
}

fn as_checkpoint(e: Error) -> Error {
    Error::Checkpoint(e.to_string())
}
