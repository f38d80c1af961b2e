use super::{Environment, StepOutcome};
use crate::error::Result;
use crate::par;

/// A batch of independent environments stepped in lockstep.
#[derive(Debug, Clone)]
pub struct VecEnv<E> {
    envs: Vec<E>,
    observations: Vec<Vec<f64>>,
    parallel: bool,
}

impl<E: Environment> VecEnv<E> {
    pub fn new(envs: Vec<E>, parallel: bool) -> Self {
        let observations = envs.iter().map(Environment::observe).collect();
        VecEnv { envs, observations, parallel }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[E] {
        &self.envs
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn style_states(&self) -> Vec<Vec<f64>> {
        self.envs.iter().map(Environment::style_state).collect()
    }

    /// Steps every environment with its action. Observations are updated for successful
    /// steps; failed environments keep their previous observation.
    pub fn step(&mut self, actions: &[Vec<f64>]) -> Vec<Result<StepOutcome>> {
        assert_eq!(actions.len(), self.envs.len(), "one action per environment");
        let out = par::map_mut(&mut self.envs, self.parallel, |i, env| env.step(&actions[i]));
        for (obs, o) in self.observations.iter_mut().zip(&out) {
            if let Ok(o) = o {
                obs.clone_from(&o.observation);
            }
        }
        out
    }

    /// Resets every environment whose flag is set and refreshes its observation; the
    /// others are left untouched.
    pub fn reset_done(&mut self, done: &[bool]) -> &[Vec<f64>] {
        assert_eq!(done.len(), self.envs.len(), "one flag per environment");
        for ((env, obs), &d) in self.envs.iter_mut().zip(&mut self.observations).zip(done) {
            if d {
                *obs = env.reset();
            }
        }
        &self.observations
    }
}
