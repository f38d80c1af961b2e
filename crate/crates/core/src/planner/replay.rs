use super::PlanTrajectory;
use crate::env::{EnvConfig, PivotEnv, RolloutMetrics};
use crate::error::Result;
use crate::sim::WorldParams;

/// Feeds a command sequence to an environment until it terminates or its episode ends;
/// the last command is held once the sequence is exhausted.
pub fn replay_commands(env: &mut PivotEnv, commands: &[[f64; 4]]) -> Result<RolloutMetrics> {
    let cfg = env.config().clone();
    let mut metrics = RolloutMetrics::start(&env.state().q.q_u, &cfg, *env.sample());
    let Some(&last) = commands.last() else { return Ok(metrics) };
    for t in 0..cfg.episode_length {
        let cmd = commands.get(t).copied().unwrap_or(last);
        let prev = env.command();
        let delta = std::array::from_fn(|i| cmd[i] - prev[i]);
        let out = env.step_command(cmd, delta)?;
        metrics.record(&out, &cfg);
        if out.done() {
            break;
        }
    }
    Ok(metrics)
}

/// Open-loop execution of a plan's stiffness commands in the dynamic simulator, under
/// the randomization of `env_cfg` drawn from stream `stream` of `seed`.
pub fn open_loop_replay(plan: &PlanTrajectory, world: &WorldParams, env_cfg: &EnvConfig, seed: u64, stream: u64) -> Result<RolloutMetrics> {
    let mut env = PivotEnv::new(world, env_cfg, seed, stream)?;
    let commands: Vec<[f64; 4]> = plan.steps.iter().map(|s| s.a).collect();
    replay_commands(&mut env, &commands)
}
