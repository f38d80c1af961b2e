use rand::Rng;

use super::rrt::config_valid;
use super::{PlanStep, PlanTrajectory, PlannerConfig};
use crate::error::{Error, Result};
use crate::sim::{quasi_dynamic_step, wrap_angle, Configuration, WorldParams};

/// Re-simulates a plan from its first configuration. Teleport transitions move the
/// robot kinematically to the stored next `q_a` with the box held; all others apply
/// the stored command through one quasi-dynamic step.
pub fn replay_plan(plan: &PlanTrajectory, world: &WorldParams) -> Result<Vec<Configuration>> {
    let Some(first) = plan.steps.first() else { return Ok(Vec::new()) };
    let mut q = first.config();
    let mut out = vec![q];
    for w in plan.steps.windows(2) {
        q = if w[0].teleport { Configuration::new(w[1].q_a, q.q_u) } else { quasi_dynamic_step(&q, &w[0].a, world)? };
        out.push(q);
    }
    Ok(out)
}

/// `n` points linearly spaced from `from` (exclusive) to `to` (inclusive).
pub fn resample_linear(from: &[f64; 4], to: &[f64; 4], n: usize) -> Vec<[f64; 4]> {
    (1..=n)
        .map(|k| {
            let f = k as f64 / n as f64;
            std::array::from_fn(|i| if k == n { to[i] } else { from[i] + f * (to[i] - from[i]) })
        })
        .collect()
}

fn steps_needed(from: &[f64; 4], to: &[f64; 4], max_step: f64) -> usize {
    let span = from.iter().zip(to).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ((span / max_step - 1e-9).ceil() as usize).max(1)
}

/// Replaces every teleport transition by a kinematic linear joint interpolation that
/// respects the per-step joint limit; the box pose is held along it.
fn expand_teleports(plan: &PlanTrajectory, max_step: f64) -> PlanTrajectory {
    let mut steps = Vec::with_capacity(plan.steps.len());
    for (t, st) in plan.steps.iter().enumerate() {
        if st.teleport && t + 1 < plan.steps.len() {
            let next = plan.steps[t + 1].q_a;
            let points = resample_linear(&st.q_a, &next, steps_needed(&st.q_a, &next, max_step));
            let mut q_a = st.q_a;
            for p in &points[..points.len() - 1] {
                steps.push(PlanStep { q_a, q_u: st.q_u, a: *p, teleport: true });
                q_a = *p;
            }
            steps.push(PlanStep { q_a, q_u: st.q_u, a: next, teleport: true });
        } else {
            steps.push(*st);
        }
    }
    PlanTrajectory { steps, dt: plan.dt }
}

fn goal_error(q_u: &[f64; 3], goal: &[f64; 3], cfg: &PlannerConfig) -> f64 {
    let dt = (q_u[0] - goal[0]).hypot(q_u[1] - goal[1]) / cfg.goal_tolerance_trans;
    let dr = wrap_angle(q_u[2] - goal[2]).abs() / cfg.goal_tolerance_rot;
    dt.max(dr)
}

/// Simulates `commands` from step `i` of `prefix`, then the remaining plan from `tail`.
fn resimulate(prefix: &[PlanStep], commands: &[[f64; 4]], tail: &[PlanStep], world: &WorldParams, cfg: &PlannerConfig) -> Option<Vec<PlanStep>> {
    let mut steps: Vec<PlanStep> = prefix.to_vec();
    let mut q = steps.last()?.config();
    let push = |steps: &mut Vec<PlanStep>, q: Configuration, a: [f64; 4], teleport: bool| {
        let last = steps.last_mut().expect("non-empty prefix");
        last.a = a;
        last.teleport = teleport;
        steps.push(PlanStep { q_a: q.q_a, q_u: q.q_u, a, teleport: false });
    };
    for c in commands {
        q = quasi_dynamic_step(&q, c, world).ok()?;
        if !config_valid(&q, world, cfg) {
            return None;
        }
        push(&mut steps, q, *c, false);
    }
    for w in tail.windows(2) {
        let (a, teleport) = (w[0].a, w[0].teleport);
        q = if teleport { Configuration::new(w[1].q_a, q.q_u) } else { quasi_dynamic_step(&q, &a, world).ok()? };
        if !config_valid(&q, world, cfg) {
            return None;
        }
        push(&mut steps, q, a, teleport);
    }
    if let (Some(last), Some(orig_last)) = (steps.last_mut(), tail.last()) {
        last.a = orig_last.a;
    }
    Some(steps)
}

/// Random shortcutting of non-teleport segments followed by uniform resampling at
/// `control_period`. A shortcut replaces the commands between two steps by a shorter
/// linear command ramp; it is kept only if re-simulating the rest of the plan stays
/// valid, ends no farther from the goal and shortens the joint path.
pub fn refine<R: Rng + ?Sized>(
    plan: &PlanTrajectory,
    goal: &[f64; 3],
    world: &WorldParams,
    cfg: &PlannerConfig,
    control_period: f64,
    rng: &mut R,
) -> Result<PlanTrajectory> {
    if !(control_period > 0.0) {
        return Err(Error::Precondition(format!("control period must be > 0, got {control_period}")));
    }
    let mut cur = expand_teleports(plan, cfg.max_joint_step);
    if cur.steps.len() >= 3 {
        let baseline = goal_error(&cur.steps.last().expect("non-empty").q_u, goal, cfg);
        let allowed = baseline.max(1.0);
        for _ in 0..cfg.shortcut_attempts {
            let n = cur.steps.len();
            if n < 3 {
                break;
            }
            let i = rng.random_range(0..n - 2);
            let j = rng.random_range(i + 2..n);
            if cur.steps[i..j].iter().any(|s| s.teleport) {
                continue;
            }
            let prior = if i > 0 { cur.steps[i - 1].a } else { cur.steps[i].q_a };
            let target = cur.steps[j - 1].a;
            let m = steps_needed(&prior, &target, cfg.max_joint_step);
            if m >= j - i {
                continue;
            }
            let commands = resample_linear(&prior, &target, m);
            let Some(steps) = resimulate(&cur.steps[..=i], &commands, &cur.steps[j..], world, cfg) else { continue };
            let candidate = PlanTrajectory { steps, dt: cur.dt };
            let err = goal_error(&candidate.steps.last().expect("non-empty").q_u, goal, cfg);
            if err <= allowed && candidate.path_length() < cur.path_length() {
                cur = candidate;
            }
        }
    }
    Ok(resample_uniform(&cur, control_period))
}

/// Linear resampling of every field at a new period; teleport flags follow the
/// interval a sample falls in.
pub fn resample_uniform(plan: &PlanTrajectory, dt: f64) -> PlanTrajectory {
    if plan.steps.len() < 2 || (plan.dt - dt).abs() <= 1e-12 * dt {
        return PlanTrajectory { steps: plan.steps.clone(), dt };
    }
    let duration = plan.dt * (plan.steps.len() - 1) as f64;
    let count = (duration / dt + 1e-9).floor() as usize + 1;
    let lerp = |a: f64, b: f64, f: f64| a + f * (b - a);
    let steps = (0..count)
        .map(|k| {
            let t = k as f64 * dt / plan.dt;
            let idx = (t.floor() as usize).min(plan.steps.len() - 2);
            let f = t - idx as f64;
            let (s0, s1) = (&plan.steps[idx], &plan.steps[idx + 1]);
            PlanStep {
                q_a: std::array::from_fn(|i| lerp(s0.q_a[i], s1.q_a[i], f)),
                q_u: std::array::from_fn(|i| lerp(s0.q_u[i], s1.q_u[i], f)),
                a: std::array::from_fn(|i| lerp(s0.a[i], s1.a[i], f)),
                teleport: s0.teleport,
            }
        })
        .collect();
    PlanTrajectory { steps, dt }
}
