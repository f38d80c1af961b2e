use std::fmt::Write as _;

use crate::env::{EnvConfig, Environment, PivotEnv, RandomizationSample, RolloutMetrics};
use crate::error::{Error, Result};
use crate::par;
use crate::planner::{replay_commands, PlanTrajectory};
use crate::ppo::PolicySnapshot;
use crate::sim::WorldParams;

pub const REPORT_COLUMNS: [&str; 16] = [
    "index",
    "task_return",
    "min_trans",
    "min_rot",
    "final_trans",
    "final_rot",
    "success",
    "terminated",
    "steps",
    "disc_dx",
    "disc_dy",
    "rotation",
    "gravity_disturbance",
    "dimension_scale",
    "mass_scale",
    "friction_scale",
];

/// Metrics averaged in the aggregate block, in order.
const AGGREGATED: [&str; 7] = ["task_return", "min_trans", "min_rot", "final_trans", "final_rot", "success", "steps"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// Mean and population standard deviation; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Aggregate { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Aggregate { mean, std }
    }
}

/// Per-rollout results of a policy evaluation or a plan replay, with metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<RolloutMetrics>,
}

fn metric(m: &RolloutMetrics, name: &str) -> f64 {
    match name {
        "task_return" => m.task_return,
        "min_trans" => m.min_trans,
        "min_rot" => m.min_rot,
        "final_trans" => m.final_trans,
        "final_rot" => m.final_rot,
        "success" => f64::from(u8::from(m.success)),
        "steps" => m.steps as f64,
        _ => unreachable!("unknown metric {name}"),
    }
}

impl EvalReport {
    pub fn success_rate(&self) -> f64 {
        self.aggregate("success").mean
    }

    pub fn aggregate(&self, name: &str) -> Aggregate {
        Aggregate::of(&self.rows.iter().map(|m| metric(m, name)).collect::<Vec<_>>())
    }

    pub fn aggregates(&self) -> Vec<(&'static str, Aggregate)> {
        AGGREGATED.iter().map(|n| (*n, self.aggregate(n))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# pgrl-eval-report\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k} {v}");
        }
        s.push_str(&REPORT_COLUMNS.join(","));
        s.push('\n');
        for (i, m) in self.rows.iter().enumerate() {
            let _ = write!(
                s,
                "{i},{},{},{},{},{},{},{},{}",
                m.task_return,
                m.min_trans,
                m.min_rot,
                m.final_trans,
                m.final_rot,
                u8::from(m.success),
                u8::from(m.terminated),
                m.steps
            );
            for v in m.sample.values() {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s.push_str("# aggregate,metric,mean,std\n");
        for (name, a) in self.aggregates() {
            let _ = writeln!(s, "# aggregate,{name},{},{}", a.mean, a.std);
        }
        s
    }

    /// Parses rows and metadata written by [`EvalReport::to_csv`]; the aggregate block is
    /// returned separately so callers can check it against the rows.
    pub fn from_csv(text: &str) -> Result<(Self, Vec<(String, Aggregate)>)> {
        let bad = |line: usize, message: String| Error::Parse { path: "<report>".into(), line, message };
        let mut meta = Vec::new();
        let mut rows = Vec::new();
        let mut aggregates = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            if let Some(rest) = line.strip_prefix("# aggregate,") {
                let f: Vec<&str> = rest.split(',').collect();
                if f[0] == "metric" {
                    continue;
                }
                let (Some(mean), Some(std)) = (f.get(1).and_then(|v| v.parse().ok()), f.get(2).and_then(|v| v.parse().ok())) else {
                    return Err(bad(ln, format!("bad aggregate line `{line}`")));
                };
                aggregates.push((f[0].to_string(), Aggregate { mean, std }));
            } else if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(' ') {
                    meta.push((k.to_string(), v.to_string()));
                }
            } else if !header_seen {
                if line != REPORT_COLUMNS.join(",") {
                    return Err(bad(ln, "unexpected column header".into()));
                }
                header_seen = true;
            } else {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != REPORT_COLUMNS.len() {
                    return Err(bad(ln, format!("expected {} fields, found {}", REPORT_COLUMNS.len(), f.len())));
                }
                let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad(ln, format!("bad number `{}`", f[j])));
                let flag = |j: usize| match f[j] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(bad(ln, format!("bad flag `{other}`"))),
                };
                rows.push(RolloutMetrics {
                    task_return: num(1)?,
                    min_trans: num(2)?,
                    min_rot: num(3)?,
                    final_trans: num(4)?,
                    final_rot: num(5)?,
                    success: flag(6)?,
                    terminated: flag(7)?,
                    steps: f[8].parse().map_err(|_| bad(ln, format!("bad step count `{}`", f[8])))?,
                    sample: RandomizationSample {
                        disc_offset: [num(9)?, num(10)?],
                        rotation: num(11)?,
                        gravity_disturbance: num(12)?,
                        dimension_scale: num(13)?,
                        mass_scale: num(14)?,
                        friction_scale: num(15)?,
                    },
                });
            }
        }
        Ok((EvalReport { meta, rows }, aggregates))
    }
}

fn base_meta(kind: &str, world: &WorldParams, env_cfg: &EnvConfig, seed: u64, n: usize) -> Vec<(String, String)> {
    vec![
        ("format_version".into(), "1".into()),
        ("kind".into(), kind.into()),
        ("seed".into(), seed.to_string()),
        ("n".into(), n.to_string()),
        ("scene_hash".into(), super::scene_hash(world)),
        ("env_hash".into(), super::config_hash(&env_cfg.to_toml_string())),
        ("success_trans".into(), env_cfg.success_trans.to_string()),
        ("success_rot".into(), env_cfg.success_rot.to_string()),
    ]
}

/// Rolls out the deterministic policy on `n` randomized environments; environment `i`
/// uses stream `i` of `seed`.
pub fn evaluate_policy(snapshot: &PolicySnapshot, world: &WorldParams, env_cfg: &EnvConfig, seed: u64, n: usize, parallel: bool) -> Result<EvalReport> {
    let rows = par::map_range(n, parallel, |i| -> Result<RolloutMetrics> {
        let mut env = PivotEnv::new(world, env_cfg, seed, i as u64)?;
        let mut metrics = RolloutMetrics::start(&env.state().q.q_u, env_cfg, *env.sample());
        let mut obs = env.observe();
        loop {
            let action = snapshot.act(std::slice::from_ref(&obs))?.remove(0);
            let out = env.step(&action)?;
            metrics.record(&out, env_cfg);
            if out.done() {
                return Ok(metrics);
            }
            obs = out.observation;
        }
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { meta: base_meta("policy", world, env_cfg, seed, n), rows })
}

/// Open-loop replay of a plan's commands on `n` environments drawn exactly like
/// [`evaluate_policy`] draws them.
pub fn replay_report(plan: &PlanTrajectory, world: &WorldParams, env_cfg: &EnvConfig, seed: u64, n: usize, parallel: bool) -> Result<EvalReport> {
    let commands: Vec<[f64; 4]> = plan.steps.iter().map(|s| s.a).collect();
    let rows = par::map_range(n, parallel, |i| -> Result<RolloutMetrics> {
        let mut env = PivotEnv::new(world, env_cfg, seed, i as u64)?;
        replay_commands(&mut env, &commands)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { meta: base_meta("replay", world, env_cfg, seed, n), rows })
}
