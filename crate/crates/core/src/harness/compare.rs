use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::read_text;
use super::report::Aggregate;
use super::run::TRAIN_CSV;
use crate::error::{Error, Result};
use crate::ppo::IterationMetrics;

/// Rows of a training CSV, skipping comments and the column header.
pub fn read_training_csv(path: &Path) -> Result<Vec<IterationMetrics>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("iteration") || line.is_empty() {
            continue;
        }
        let m = IterationMetrics::parse_csv_row(line).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: "malformed training row".into(),
        })?;
        rows.push(m);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub iterations: Vec<usize>,
    pub pgrl: Vec<Aggregate>,
    pub rl: Vec<Aggregate>,
    /// Mean over runs of each run's mean episode reward over its last `window` iterations.
    pub pgrl_final: Aggregate,
    pub rl_final: Aggregate,
    pub window: usize,
}

impl CompareSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# pgrl-compare\n# format_version 1\n");
        let _ = writeln!(s, "# final_window {}", self.window);
        let _ = writeln!(s, "# pgrl_final {} {}", self.pgrl_final.mean, self.pgrl_final.std);
        let _ = writeln!(s, "# rl_final {} {}", self.rl_final.mean, self.rl_final.std);
        s.push_str("iteration,pgrl_mean,pgrl_std,rl_mean,rl_std\n");
        for (i, it) in self.iterations.iter().enumerate() {
            let _ = writeln!(s, "{it},{},{},{},{}", self.pgrl[i].mean, self.pgrl[i].std, self.rl[i].mean, self.rl[i].std);
        }
        s
    }

    pub fn summary_text(&self) -> String {
        format!(
            "final {}-iteration mean episode task reward: PGRL {:.4} +- {:.4}, RL {:.4} +- {:.4}\n",
            self.window, self.pgrl_final.mean, self.pgrl_final.std, self.rl_final.mean, self.rl_final.std
        )
    }
}

fn load_arm(dirs: &[PathBuf]) -> Result<Vec<Vec<IterationMetrics>>> {
    if dirs.is_empty() {
        return Err(Error::Config("each arm needs at least one run directory".into()));
    }
    dirs.iter()
        .map(|d| {
            let csv = d.join(TRAIN_CSV);
            if !csv.is_file() {
                return Err(Error::Config(format!("{} has no {TRAIN_CSV}", d.display())));
            }
            let rows = read_training_csv(&csv)?;
            if rows.is_empty() {
                return Err(Error::Config(format!("{} contains no iterations", csv.display())));
            }
            Ok(rows)
        })
        .collect()
}

fn final_mean(rows: &[IterationMetrics], window: usize) -> f64 {
    let tail: Vec<f64> = rows[rows.len().saturating_sub(window)..].iter().map(|m| m.episode_reward_mean).filter(|v| v.is_finite()).collect();
    Aggregate::of(&tail).mean
}

/// Aligns training logs by iteration and summarizes episode task reward per arm.
pub fn compare_runs(pgrl_dirs: &[PathBuf], rl_dirs: &[PathBuf], window: usize) -> Result<CompareSummary> {
    let pgrl = load_arm(pgrl_dirs)?;
    let rl = load_arm(rl_dirs)?;
    let grid: Vec<usize> = pgrl[0].iter().map(|m| m.iteration).collect();
    for (i, run) in pgrl.iter().chain(&rl).enumerate() {
        let g: Vec<usize> = run.iter().map(|m| m.iteration).collect();
        if g != grid {
            return Err(Error::Alignment(format!("run {i} has {} iterations ({:?}..{:?}) but the first has {}", g.len(), g.first(), g.last(), grid.len())));
        }
    }
    let per_iter = |arm: &[Vec<IterationMetrics>]| -> Vec<Aggregate> {
        (0..grid.len()).map(|k| Aggregate::of(&arm.iter().map(|r| r[k].episode_reward_mean).collect::<Vec<_>>())).collect()
    };
    let finals = |arm: &[Vec<IterationMetrics>]| Aggregate::of(&arm.iter().map(|r| final_mean(r, window)).collect::<Vec<_>>());
    Ok(CompareSummary { pgrl: per_iter(&pgrl), rl: per_iter(&rl), pgrl_final: finals(&pgrl), rl_final: finals(&rl), iterations: grid, window })
}
