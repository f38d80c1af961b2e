use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{config_hash, load_env_config, load_training_config, load_world, read_text, scene_hash, sha256_hex, write_text, TrainingConfig};
use crate::env::{EnvConfig, PivotEnv};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::planner::demo_from_str;
use crate::ppo::{IterationMetrics, Trainer, TrainerSetup};
use crate::sim::WorldParams;

/// Everything `train` needs; unset paths fall back to the built-in defaults.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    pub env: Option<PathBuf>,
    pub training: Option<PathBuf>,
    pub demo: Option<PathBuf>,
    /// Overrides `amp.lambda` of the training config.
    pub lambda: Option<f64>,
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Single-threaded, wall-clock free logging.
    pub deterministic: bool,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub iterations: usize,
    pub final_checkpoint: PathBuf,
    pub csv: PathBuf,
    pub last: Option<IterationMetrics>,
}

#[derive(Serialize)]
struct RunEcho<'a> {
    run: RunMeta,
    scene: &'a WorldParams,
    env: &'a EnvConfig,
    training: &'a TrainingConfig,
}

#[derive(Serialize)]
struct RunMeta {
    format_version: u32,
    seed: u64,
    lambda: f64,
    deterministic: bool,
    scene_hash: String,
    env_hash: String,
    training_hash: String,
    demo_hash: String,
    demo_path: String,
}

pub const TRAIN_CSV: &str = "train.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

fn checkpoint_name(iteration: usize) -> String {
    format!("checkpoint_{iteration:06}.ckpt")
}

/// Trains a policy on the pivot task and writes the config echo, training CSV and
/// checkpoints into `run.out_dir`.
pub fn train(run: &RunConfig, mut on_row: impl FnMut(&IterationMetrics)) -> Result<TrainSummary> {
    let world = load_world(run.scene.as_deref())?;
    let env_cfg = load_env_config(run.env.as_deref())?;
    let mut training = load_training_config(run.training.as_deref())?;
    if let Some(l) = run.lambda {
        training.amp.lambda = l;
    }
    if let Some(n) = run.max_iterations {
        training.ppo.max_iterations = n;
    }
    training.amp.validate()?;
    let lambda = training.amp.lambda;
    let (demo, demo_hash) = match (&run.demo, lambda < 1.0) {
        (Some(p), true) => {
            let text = read_text(p)?;
            let d = demo_from_str(p, &text)?;
            if d.q_a.len() < 2 {
                return Err(Error::Config(format!("demonstration {} has fewer than two steps", p.display())));
            }
            (Some(d.q_a), sha256_hex(text.as_bytes())[..16].to_string())
        }
        (None, true) => return Err(Error::Config("a demonstration file is required when lambda < 1".into())),
        // With lambda = 1 the demo is never read, so its content cannot leak into training.
        (_, false) => (None, "none".to_string()),
    };

    let echo = RunEcho {
        run: RunMeta {
            format_version: 1,
            seed: run.seed,
            lambda,
            deterministic: run.deterministic,
            scene_hash: scene_hash(&world),
            env_hash: config_hash(&env_cfg.to_toml_string()),
            training_hash: config_hash(&training.to_toml_string()),
            demo_hash: demo_hash.clone(),
            demo_path: run.demo.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        },
        scene: &world,
        env: &env_cfg,
        training: &training,
    };
    std::fs::create_dir_all(&run.out_dir).map_err(|e| Error::io(&run.out_dir, e))?;
    let echo_text = toml::to_string(&echo).map_err(|e| Error::Config(format!("config echo: {e}")))?;
    write_text(&run.out_dir.join("config.toml"), &echo_text)?;

    let envs = (0..training.ppo.num_envs as u64).map(|i| PivotEnv::new(&world, &env_cfg, run.seed, i)).collect::<Result<Vec<_>>>()?;
    let setup = TrainerSetup {
        ppo: training.ppo.clone(),
        amp: training.amp.clone(),
        demo,
        seed: run.seed,
        parallel: !run.deterministic,
        deterministic: run.deterministic,
    };
    let mut trainer = Trainer::new(envs, setup)?;

    let csv_path = run.out_dir.join(TRAIN_CSV);
    let mut header = String::new();
    let _ = writeln!(header, "# pgrl-train\n# format_version 1\n# seed {}\n# lambda {lambda}", run.seed);
    let _ = writeln!(header, "# scene_hash {}\n# env_hash {}", echo.run.scene_hash, echo.run.env_hash);
    let _ = writeln!(header, "# training_hash {}\n# demo_hash {demo_hash}", echo.run.training_hash);
    let mut kept_rows = Vec::new();
    if let Some(path) = &run.resume {
        let ckpt = Checkpoint::load(path)?;
        trainer.restore(&ckpt)?;
        if let Ok(text) = std::fs::read_to_string(&csv_path) {
            kept_rows = text
                .lines()
                .filter(|l| !l.starts_with('#') && !l.starts_with("iteration"))
                .filter(|l| IterationMetrics::parse_csv_row(l).is_some_and(|m| m.iteration <= trainer.iteration()))
                .map(str::to_string)
                .collect();
        }
    }
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut csv = std::io::BufWriter::new(file);
    let io = |e| Error::io(&csv_path, e);
    write!(csv, "{header}{}\n", IterationMetrics::CSV_HEADER).map_err(io)?;
    for row in &kept_rows {
        writeln!(csv, "{row}").map_err(io)?;
    }
    csv.flush().map_err(io)?;

    let every = training.ppo.checkpoint_every;
    let out_dir = run.out_dir.clone();
    let mut last = None;
    trainer.train(|tr, m| {
        writeln!(csv, "{}", m.csv_row()).map_err(io)?;
        csv.flush().map_err(io)?;
        if every > 0 && m.iteration % every == 0 {
            save(tr, &out_dir.join(checkpoint_name(m.iteration)), &echo.run)?;
        }
        on_row(m);
        last = Some(m.clone());
        Ok(())
    })?;
    let final_checkpoint = run.out_dir.join(FINAL_CHECKPOINT);
    save(&trainer, &final_checkpoint, &echo.run)?;
    Ok(TrainSummary { iterations: trainer.iteration(), final_checkpoint, csv: csv_path, last })
}

fn save(trainer: &Trainer<PivotEnv>, path: &Path, meta: &RunMeta) -> Result<()> {
    let mut c = trainer.checkpoint();
    c.set_meta("scene_hash", &meta.scene_hash);
    c.set_meta("env_hash", &meta.env_hash);
    c.set_meta("training_hash", &meta.training_hash);
    c.set_meta("demo_hash", &meta.demo_hash);
    c.save(path)
}
