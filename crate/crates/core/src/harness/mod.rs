//! Run configuration, file glue and the evaluation protocol shared by the CLI and the
//! acceptance suite.

mod compare;
mod report;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amp::AmpConfig;
use crate::env::{EnvConfig, PivotEnv, RandomizationSpec};
use crate::error::{Error, Result};
use crate::planner::{extract_demo, plan, refine, write_demo, write_plan, Demonstration, FileHeader, PlanTrajectory, PlannerConfig, FORMAT_VERSION};
use crate::ppo::PpoConfig;
use crate::sim::{Configuration, WorldParams};

pub use compare::{compare_runs, read_training_csv, CompareSummary};
pub use report::{evaluate_policy, replay_report, Aggregate, EvalReport, REPORT_COLUMNS};
pub use run::{train, RunConfig, TrainSummary, FINAL_CHECKPOINT, TRAIN_CSV};

/// Trainer settings read from one TOML file with optional `[ppo]` and `[amp]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub ppo: PpoConfig,
    pub amp: AmpConfig,
}

impl TrainingConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: TrainingConfig = toml::from_str(s).map_err(|e| Error::Config(format!("training config: {e}")))?;
        c.ppo.validate()?;
        c.amp.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("training config serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical serialization, so formatting differences in the source file
/// do not change it.
pub fn config_hash(canonical_toml: &str) -> String {
    sha256_hex(canonical_toml.as_bytes())[..16].to_string()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_world(path: Option<&Path>) -> Result<WorldParams> {
    match path {
        Some(p) => WorldParams::from_toml_str(&read_text(p)?),
        None => Ok(WorldParams::default()),
    }
}

pub fn load_env_config(path: Option<&Path>) -> Result<EnvConfig> {
    match path {
        Some(p) => EnvConfig::from_toml_str(&read_text(p)?),
        None => Ok(EnvConfig::default()),
    }
}

pub fn load_training_config(path: Option<&Path>) -> Result<TrainingConfig> {
    match path {
        Some(p) => TrainingConfig::from_toml_str(&read_text(p)?),
        None => Ok(TrainingConfig::default()),
    }
}

pub fn load_planner_config(path: Option<&Path>) -> Result<PlannerConfig> {
    match path {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| Error::Config(format!("planner config: {e}"))),
        None => Ok(PlannerConfig::default()),
    }
}

pub fn scene_hash(world: &WorldParams) -> String {
    config_hash(&world.to_toml_string())
}

/// Resting start of the task: nominal box pose with the arms at home.
pub fn nominal_start(world: &WorldParams, env_cfg: &EnvConfig) -> Result<Configuration> {
    let quiet = EnvConfig { randomization: RandomizationSpec::none(), ..env_cfg.clone() };
    Ok(PivotEnv::new(world, &quiet, 0, 0)?.state().q)
}

/// Result of the plan, refine and demo-extraction pipeline.
#[derive(Debug, Clone)]
pub struct PlanArtifacts {
    pub raw: PlanTrajectory,
    pub refined: PlanTrajectory,
    pub demo: Demonstration,
    pub header: FileHeader,
}

/// Plans from the nominal start to the goal of `env_cfg`, refines to the control period
/// and projects the robot-only demonstration.
pub fn plan_pipeline(world: &WorldParams, env_cfg: &EnvConfig, planner: &PlannerConfig, seed: u64) -> Result<PlanArtifacts> {
    use rand::SeedableRng;
    let start = nominal_start(world, env_cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let raw = plan(&start, &env_cfg.goal, world, planner, &mut rng)?;
    let refined = refine(&raw, &env_cfg.goal, world, planner, world.control_period(), &mut rng)?;
    let hash = scene_hash(world);
    let demo = extract_demo(&refined, seed, &hash);
    let header = FileHeader { format_version: FORMAT_VERSION, scene_hash: hash, seed, dt: refined.dt };
    Ok(PlanArtifacts { raw, refined, demo, header })
}

/// Runs [`plan_pipeline`] and writes the refined plan and the demonstration.
pub fn cli_plan(world: &WorldParams, env_cfg: &EnvConfig, planner: &PlannerConfig, seed: u64, plan_path: &Path, demo_path: &Path) -> Result<PlanArtifacts> {
    let artifacts = plan_pipeline(world, env_cfg, planner, seed)?;
    for p in [plan_path, demo_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    write_plan(plan_path, &artifacts.refined, &artifacts.header)?;
    write_demo(demo_path, &artifacts.demo)?;
    Ok(artifacts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSummary {
    pub networks: usize,
    pub max_error: f64,
}

/// Finite-difference check of `networks` random MLPs (every width at most 16) on inputs
/// whose hidden pre-activations all stay more than `10 h` away from the ReLU kink.
pub fn gradcheck_suite(seed: u64, networks: usize, h: f64) -> Result<GradcheckSummary> {
    use crate::nn::{finite_diff_check, min_kink_margin, Mlp, MlpSpec, Tensor};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    let mut checked = 0;
    let mut draws = 0;
    while checked < networks {
        draws += 1;
        if draws > 100 * networks.max(1) {
            return Err(Error::State("no kink-free input found for the random networks".into()));
        }
        let input_dim = rng.random_range(1..=16);
        let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=16)).collect();
        let spec = MlpSpec::new(input_dim, hidden, rng.random_range(1..=4));
        let mlp = Mlp::init(spec, 1.0, &mut rng)?;
        // Networks without a kink-free input (a fully inactive layer) are redrawn.
        for _ in 0..1000 {
            let batch = rng.random_range(1..=4);
            let x = Tensor::matrix(batch, input_dim, (0..batch * input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            if min_kink_margin(&mlp, &x)? > 10.0 * h {
                max_error = max_error.max(finite_diff_check(&mlp, &x, h)?);
                checked += 1;
                break;
            }
        }
    }
    Ok(GradcheckSummary { networks, max_error })
}
