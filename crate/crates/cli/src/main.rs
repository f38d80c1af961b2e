use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgrl_core::env::{EnvConfig, RandomizationSpec, ACT_DIM, OBS_DIM};
use pgrl_core::harness::{self, RunConfig};
use pgrl_core::nn::Checkpoint;
use pgrl_core::planner::read_plan;
use pgrl_core::ppo::load_policy_snapshot;
use pgrl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pgrl", version, about = "Plan-guided RL for a planar pivot-and-lift task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct SceneArgs {
    /// Scene description (TOML); defaults to the built-in scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Environment config (TOML); defaults to the built-in task.
    #[arg(long)]
    env: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Plan through contact, refine, and write the plan and the robot-only demo.
    Plan {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        planner: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_nodes: Option<usize>,
        #[arg(long)]
        max_seconds: Option<f64>,
        #[arg(long, default_value = "plan.csv")]
        plan_out: PathBuf,
        #[arg(long, default_value = "demo.csv")]
        demo_out: PathBuf,
    },
    /// Train a policy with PPO and, for lambda < 1, the adversarial style reward.
    Train {
        #[command(flatten)]
        scene: SceneArgs,
        /// Trainer config (TOML with [ppo] and [amp] tables).
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        demo: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Single-threaded and byte-reproducible.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's deterministic policy on randomized environments.
    Eval {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        deterministic: bool,
    },
    /// Replay a plan's commands open loop, in the evaluation report schema.
    Replay {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw the training randomization; otherwise the nominal scene is used.
        #[arg(long)]
        randomize: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        deterministic: bool,
    },
    /// Align training logs of the PGRL and RL arms and summarize them.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        pgrl: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        rl: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        networks: usize,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

fn load(scene: &SceneArgs) -> Result<(pgrl_core::sim::WorldParams, EnvConfig)> {
    Ok((harness::load_world(scene.scene.as_deref())?, harness::load_env_config(scene.env.as_deref())?))
}

fn with_checkpoint_meta(report: &mut harness::EvalReport, key: &str, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    report.meta.push((key.into(), harness::sha256_hex(&bytes)[..16].to_string()));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan { scene, planner, seed, max_nodes, max_seconds, plan_out, demo_out } => {
            let (world, env_cfg) = load(&scene)?;
            let mut cfg = harness::load_planner_config(planner.as_deref())?;
            if let Some(n) = max_nodes {
                cfg.max_nodes = n;
            }
            if max_seconds.is_some() {
                cfg.max_seconds = max_seconds;
            }
            let a = harness::cli_plan(&world, &env_cfg, &cfg, seed, &plan_out, &demo_out)?;
            let last = a.refined.steps.last().map(|s| s.q_u).unwrap_or(env_cfg.goal);
            let (dt, dr) = pgrl_core::env::goal_distances(&last, &env_cfg.goal);
            println!(
                "plan: {} raw steps ({} teleports) -> {} refined steps; final goal distance {dt:.4} m, {dr:.4} rad",
                a.raw.len(),
                a.raw.teleport_count(),
                a.refined.len()
            );
            println!("wrote {} and {}", plan_out.display(), demo_out.display());
        }
        Command::Train { scene, training, demo, lambda, iterations, seed, out, deterministic, resume } => {
            let run =
                RunConfig { scene: scene.scene, env: scene.env, training, demo, lambda, max_iterations: iterations, seed, out_dir: out, deterministic, resume };
            let summary = harness::train(&run, |m| {
                if m.iteration % 10 == 0 {
                    eprintln!(
                        "iter {:5}  episode reward {:9.3}  style {:.3}  kl {:.2e}  lr {:.2e}",
                        m.iteration, m.episode_reward_mean, m.style_reward, m.approx_kl, m.learning_rate
                    );
                }
            })?;
            println!("trained {} iterations; log {}; checkpoint {}", summary.iterations, summary.csv.display(), summary.final_checkpoint.display());
        }
        Command::Eval { scene, checkpoint, n, seed, out, deterministic } => {
            let (world, env_cfg) = load(&scene)?;
            let snapshot = load_policy_snapshot(&Checkpoint::load(&checkpoint)?, OBS_DIM, ACT_DIM)?;
            let mut report = harness::evaluate_policy(&snapshot, &world, &env_cfg, seed, n, !deterministic)?;
            with_checkpoint_meta(&mut report, "checkpoint_hash", &checkpoint)?;
            harness::write_text(&out, &report.to_csv())?;
            println!("{n} rollouts, success rate {:.3}; wrote {}", report.success_rate(), out.display());
        }
        Command::Replay { scene, plan, n, seed, randomize, out, deterministic } => {
            let (world, mut env_cfg) = load(&scene)?;
            if !randomize {
                env_cfg.randomization = RandomizationSpec::none();
            }
            let (trajectory, _) = read_plan(&plan)?;
            let mut report = harness::replay_report(&trajectory, &world, &env_cfg, seed, n, !deterministic)?;
            with_checkpoint_meta(&mut report, "plan_hash", &plan)?;
            report.meta.push(("randomized".into(), randomize.to_string()));
            harness::write_text(&out, &report.to_csv())?;
            println!("{n} replays, success rate {:.3}; wrote {}", report.success_rate(), out.display());
        }
        Command::Compare { pgrl, rl, window, out } => {
            let summary = harness::compare_runs(&pgrl, &rl, window)?;
            harness::write_text(&out, &summary.to_csv())?;
            print!("{}", summary.summary_text());
        }
        Command::Gradcheck { seed, networks, h, tolerance } => {
            let s = harness::gradcheck_suite(seed, networks, h)?;
            println!("{} networks, max relative error {:.3e} (tolerance {tolerance:.0e})", s.networks, s.max_error);
            if s.max_error > tolerance {
                return Err(Error::State(format!("gradient check failed: {:.3e} > {tolerance:.0e}", s.max_error)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
