use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn pgrl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pgrl")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes() {
    let out = pgrl(&["gradcheck", "--networks", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn missing_scene_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let out = pgrl(&["plan", "--scene", "/nonexistent/scene.toml", "--plan-out", path(&dir.path().join("p.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_scene_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("scene.toml");
    std::fs::write(&scene, "gravity = 9.81\nbogus = 1\n").unwrap();
    let out = pgrl(&["plan", "--scene", path(&scene)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
}

#[test]
fn planning_failure_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let out = pgrl(&["plan", "--max-nodes", "1", "--plan-out", path(&dir.path().join("p.csv")), "--demo-out", path(&dir.path().join("d.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d_trans"));
}

#[test]
fn replay_rejects_plan_without_teleport_column() {
    let dir = TempDir::new().unwrap();
    let plan = dir.path().join("plan.csv");
    std::fs::write(
        &plan,
        "# pgrl-plan\n# format_version 1\n# scene_hash x\n# seed 0\n# dt 0.0666\n# columns t qa0 qa1 qa2 qa3 qu_x qu_z qu_theta a0 a1 a2 a3 teleport\n0 0.5 -2.6 -2.6 2.4 0.35 0.13 0 0.5 -2.6 -2.6 2.4\n",
    )
    .unwrap();
    let out = pgrl(&["replay", "--plan", path(&plan), "--out", path(&dir.path().join("r.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":7:"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_then_eval_then_compare() {
    let dir = TempDir::new().unwrap();
    let training = dir.path().join("training.toml");
    std::fs::write(&training, "[ppo]\nnum_envs = 2\nhorizon = 8\nminibatch_size = 8\nepochs = 1\npolicy_hidden = [8]\nvalue_hidden = [8]\n").unwrap();
    let env = dir.path().join("env.toml");
    std::fs::write(&env, "episode_length = 10\n").unwrap();
    for (name, seed) in [("a", "1"), ("b", "2")] {
        let out = pgrl(&[
            "train",
            "--training",
            path(&training),
            "--env",
            path(&env),
            "--lambda",
            "1.0",
            "--iterations",
            "2",
            "--seed",
            seed,
            "--deterministic",
            "--out",
            path(&dir.path().join(name)),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ckpt = dir.path().join("a/final.ckpt");
    let mut reports = Vec::new();
    for name in ["e1.csv", "e2.csv"] {
        let report = dir.path().join(name);
        let out = pgrl(&["eval", "--env", path(&env), "--checkpoint", path(&ckpt), "--n", "3", "--seed", "5", "--deterministic", "--out", path(&report)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let cmp = dir.path().join("cmp.csv");
    let out = pgrl(&["compare", "--pgrl", path(&dir.path().join("a")), "--rl", path(&dir.path().join("b")), "--out", path(&cmp)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&cmp).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = pgrl(&["compare", "--pgrl", path(&empty), "--rl", path(&dir.path().join("b")), "--out", path(&cmp)]);
    assert_eq!(out.status.code(), Some(2));
}
