mod io {
    use std::path::Path;

    use proptest::prelude::*;

    use pgrl_core::error::Error;
    use pgrl_core::planner::*;

    fn header() -> FileHeader {
        FileHeader { format_version: FORMAT_VERSION, scene_hash: "00ff".into(), seed: 9, dt: 1.0 / 15.0 }
    }

    fn arb_step() -> impl Strategy<Value = PlanStep> {
        (prop::array::uniform4(-4.0..4.0f64), prop::array::uniform3(-1.0..1.0f64), prop::array::uniform4(-4.0..4.0f64), any::<bool>())
            .prop_map(|(q_a, q_u, a, teleport)| PlanStep { q_a, q_u, a, teleport })
    }

    proptest! {
        #[test]
        fn plan_roundtrip_is_exact(steps in prop::collection::vec(arb_step(), 0..20)) {
            let plan = PlanTrajectory { steps, dt: 1.0 / 15.0 };
            let text = plan_to_string(&plan, &header());
            let (back, h) = plan_from_str(Path::new("p"), &text).unwrap();
            prop_assert_eq!(back, plan);
            prop_assert_eq!(h, header());
        }
    }

    #[test]
    fn demo_roundtrip_has_four_values_per_row() {
        let demo = Demonstration { q_a: vec![[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.5, 2.0]], dt: 0.5, seed: 4, scene_hash: "ab".into() };
        let text = demo_to_string(&demo);
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            assert_eq!(line.split_whitespace().count(), 5);
        }
        assert_eq!(demo_from_str(Path::new("d"), &text).unwrap(), demo);
    }

    #[test]
    fn missing_teleport_column_reports_line() {
        let plan = PlanTrajectory { steps: vec![PlanStep { q_a: [0.0; 4], q_u: [0.0; 3], a: [0.0; 4], teleport: false }; 2], dt: 0.1 };
        let text = plan_to_string(&plan, &header());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let last = lines.len() - 1;
        let trimmed = lines[last].rsplit_once(' ').unwrap().0.to_string();
        lines[last] = trimmed;
        let err = plan_from_str(Path::new("p"), &lines.join("\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, last + 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let demo = Demonstration { q_a: vec![[0.0; 4]], dt: 0.5, seed: 4, scene_hash: "ab".into() };
        assert!(plan_from_str(Path::new("d"), &demo_to_string(&demo)).is_err());
    }
}

mod planner_core {
    use pgrl_core::planner::*;
    use pgrl_core::sim::Configuration;

    fn plan_fixture(n: usize) -> PlanTrajectory {
        let steps = (0..n)
            .map(|i| {
                let t = i as f64;
                PlanStep { q_a: [t, -t, 0.5 * t, 1.0], q_u: [0.3, 0.13, -0.1 * t], a: [t + 1.0; 4], teleport: i == 2 }
            })
            .collect();
        PlanTrajectory { steps, dt: 1.0 / 15.0 }
    }

    #[test]
    fn demo_is_projection() {
        for n in [0, 1, 7] {
            let plan = plan_fixture(n);
            let demo = extract_demo(&plan, 3, "abc");
            assert_eq!(demo.q_a.len(), plan.len());
            for (d, s) in demo.q_a.iter().zip(&plan.steps) {
                assert_eq!(d.map(f64::to_bits), s.q_a.map(f64::to_bits));
                assert_eq!(d.len(), 4);
            }
            // Recombining with plan poses recovers the configurations.
            for (d, s) in demo.q_a.iter().zip(&plan.steps) {
                assert_eq!(Configuration::new(*d, s.q_u), s.config());
            }
        }
    }

    #[test]
    fn face_frames_lie_on_boundary() {
        let half = [0.2, 0.1];
        for face in Face::ALL {
            let (p, n) = FingerContact { face, offset: 0.3 }.local_frame(half);
            let on_x = (p[0].abs() - half[0]).abs() < 1e-15 && n[0] != 0.0;
            let on_z = (p[1].abs() - half[1]).abs() < 1e-15 && n[1] != 0.0;
            assert!(on_x || on_z);
            assert!((p[0] * n[0] + p[1] * n[1]) > 0.0);
        }
    }
}

mod refine {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use pgrl_core::planner::*;
    use pgrl_core::sim::{quasi_dynamic_step, Configuration, WorldParams};

    const FAR_BOX: [f64; 3] = [2.0, 0.13, 0.0];

    fn world() -> WorldParams {
        WorldParams::default()
    }

    /// Free-space plan produced by simulating `commands` from a fixed start.
    fn simulated_plan(commands: &[[f64; 4]]) -> PlanTrajectory {
        let w = world();
        let mut q = Configuration::new([1.2, -0.5, -0.6, 0.4], FAR_BOX);
        let mut steps = Vec::new();
        for c in commands {
            steps.push(PlanStep { q_a: q.q_a, q_u: q.q_u, a: *c, teleport: false });
            q = quasi_dynamic_step(&q, c, &w).unwrap();
        }
        steps.push(PlanStep { q_a: q.q_a, q_u: q.q_u, a: *commands.last().unwrap(), teleport: false });
        PlanTrajectory { steps, dt: w.quasi.step }
    }

    fn planner_cfg() -> PlannerConfig {
        PlannerConfig { bounds: [[0.05, 2.5], [0.1, 0.6], [-2.0, 0.5]], ..PlannerConfig::default() }
    }

    #[test]
    fn linear_resample_is_collinear() {
        let pts = resample_linear(&[0.0, 1.0, 2.0, 3.0], &[4.0, 1.0, -2.0, 3.0], 4);
        assert_eq!(pts.len(), 4);
        for (k, p) in pts.iter().enumerate() {
            let f = (k + 1) as f64 / 4.0;
            let expect = [4.0 * f, 1.0, 2.0 - 4.0 * f, 3.0];
            for i in 0..4 {
                assert!((p[i] - expect[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tight_plan_is_unchanged() {
        let commands: Vec<[f64; 4]> = (1..=12)
            .map(|k| {
                let d = 0.05 * k as f64;
                [1.2 + d, -0.5, -0.6, 0.4]
            })
            .collect();
        let plan = simulated_plan(&commands);
        let goal = FAR_BOX;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = refine(&plan, &goal, &world(), &planner_cfg(), world().quasi.step, &mut rng).unwrap();
        let replayed = replay_plan(&out, &world()).unwrap();
        let original = replay_plan(&plan, &world()).unwrap();
        assert_eq!(replayed.len(), original.len());
        for (a, b) in replayed.iter().zip(&original) {
            for i in 0..4 {
                assert!((a.q_a[i] - b.q_a[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn detour_is_shortened() {
        let mut commands = Vec::new();
        for k in 1..=8 {
            commands.push([1.2 + 0.05 * k as f64, -0.5, -0.6, 0.4]);
        }
        for k in (0..8).rev() {
            commands.push([1.2 + 0.05 * k as f64, -0.5, -0.6, 0.4]);
        }
        for k in 1..=4 {
            commands.push([1.2, -0.5 + 0.05 * k as f64, -0.6, 0.4]);
        }
        commands.extend(std::iter::repeat_n([1.2, -0.3, -0.6, 0.4], 4));
        let plan = simulated_plan(&commands);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = refine(&plan, &FAR_BOX, &world(), &planner_cfg(), world().quasi.step, &mut rng).unwrap();
        assert!(out.path_length() < plan.path_length(), "{} vs {}", out.path_length(), plan.path_length());
        let last = out.steps.last().unwrap().q_a;
        assert!((last[1] + 0.3).abs() < 0.02);
    }

    #[test]
    fn teleports_become_kinematic_ramps() {
        let w = world();
        let q0 = Configuration::new([1.2, -0.5, -0.6, 0.4], FAR_BOX);
        let jump = [1.6, -0.5, -0.6, 0.1];
        let plan = PlanTrajectory {
            steps: vec![PlanStep { q_a: q0.q_a, q_u: q0.q_u, a: jump, teleport: true }, PlanStep { q_a: jump, q_u: q0.q_u, a: jump, teleport: false }],
            dt: w.quasi.step,
        };
        let cfg = PlannerConfig { shortcut_attempts: 0, ..planner_cfg() };
        let out = refine(&plan, &FAR_BOX, &w, &cfg, w.quasi.step, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.len(), 9);
        assert_eq!(out.teleport_count(), 8);
        for s in &out.steps {
            assert_eq!(s.q_u, q0.q_u);
        }
        assert_eq!(out.steps.last().unwrap().q_a, jump);
        for w2 in out.steps.windows(2) {
            for i in 0..4 {
                assert!((w2[1].q_a[i] - w2[0].q_a[i]).abs() <= cfg.max_joint_step + 1e-12);
            }
        }
    }

    #[test]
    fn resampling_halves_period() {
        let plan = simulated_plan(&[[1.3, -0.5, -0.6, 0.4]; 4]);
        let out = resample_uniform(&plan, plan.dt / 2.0);
        assert_eq!(out.len(), 2 * plan.len() - 1);
        for k in 0..plan.len() {
            assert_eq!(out.steps[2 * k].q_a, plan.steps[k].q_a);
        }
    }
}

mod rrt {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use pgrl_core::env::{home_posture, EnvConfig};
    use pgrl_core::error::Error;
    use pgrl_core::planner::*;
    use pgrl_core::sim::{quasi_dynamic_step, Configuration, WorldParams};

    fn node(q_u: [f64; 3]) -> TreeNode {
        TreeNode { config: Configuration { q_a: [0.0; 4], q_u }, parent: None, edge: Edge::Root, command: [0.0; 4], contacts: [None, None] }
    }

    fn start() -> (WorldParams, Configuration) {
        let w = WorldParams::default();
        let home = home_posture(&w, &EnvConfig::default()).unwrap();
        (w, Configuration::new(home, [0.35, 0.13, 0.0]))
    }

    #[test]
    fn goal_bias_of_one_always_returns_goal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = PlannerConfig::default().bounds;
        for _ in 0..100 {
            assert_eq!(sample_subgoal([0.1, 0.2, 0.3], &b, 1.0, &mut rng).unwrap(), [0.1, 0.2, 0.3]);
        }
        assert!(sample_subgoal([0.0; 3], &b, 1.5, &mut rng).is_err());
    }

    #[test]
    fn uniform_subgoals_fill_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = PlannerConfig::default().bounds;
        let n = 10_000;
        let bins = 10;
        let mut counts = [[0usize; 10]; 3];
        for _ in 0..n {
            let s = sample_subgoal([0.0; 3], &b, 0.0, &mut rng).unwrap();
            for d in 0..3 {
                assert!(s[d] >= b[d][0] && s[d] <= b[d][1]);
                let k = (((s[d] - b[d][0]) / (b[d][1] - b[d][0])) * bins as f64) as usize;
                counts[d][k.min(bins - 1)] += 1;
            }
        }
        let p = 1.0 / bins as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for d in 0..3 {
            for c in counts[d] {
                assert!((c as f64 - mean).abs() <= 3.0 * sigma + 1.0, "dim {d}: {c}");
            }
        }
    }

    #[test]
    fn subgoal_sequence_is_seeded() {
        let b = PlannerConfig::default().bounds;
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_subgoal([0.0; 3], &b, 0.2, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn nearest_singleton_and_wrap_tie() {
        assert_eq!(nearest_node(&[node([0.3, 0.2, 0.0])], &[1.0, 1.0, 1.0], 1.0, 0.1), Some(0));
        assert_eq!(nearest_node(&[], &[0.0; 3], 1.0, 0.1), None);
        let nodes = [node([0.0, 0.0, 3.0]), node([0.0, 0.0, -3.0])];
        assert_eq!(nearest_node(&nodes, &[0.0, 0.0, std::f64::consts::PI], 1.0, 0.1), Some(0));
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nodes: Vec<TreeNode> = (0..100).map(|_| node([rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(-3.0..3.0)])).collect();
        for _ in 0..50 {
            let t = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(-3.0..3.0)];
            let mut best = (0, f64::INFINITY);
            for (i, n) in nodes.iter().enumerate() {
                let dx = n.config.q_u[0] - t[0];
                let dz = n.config.q_u[1] - t[1];
                let mut dth = (n.config.q_u[2] - t[2]).rem_euclid(2.0 * std::f64::consts::PI);
                if dth > std::f64::consts::PI {
                    dth -= 2.0 * std::f64::consts::PI;
                }
                let d = dx * dx + dz * dz + 0.1 * dth * dth;
                if d < best.1 {
                    best = (i, d);
                }
            }
            assert_eq!(nearest_node(&nodes, &t, 1.0, 0.1), Some(best.0));
        }
    }

    #[test]
    fn null_extension_stays_near_parent() {
        let (w, q0) = start();
        let cfg = PlannerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut done = 0;
        for _ in 0..20 {
            let mut nodes = vec![TreeNode { config: q0, parent: None, edge: Edge::Root, command: q0.q_a, contacts: [None, None] }];
            // Settle the box first so the null push measures only the contact response.
            let settled = push(&w, &cfg, &q0, &q0.q_a, &[None, None], &q0.q_u).unwrap().1;
            nodes[0].config = *settled.last().unwrap();
            let goal = nodes[0].config.q_u;
            if let Ok(added) = extend(&mut nodes, 0, &goal, &q0.q_a, &w, &cfg, &mut rng) {
                let q = nodes[*added.last().unwrap()].config.q_u;
                assert!(pose_distance(&q, &goal, 1.0, 0.1) < 1e-3, "{q:?}");
                done += 1;
            }
        }
        assert!(done > 0);
    }

    #[test]
    fn extension_toward_displaced_subgoal_makes_progress() {
        let (w, q0) = start();
        let cfg = PlannerConfig { reuse_contacts: 0.0, ..PlannerConfig::default() };
        let subgoal = [q0.q_u[0] + 0.1, q0.q_u[1], q0.q_u[2]];
        let before = pose_distance(&q0.q_u, &subgoal, 1.0, 0.1);
        let mut progress = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Retry until a valid extension exists, as the planner would.
            for _ in 0..50 {
                let mut nodes = vec![TreeNode { config: q0, parent: None, edge: Edge::Root, command: q0.q_a, contacts: [None, None] }];
                if let Ok(added) = extend(&mut nodes, 0, &subgoal, &q0.q_a, &w, &cfg, &mut rng) {
                    let q = nodes[*added.last().unwrap()].config.q_u;
                    if pose_distance(&q, &subgoal, 1.0, 0.1) < before {
                        progress += 1;
                    }
                    break;
                }
            }
        }
        assert!(progress >= 8, "{progress}/10");
    }

    #[test]
    fn teleport_holds_box_and_moves_robot() {
        let (w, q0) = start();
        let cfg = PlannerConfig { reuse_contacts: 0.0, ..PlannerConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut nodes = vec![TreeNode { config: q0, parent: None, edge: Edge::Root, command: q0.q_a, contacts: [None, None] }];
        let mut seen = 0;
        for _ in 0..30 {
            let _ = extend(&mut nodes, 0, &[0.4, 0.2, -0.3], &q0.q_a, &w, &cfg, &mut rng);
        }
        for n in &nodes {
            if n.edge == Edge::Teleport {
                let parent = &nodes[n.parent.unwrap()];
                assert_eq!(n.config.q_u, parent.config.q_u);
                assert_ne!(n.config.q_a, parent.config.q_a);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn trivial_and_zero_budget_queries() {
        let (w, q0) = start();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan_ok = plan(&q0, &q0.q_u, &w, &PlannerConfig::default(), &mut rng).unwrap();
        assert_eq!(plan_ok.len(), 1);
        assert_eq!(plan_ok.steps[0].config(), q0);
        let cfg = PlannerConfig { max_nodes: 0, ..PlannerConfig::default() };
        let err = plan(&q0, &[0.15, 0.4, -1.5], &w, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Planning { .. }));
    }

    #[test]
    fn tree_edges_replay_exactly_and_trajectory_is_consistent() {
        let (w, q0) = start();
        let cfg = PlannerConfig { max_nodes: 300, ..PlannerConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = plan_tree(&q0, &[0.15, 0.4, -1.5], &w, &cfg, &mut rng);
        assert!(out.nodes.len() >= 300);
        for n in &out.nodes {
            let Some(p) = n.parent else { continue };
            let parent = &out.nodes[p];
            match &n.edge {
                Edge::Push { commands, path } => {
                    let mut q = parent.config;
                    for (c, stored) in commands.iter().zip(path) {
                        q = quasi_dynamic_step(&q, c, &w).unwrap();
                        assert_eq!(q, *stored);
                    }
                    assert_eq!(q, n.config);
                }
                Edge::Teleport => assert_eq!(n.config.q_u, parent.config.q_u),
                Edge::Root => panic!("root with parent"),
            }
        }
        let traj = out.trajectory(out.best_node, w.quasi.step);
        assert_eq!(traj.steps[0].config(), q0);
        let replayed = pgrl_core::planner::replay_plan(&traj, &w).unwrap();
        for (s, q) in traj.steps.iter().zip(&replayed) {
            assert_eq!(s.config(), *q);
        }
    }

    #[test]
    fn planner_is_deterministic() {
        let (w, q0) = start();
        let cfg = PlannerConfig { max_nodes: 100, ..PlannerConfig::default() };
        let run = || plan_tree(&q0, &[0.15, 0.4, -1.5], &w, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).nodes;
        assert_eq!(run(), run());
    }
}

mod replay {
    use pgrl_core::env::RandomizationSpec;
    use pgrl_core::env::{EnvConfig, PivotEnv};
    use pgrl_core::planner::*;
    use pgrl_core::sim::WorldParams;

    fn quiet() -> EnvConfig {
        EnvConfig { randomization: RandomizationSpec::none(), ..EnvConfig::default() }
    }

    #[test]
    fn empty_plan_reports_initial_distances() {
        let cfg = quiet();
        let m = open_loop_replay(&PlanTrajectory { steps: vec![], dt: 1.0 / 15.0 }, &WorldParams::default(), &cfg, 0, 0).unwrap();
        assert_eq!(m.steps, 0);
        let expect = ((0.35f64 - 0.15).hypot(0.13 - 0.40), std::f64::consts::FRAC_PI_2);
        assert!((m.final_trans - expect.0).abs() < 1e-12 && (m.final_rot - expect.1).abs() < 1e-12);
    }

    #[test]
    fn trivially_reachable_goal_replays_close() {
        // Goal at the resting pose: holding the home posture keeps the box there.
        let world = WorldParams::default();
        let cfg = EnvConfig { goal: [0.35, 0.13, 0.0], episode_length: 30, ..quiet() };
        let env = PivotEnv::new(&world, &cfg, 0, 0).unwrap();
        let home = env.home();
        let plan = PlanTrajectory { steps: vec![PlanStep { q_a: home, q_u: [0.35, 0.13, 0.0], a: home, teleport: false }; 5], dt: 1.0 / 15.0 };
        let m = open_loop_replay(&plan, &world, &cfg, 0, 0).unwrap();
        assert_eq!(m.steps, 30);
        assert!(m.final_trans < 0.01 && m.final_rot < 0.01, "{m:?}");
        assert!(m.success);
    }
}
