use pgrl_core::amp::AmpConfig;
use pgrl_core::env::{Environment, PointReachConfig, PointReachEnv};
use pgrl_core::ppo::{PolicySnapshot, PpoConfig, Trainer, TrainerSetup};

fn reach_setup(seed: u64, iterations: usize) -> TrainerSetup {
    TrainerSetup {
        ppo: PpoConfig { max_iterations: iterations, policy_hidden: vec![64, 64], value_hidden: vec![64, 64], ..PpoConfig::default() },
        amp: AmpConfig { lambda: 1.0, ..AmpConfig::default() },
        demo: None,
        seed,
        parallel: false,
        deterministic: true,
    }
}

fn reach_trainer(seed: u64, iterations: usize) -> Trainer<PointReachEnv> {
    let setup = reach_setup(seed, iterations);
    let envs = (0..setup.ppo.num_envs).map(|_| PointReachEnv::new(PointReachConfig::default())).collect();
    Trainer::new(envs, setup).unwrap()
}

fn greedy_return(snapshot: &PolicySnapshot) -> f64 {
    let mut env = PointReachEnv::new(PointReachConfig::default());
    let mut obs = env.reset();
    let mut total = 0.0;
    loop {
        let a = snapshot.act(&[obs]).unwrap().remove(0);
        let out = env.step(&a).unwrap();
        total += out.reward;
        if out.done() {
            return total;
        }
        obs = out.observation;
    }
}

#[test]
fn point_reach_learns() {
    let cfg = PointReachConfig::default();
    let mut t = reach_trainer(1, 200);
    let mut best = f64::NEG_INFINITY;
    t.train(|tr, m| {
        if m.iteration % 10 == 0 {
            let s = cfg.normalized_score(greedy_return(&tr.snapshot()));
            best = best.max(s);
            eprintln!("{} {:.3} kl {:.2e} lr {:.2e} ep {:.3}", m.iteration, s, m.approx_kl, m.learning_rate, m.episode_reward_mean);
        }
        Ok(())
    })
    .unwrap();
    assert!(best >= 0.9, "best {best}");
}

mod math {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use pgrl_core::ppo::*;

    #[test]
    fn one_step_terminal_gae() {
        let (a, r) = compute_gae(&[vec![1.0]], &[vec![0.0]], &[vec![true]], &[5.0], 0.99, 0.95);
        assert_eq!(a[0][0], 1.0);
        assert_eq!(r[0][0], 1.0);
    }

    #[test]
    fn one_step_bootstrap_gae() {
        let (a, _) = compute_gae(&[vec![1.0]], &[vec![0.5]], &[vec![false]], &[2.0], 0.99, 0.95);
        assert!((a[0][0] - 2.48).abs() < 1e-12);
    }

    #[test]
    fn tau_one_matches_monte_carlo() {
        let r = [0.3, -1.0, 2.0, 0.5, 1.5];
        let v = [0.1, 0.2, -0.3, 0.4, 0.0];
        let last = 0.7;
        let g = 0.9;
        let rewards: Vec<Vec<f64>> = r.iter().map(|x| vec![*x]).collect();
        let values: Vec<Vec<f64>> = v.iter().map(|x| vec![*x]).collect();
        let dones = vec![vec![false]; 5];
        let (a, _) = compute_gae(&rewards, &values, &dones, &[last], g, 1.0);
        for t in 0..5 {
            let mut mc = g.powi((5 - t) as i32) * last;
            for k in t..5 {
                mc += g.powi((k - t) as i32) * r[k];
            }
            assert!((a[t][0] - (mc - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_zero_is_td() {
        let rewards = vec![vec![1.0, 0.0], vec![0.5, 2.0], vec![-1.0, 1.0]];
        let values = vec![vec![0.2, 0.1], vec![0.3, -0.4], vec![0.9, 0.0]];
        let dones = vec![vec![false, false], vec![true, false], vec![false, false]];
        let last = [1.0, 2.0];
        let (a, r) = compute_gae(&rewards, &values, &dones, &last, 0.99, 0.0);
        for t in 0..3 {
            for e in 0..2 {
                let next = if t + 1 < 3 { values[t + 1][e] } else { last[e] };
                let live = if dones[t][e] { 0.0 } else { 1.0 };
                let td = rewards[t][e] + 0.99 * next * live - values[t][e];
                assert!((a[t][e] - td).abs() < 1e-15);
                assert!((r[t][e] - (a[t][e] + values[t][e])).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn normalized_advantages_have_unit_moments(v in prop::collection::vec(-100.0..100.0f64, 2..500)) {
            let mut a = v.clone();
            prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-6));
            normalize_advantages(&mut a);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() <= 1e-10);
            prop_assert!((std - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn surrogate_never_exceeds_unclipped_for_positive_advantage(ratio in 0.0..3.0f64, adv in 0.0..10.0f64) {
            let (obj, _) = clipped_surrogate(ratio, adv, 0.2);
            prop_assert!(obj <= ratio * adv + 1e-15);
        }
    }

    #[test]
    fn clip_arithmetic() {
        let (o, active) = clipped_surrogate(1.5, 1.0, 0.2);
        assert!((o - 1.2).abs() < 1e-15 && !active);
        let (o, active) = clipped_surrogate(0.5, -1.0, 0.2);
        assert!((o + 0.8).abs() < 1e-15 && !active);
        assert_eq!(clipped_surrogate(1.0, 0.0, 0.2).0, 0.0);
    }

    #[test]
    fn adaptive_lr_rules() {
        let b = [1e-7, 1e-3];
        assert_eq!(adapt_learning_rate(5e-5, 8e-3, 8e-3, b), 5e-5);
        assert!((adapt_learning_rate(5e-5, 0.1, 8e-3, b) - 5e-5 / 1.5).abs() < 1e-20);
        let mut lr = 5e-5;
        for _ in 0..100 {
            lr = adapt_learning_rate(lr, 0.0, 8e-3, b);
        }
        assert_eq!(lr, 1e-3);
    }

    #[test]
    fn log_prob_and_kl_oracles() {
        let lp = gaussian_log_prob(&[0.0], &[0.0], &[0.0]);
        assert!((lp + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert_eq!(gaussian_kl(&[0.3, -0.2], &[-1.0, 0.5], &[0.3, -0.2], &[-1.0, 0.5]), 0.0);
        // Unit-variance shift: KL = d^2 / 2.
        assert!((gaussian_kl(&[0.0], &[0.0], &[0.6], &[0.0]) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn running_norm_matches_batch_statistics() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, (i as f64 * 0.3).sin()]).collect();
        let mut rn = RunningNorm::new(2);
        rn.update(&rows[..37]);
        rn.update(&rows[37..]);
        let n = 100.0;
        for d in 0..2 {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((rn.mean[d] - mean).abs() < 1e-4 * (1.0 + mean.abs()));
            assert!((rn.var[d] - var).abs() < 1e-3 * (1.0 + var));
        }
    }
}
