mod kinematics {
    use nalgebra::Matrix3;
    use nalgebra::Vector2;
    use proptest::prelude::*;

    use pgrl_core::sim::kinematics::*;
    use pgrl_core::sim::WorldParams;

    fn homogeneous(theta: f64, tx: f64, tz: f64) -> Matrix3<f64> {
        let (s, c) = theta.sin_cos();
        Matrix3::new(c, -s, tx, s, c, tz, 0.0, 0.0, 1.0)
    }

    /// Homogeneous-transform chain: shoulder -> joint1 -> link1 -> joint2 -> link2.
    fn fk_chain(params: &WorldParams, arm: usize, q1: f64, q2: f64) -> Vector2<f64> {
        let [l1, l2] = params.link_lengths;
        let s = params.shoulders[arm];
        let t = homogeneous(0.0, s[0], s[1]) * homogeneous(q1, 0.0, 0.0) * homogeneous(0.0, l1, 0.0) * homogeneous(q2, 0.0, 0.0) * homogeneous(0.0, l2, 0.0);
        Vector2::new(t[(0, 2)], t[(1, 2)])
    }

    #[test]
    fn stretched_arm() {
        let p = WorldParams::default();
        let ee = end_effector_pose(&[0.0; 4], &p);
        assert!((ee[0] - 0.6).abs() < 1e-15 && (ee[1] - 0.55).abs() < 1e-15);
        assert!((ee[2] - 0.6).abs() < 1e-15 && (ee[3] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn right_angle_elbow() {
        let p = WorldParams { shoulders: [[0.0, 0.0], [0.0, 0.0]], ..Default::default() };
        let tip = fingertip(&p, 0, 0.0, std::f64::consts::FRAC_PI_2);
        assert!((tip.x - 0.3).abs() < 1e-15 && (tip.y - 0.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn matches_transform_chain(q in proptest::array::uniform4(-3.0f64..3.0)) {
            let p = WorldParams::default();
            let ee = end_effector_pose(&q, &p);
            let a = fk_chain(&p, 0, q[0], q[1]);
            let b = fk_chain(&p, 1, q[2], q[3]);
            prop_assert!((ee[0] - a.x).abs() < 1e-12 && (ee[1] - a.y).abs() < 1e-12);
            prop_assert!((ee[2] - b.x).abs() < 1e-12 && (ee[3] - b.y).abs() < 1e-12);
        }

        #[test]
        fn ik_inverts_fk(q1 in -2.5f64..2.5, q2 in 0.2f64..2.8) {
            let p = WorldParams::default();
            let target = fingertip(&p, 1, q1, q2);
            let sol = inverse_kinematics(&p, 1, target, [q1, q2]).unwrap();
            prop_assert!((fingertip(&p, 1, sol[0], sol[1]) - target).norm() < 1e-10);
        }

        #[test]
        fn jacobian_matches_finite_differences(q1 in -3.0f64..3.0, q2 in -3.0f64..3.0) {
            let p = WorldParams::default();
            let j = fingertip_jacobian(&p, q1, q2);
            let h = 1e-6;
            let d1 = (fingertip(&p, 0, q1 + h, q2) - fingertip(&p, 0, q1 - h, q2)) / (2.0 * h);
            let d2 = (fingertip(&p, 0, q1, q2 + h) - fingertip(&p, 0, q1, q2 - h)) / (2.0 * h);
            prop_assert!((j[(0, 0)] - d1.x).abs() < 1e-8 && (j[(1, 0)] - d1.y).abs() < 1e-8);
            prop_assert!((j[(0, 1)] - d2.x).abs() < 1e-8 && (j[(1, 1)] - d2.y).abs() < 1e-8);
        }
    }

    #[test]
    fn unreachable_target() {
        let p = WorldParams::default();
        assert!(inverse_kinematics(&p, 0, Vector2::new(2.0, 0.0), [0.0, 0.0]).is_none());
    }
}

mod contact {
    use pgrl_core::sim::contact::*;

    #[test]
    fn far_separation_vanishes() {
        assert!(smoothed_normal_force(1.0, 1e4, 1e-3) < 1e-300);
        assert_eq!(smoothed_normal_force(f64::INFINITY, 1e4, 1e-3), 0.0);
    }

    #[test]
    fn deep_penetration_is_linear_penalty() {
        let d = 0.05;
        let f = smoothed_normal_force(-d, 1e4, 1e-3);
        assert!((f - 1e4 * d).abs() / (1e4 * d) < 1e-12);
    }

    #[test]
    fn value_at_contact() {
        let f = smoothed_normal_force(0.0, 1000.0, 0.01);
        assert!((f - 10.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((f - 6.931).abs() < 1e-3);
    }

    #[test]
    fn c1_on_dense_grid() {
        let (k, s) = (1e4, 1e-3);
        let delta = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..10_000 {
            let phi = -0.02 + 0.04 * i as f64 / 9_999.0;
            let lin = smoothed_normal_force(phi, k, s) + smoothed_normal_force_derivative(phi, k, s) * delta;
            let err = (smoothed_normal_force(phi + delta, k, s) - lin).abs();
            // second derivative is bounded by k / (4 s)
            worst = worst.max(err / (delta * delta));
        }
        assert!(worst <= k / (4.0 * s) * 1.01);
    }

    #[test]
    fn monotone_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let phi = -0.01 + 2e-5 * i as f64;
            let f = smoothed_normal_force(phi, 1e4, 1e-3);
            assert!(f > 0.0 && f < prev);
            prev = f;
        }
    }

    #[test]
    fn converges_to_penalty_as_smoothing_shrinks() {
        let phi = -0.003;
        let target = 1e4 * 0.003;
        let mut prev_gap = f64::INFINITY;
        for s in [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 1e-4] {
            let gap = smoothed_normal_force(phi, 1e4, s) - target;
            assert!(gap > 0.0 && gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn friction_saturates_and_opposes_motion() {
        assert!((regularized_friction(1.0, 2.0, 0.5, 1e-3) + 1.0).abs() < 1e-12);
        assert!(regularized_friction(-1e-4, 2.0, 0.5, 1e-3) > 0.0);
        let h = 1e-9;
        let d = (regularized_friction(2e-4 + h, 2.0, 0.5, 1e-3) - regularized_friction(2e-4 - h, 2.0, 0.5, 1e-3)) / (2.0 * h);
        assert!((d - regularized_friction_derivative(2e-4, 2.0, 0.5, 1e-3)).abs() < 1e-4 * d.abs());
    }
}

mod dynamics {
    use pgrl_core::sim::geometry::signed_distances;
    use pgrl_core::sim::*;

    fn far_box() -> Configuration {
        Configuration::new([0.0; 4], [2.0, 1.0, 0.0])
    }

    /// Box settled on the table by repeated quasi-dynamic steps.
    fn settled_quasi(p: &WorldParams, q_a: [f64; 4]) -> Configuration {
        let mut q = Configuration::new(q_a, [0.35, 0.13, 0.0]);
        for _ in 0..200 {
            q = quasi_dynamic_step(&q, &q_a, p).unwrap();
        }
        q
    }

    // Upper arm raised, lower arm folded down near the torso: both fingertips away from the box.
    const PARKED: [f64; 4] = [1.2, 0.0, -1.0, -0.5];

    #[test]
    fn free_space_tracking_converges_to_command() {
        let p = WorldParams::default();
        let mut q = Configuration::new([0.0; 4], far_box().q_u);
        let cmd = [0.1, 0.0, 0.0, 0.0];
        let q_u_before = q.q_u;
        let mut p0 = p.clone();
        p0.gravity = 1e-12;
        for _ in 0..20 {
            q = quasi_dynamic_step(&q, &cmd, &p0).unwrap();
        }
        for i in 0..4 {
            assert!((q.q_a[i] - cmd[i]).abs() <= 1e-6, "joint {i}: {}", q.q_a[i]);
        }
        assert!((q.q_u[0] - q_u_before[0]).abs() < 1e-12 && (q.q_u[2] - q_u_before[2]).abs() < 1e-12);
    }

    #[test]
    fn resting_box_does_not_drift() {
        let p = WorldParams::default();
        let q = settled_quasi(&p, PARKED);
        let next = quasi_dynamic_step(&q, &PARKED, &p).unwrap();
        for i in 0..3 {
            assert!((next.q_u[i] - q.q_u[i]).abs() <= 1e-5);
        }
    }

    #[test]
    fn residual_strictly_decreases() {
        let p = WorldParams::default();
        let q = Configuration::new(PARKED, [0.35, 0.2, 0.1]);
        let rep = quasi_dynamic_step_traced(&q, &[1.0, 0.2, -0.8, -0.4], &p).unwrap();
        assert!(rep.iterations > 0);
        for w in rep.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn dynamic_equilibrium_is_stationary() {
        let mut p = WorldParams::default();
        p.gravity = 1e-300;
        let s = DynamicState::at_rest(far_box());
        let next = dynamic_step(&s, &s.q.q_a, p.dynamic.step, &p).unwrap();
        assert_eq!(next.q.q_a, s.q.q_a);
        for i in 0..4 {
            assert_eq!(next.v[i], 0.0);
        }
    }

    #[test]
    fn free_fall_velocity_change() {
        let p = WorldParams::default();
        let s = DynamicState::at_rest(far_box());
        let h = p.dynamic.step;
        let next = dynamic_step(&s, &s.q.q_a, h, &p).unwrap();
        assert!((next.v[5] + p.gravity * h).abs() < 1e-12);
    }

    #[test]
    fn dropped_box_settles() {
        let p = WorldParams::default();
        let mut s = DynamicState::at_rest(Configuration::new(PARKED, [0.35, 0.3, 0.0]));
        let steps = (2.0 / p.dynamic.step) as usize;
        for _ in 0..steps {
            s = dynamic_step(&s, &PARKED, p.dynamic.step, &p).unwrap();
        }
        let set = signed_distances(&s.q, &p);
        let min_bottom = set.contacts[2..6].iter().map(|c| c.phi).fold(f64::INFINITY, f64::min);
        assert!(min_bottom >= -1e-3, "penetration {min_bottom}");
        let speed = s.v[4..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(speed <= 1e-3, "speed {speed}");
        let bound = -5.0 * p.box_mass * p.gravity / p.contact_stiffness;
        assert!(set.min_phi() >= bound);
    }

    #[test]
    fn nonpositive_step_rejected() {
        let p = WorldParams::default();
        assert!(dynamic_step(&DynamicState::at_rest(far_box()), &[0.0; 4], 0.0, &p).is_err());
    }

    #[test]
    fn steps_are_bit_deterministic() {
        let p = WorldParams::default();
        let s = DynamicState::at_rest(Configuration::new([0.3, 0.5, -0.2, 0.7], [0.35, 0.14, 0.05]));
        let a = step_control_period(&s, &[0.35, 0.45, -0.1, 0.6], &p).unwrap();
        let b = step_control_period(&s, &[0.35, 0.45, -0.1, 0.6], &p).unwrap();
        assert_eq!(a, b);
        let qa = quasi_dynamic_step(&s.q, &[0.35, 0.45, -0.1, 0.6], &p).unwrap();
        let qb = quasi_dynamic_step(&s.q, &[0.35, 0.45, -0.1, 0.6], &p).unwrap();
        assert_eq!(qa, qb);
    }
}

mod sim_core {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use pgrl_core::sim::*;

    proptest! {
        #[test]
        fn wrap_stays_in_half_open_interval(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
        }
    }

    #[test]
    fn wrap_edge_cases() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}

mod geometry {
    use nalgebra::Vector2;

    use pgrl_core::sim::geometry::*;
    use pgrl_core::sim::Configuration;
    use pgrl_core::sim::WorldParams;

    #[test]
    fn fingertip_outside_box_face() {
        let (d, n) = box_sdf(&[0.0, 0.0, 0.0], [0.2, 0.13], Vector2::new(0.5, 0.1));
        assert!((d - 0.02 - 0.28).abs() < 1e-15);
        assert_eq!(n, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn fingertip_at_center() {
        let (d, _) = box_sdf(&[0.0, 0.0, 0.0], [0.2, 0.13], Vector2::new(0.0, 0.0));
        assert!((d - 0.02 + 0.15).abs() < 1e-15);
    }

    #[test]
    fn sdf_is_rotation_covariant() {
        let q = [0.3, 0.2, 0.7];
        let p = Vector2::new(0.3, 0.2) + rotate(0.7, Vector2::new(0.5, 0.1));
        let (d, n) = box_sdf(&q, [0.2, 0.13], p);
        assert!((d - 0.3).abs() < 1e-12);
        assert!((n - rotate(0.7, Vector2::new(1.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn resting_box_bottom_corners_touch() {
        let q = Configuration { q_a: [0.0; 4], q_u: [0.35, 0.13, 0.0] };
        let p = WorldParams { box_half_extents: [0.205, 0.13], ..Default::default() };
        let set = signed_distances(&q, &p);
        assert_eq!(set.contacts.len(), 10);
        for c in 0..2 {
            assert!(set.get(ContactKind::BoxTable(c)).unwrap().phi.abs() < 1e-15);
        }
        for c in &set.contacts {
            assert!((c.normal.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corner_sdf_gradient_is_diagonal() {
        let (d, n) = box_sdf(&[0.0, 0.0, 0.0], [1.0, 1.0], Vector2::new(2.0, 2.0));
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert!((n - Vector2::new(1.0, 1.0) / 2f64.sqrt()).norm() < 1e-12);
    }
}

mod params {
    use pgrl_core::error::Error;
    use pgrl_core::sim::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let p = WorldParams::default();
        p.validate().unwrap();
        let back = WorldParams::from_toml_str(&p.to_toml_string()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn friction_outside_range_rejected() {
        let mut p = WorldParams::default();
        p.friction = 2.5;
        assert!(p.validate().is_err());
        p.friction = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn nonpositive_mass_rejected() {
        let p = WorldParams { box_mass: 0.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn control_period_is_four_sim_steps() {
        let p = WorldParams::default();
        assert!((p.control_period() - 1.0 / 15.0).abs() < 1e-15);
    }
}
