use nalgebra::{Matrix2, Vector2};

use super::params::WorldParams;
use super::wrap_angle;

/// Fingertip center of arm `arm` for joint angles `(q1, q2)`.
pub fn fingertip(params: &WorldParams, arm: usize, q1: f64, q2: f64) -> Vector2<f64> {
    let [l1, l2] = params.link_lengths;
    let s = params.shoulders[arm];
    let a12 = q1 + q2;
    Vector2::new(s[0] + l1 * q1.cos() + l2 * a12.cos(), s[1] + l1 * q1.sin() + l2 * a12.sin())
}

/// Jacobian of the fingertip position with respect to `(q1, q2)`.
pub fn fingertip_jacobian(params: &WorldParams, q1: f64, q2: f64) -> Matrix2<f64> {
    let [l1, l2] = params.link_lengths;
    let a12 = q1 + q2;
    let (s1, c1) = q1.sin_cos();
    let (s12, c12) = a12.sin_cos();
    Matrix2::new(-l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12)
}

/// Both fingertip positions, `[x0, z0, x1, z1]`.
pub fn end_effector_pose(q_a: &[f64; 4], params: &WorldParams) -> [f64; 4] {
    let p0 = fingertip(params, 0, q_a[0], q_a[1]);
    let p1 = fingertip(params, 1, q_a[2], q_a[3]);
    [p0.x, p0.y, p1.x, p1.y]
}

/// Closed-form inverse kinematics for one arm. Of the two elbow solutions the one
/// closest to `reference` (in wrapped joint distance) is returned; `None` when the
/// target is out of reach or violates the joint limit.
pub fn inverse_kinematics(params: &WorldParams, arm: usize, target: Vector2<f64>, reference: [f64; 2]) -> Option<[f64; 2]> {
    let [l1, l2] = params.link_lengths;
    let s = params.shoulders[arm];
    let d = Vector2::new(target.x - s[0], target.y - s[1]);
    let r2 = d.norm_squared();
    let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let base = d.y.atan2(d.x);
    let mut best: Option<([f64; 2], f64)> = None;
    for sign in [1.0, -1.0] {
        let q2 = sign * c2.acos();
        let q1 = wrap_angle(base - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos()));
        if q1.abs() > params.joint_limit || q2.abs() > params.joint_limit {
            continue;
        }
        let dist = wrap_angle(q1 - reference[0]).abs() + wrap_angle(q2 - reference[1]).abs();
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some(([q1, q2], dist));
        }
    }
    best.map(|(q, _)| q)
}
