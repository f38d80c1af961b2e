use nalgebra::{SMatrix, SVector, Vector2};

use super::contact::{regularized_friction, regularized_friction_derivative, sigmoid, smoothed_normal_force};
use super::geometry::{signed_distances, ContactKind};
use super::kinematics::fingertip_jacobian;
use super::params::WorldParams;
use super::{Configuration, DynamicState, NDOF};
use crate::error::{Error, Result};

type Mat7 = SMatrix<f64, NDOF, NDOF>;
type Vec7 = SVector<f64, NDOF>;

/// Velocity-dependent terms that differ between the quasi-dynamic and dynamic models.
#[derive(Debug, Clone, Copy)]
struct ForceModel {
    smoothing: f64,
    contact_damping: f64,
    joint_damping: f64,
}

impl ForceModel {
    fn quasi(p: &WorldParams) -> Self {
        ForceModel { smoothing: p.smoothing_planner, contact_damping: 0.0, joint_damping: 0.0 }
    }

    fn dynamic(p: &WorldParams) -> Self {
        ForceModel { smoothing: p.smoothing_sim, contact_damping: p.contact_damping, joint_damping: p.joint_damping }
    }
}

fn clamp_command(cmd: &[f64; 4], p: &WorldParams) -> [f64; 4] {
    cmd.map(|c| c.clamp(-p.joint_limit, p.joint_limit))
}

/// Generalized forces at `(q, v)` under joint command `cmd`. When `dfdv` is given, the
/// Jacobian of the forces with respect to `v` is accumulated into it.
fn generalized_forces(q: &Configuration, v: &Vec7, cmd: &[f64; 4], p: &WorldParams, model: ForceModel, mut dfdv: Option<&mut Mat7>) -> Vec7 {
    let mut f = Vec7::zeros();
    for i in 0..4 {
        f[i] = p.joint_stiffness * (cmd[i] - q.q_a[i]) - model.joint_damping * v[i];
        if let Some(j) = dfdv.as_deref_mut() {
            j[(i, i)] -= model.joint_damping;
        }
    }
    f[5] -= p.box_mass * p.effective_gravity();

    let center = Vector2::new(q.q_u[0], q.q_u[1]);
    let contacts = signed_distances(q, p);
    for c in &contacts.contacts {
        // Relative-velocity Jacobian G (2 x 7) of body B with respect to body A.
        let mut g = SMatrix::<f64, 2, NDOF>::zeros();
        let r = c.point - center;
        let sign = match c.kind {
            ContactKind::FingerBox(arm) => {
                let jac = fingertip_jacobian(p, q.q_a[2 * arm], q.q_a[2 * arm + 1]);
                g.fixed_view_mut::<2, 2>(0, 2 * arm).copy_from(&jac);
                -1.0
            }
            ContactKind::BoxTable(_) | ContactKind::BoxWall(_) => 1.0,
        };
        g[(0, 4)] = sign;
        g[(1, 5)] = sign;
        g[(0, 6)] = -sign * r.y;
        g[(1, 6)] = sign * r.x;

        let n = c.normal;
        let t = c.tangent();
        let v_rel = g * v;
        let v_n = n.dot(&v_rel);
        let v_t = t.dot(&v_rel);
        let x = -c.phi / model.smoothing;
        let f_n = smoothed_normal_force(c.phi, p.contact_stiffness, model.smoothing);
        let activation = sigmoid(x);
        let damping = model.contact_damping * activation;
        let f_t = regularized_friction(v_t, f_n, p.friction, p.friction_velocity);
        let force = n * (f_n - damping * v_n) + t * f_t;
        f += g.transpose() * force;
        if let Some(j) = dfdv.as_deref_mut() {
            let dft = regularized_friction_derivative(v_t, f_n, p.friction, p.friction_velocity);
            let k = n * n.transpose() * (-damping) + t * t.transpose() * dft;
            *j += g.transpose() * k * g;
        }
    }
    f
}

fn mass_diagonal(p: &WorldParams) -> [f64; NDOF] {
    let i = p.joint_inertia;
    [i, i, i, i, p.box_mass, p.box_mass, p.box_inertia()]
}

/// Advances the full second-order dynamics by `h` seconds.
///
/// Each internal substep (at most `dynamic.max_substep` long) updates velocities first,
/// treating the dissipative terms (joint damping, contact damping, friction) implicitly
/// through their velocity Jacobian, then advances positions with the new velocities.
pub fn dynamic_step(state: &DynamicState, cmd: &[f64; 4], h: f64, p: &WorldParams) -> Result<DynamicState> {
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("time step must be > 0, got {h}")));
    }
    let cmd = clamp_command(cmd, p);
    let model = ForceModel::dynamic(p);
    let n_sub = ((h / p.dynamic.max_substep) - 1e-9).ceil().max(1.0) as usize;
    let hs = h / n_sub as f64;
    let mass = mass_diagonal(p);
    let mut q = state.q;
    let mut v = Vec7::from_column_slice(&state.v);
    let mut qv = Vec7::from_column_slice(&q.to_vec());
    for _ in 0..n_sub {
        let mut dfdv = Mat7::zeros();
        let f = generalized_forces(&q, &v, &cmd, p, model, Some(&mut dfdv));
        let mut a = -hs * dfdv;
        for i in 0..NDOF {
            a[(i, i)] += mass[i];
        }
        let rhs = f * hs;
        let dv = match a.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => a.lu().solve(&rhs).ok_or_else(|| Error::NonFinite { index: 0, context: "singular velocity system".into() })?,
        };
        v += dv;
        qv += v * hs;
        q = Configuration { q_a: [qv[0], qv[1], qv[2], qv[3]], q_u: [qv[4], qv[5], qv[6]] };
    }
    let q = Configuration::from_vec(&qv.into());
    let out = DynamicState { q, v: v.into() };
    if let Some(index) = out.q.to_vec().iter().chain(out.v.iter()).position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index, context: "dynamic state".into() });
    }
    Ok(out)
}

/// Runs `dynamic.control_substeps` dynamic steps under a constant command.
pub fn step_control_period(state: &DynamicState, cmd: &[f64; 4], p: &WorldParams) -> Result<DynamicState> {
    let mut s = *state;
    for _ in 0..p.dynamic.control_substeps {
        s = dynamic_step(&s, cmd, p.dynamic.step, p)?;
    }
    Ok(s)
}

/// Diagnostics of one quasi-dynamic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStepReport {
    pub config: Configuration,
    pub iterations: usize,
    /// Residual 2-norm before the first iteration and after every accepted step.
    pub residual_history: Vec<f64>,
}

fn quasi_residual(x0: &Vec7, x: &Vec7, cmd: &[f64; 4], p: &WorldParams, damping: &[f64; NDOF], dfdv: Option<&mut Mat7>) -> Vec7 {
    let h = p.quasi.step;
    let v = (x - x0) / h;
    let q = Configuration { q_a: [x[0], x[1], x[2], x[3]], q_u: [x[4], x[5], x[6]] };
    let f = generalized_forces(&q, &v, cmd, p, ForceModel::quasi(p), dfdv);
    Vec7::from_fn(|i, _| damping[i] * v[i] - f[i])
}

/// First-order implicit step: solves `D (q' - q) / h = F(q', (q' - q) / h)` for `q'` by
/// damped Newton with a backtracking line search on the residual norm.
pub fn quasi_dynamic_step(q: &Configuration, cmd: &[f64; 4], p: &WorldParams) -> Result<Configuration> {
    quasi_dynamic_step_traced(q, cmd, p).map(|r| r.config)
}

pub fn quasi_dynamic_step_traced(q: &Configuration, cmd: &[f64; 4], p: &WorldParams) -> Result<QuasiStepReport> {
    let cmd = clamp_command(cmd, p);
    let h = p.quasi.step;
    let qp = &p.quasi;
    let damping = [qp.arm_damping, qp.arm_damping, qp.arm_damping, qp.arm_damping, qp.box_damping_linear, qp.box_damping_linear, qp.box_damping_angular];
    let x0 = Vec7::from_column_slice(&q.to_vec());
    // Free-space arm response as the initial guess.
    let mut x = x0;
    for i in 0..4 {
        let d = damping[i] / h;
        x[i] = (d * x0[i] + p.joint_stiffness * cmd[i]) / (d + p.joint_stiffness);
    }
    let mut dfdv = Mat7::zeros();
    let mut r = quasi_residual(&x0, &x, &cmd, p, &damping, Some(&mut dfdv));
    let mut history = vec![r.norm()];
    let mut iterations = 0;
    while r.amax() > qp.residual_tolerance {
        if iterations >= qp.max_newton_iterations {
            return Err(Error::Solver { iterations, residual: r.amax() });
        }
        iterations += 1;
        // dR/dx = D/h - dF/dq - dF/dv / h; dF/dq by forward differences at fixed v.
        let v = (x - x0) / h;
        let q_now = Configuration { q_a: [x[0], x[1], x[2], x[3]], q_u: [x[4], x[5], x[6]] };
        let f0 = generalized_forces(&q_now, &v, &cmd, p, ForceModel::quasi(p), None);
        let mut jac = -dfdv / h;
        for j in 0..NDOF {
            jac[(j, j)] += damping[j] / h;
            let step = 1e-7 * (1.0 + x[j].abs());
            let mut xp = x;
            xp[j] += step;
            let qj = Configuration { q_a: [xp[0], xp[1], xp[2], xp[3]], q_u: [xp[4], xp[5], xp[6]] };
            let fj = generalized_forces(&qj, &v, &cmd, p, ForceModel::quasi(p), None);
            let col = (fj - f0) / step;
            for i in 0..NDOF {
                jac[(i, j)] -= col[i];
            }
        }
        let delta = jac.lu().solve(&(-r)).ok_or(Error::Solver { iterations, residual: r.amax() })?;
        let norm = r.norm();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = x + delta * alpha;
            let mut trial_dfdv = Mat7::zeros();
            let rt = quasi_residual(&x0, &trial, &cmd, p, &damping, Some(&mut trial_dfdv));
            if rt.norm() < norm && rt.iter().all(|v| v.is_finite()) {
                accepted = Some((trial, rt, trial_dfdv));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xn, rn, dn)) => {
                x = xn;
                r = rn;
                dfdv = dn;
                history.push(r.norm());
            }
            None => return Err(Error::Solver { iterations, residual: r.amax() }),
        }
    }
    let config = Configuration::from_vec(&x.into());
    Ok(QuasiStepReport { config, iterations, residual_history: history })
}
