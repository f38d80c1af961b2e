use std::time::Instant;

use nalgebra::Vector2;
use rand::Rng;

use super::{ContactAssignment, Edge, Face, FingerContact, PlanStep, PlanTrajectory, PlannerConfig, TreeNode};
use crate::error::{Error, Result};
use crate::sim::geometry::rotate;
use crate::sim::kinematics::fingertip;
use crate::sim::{inverse_kinematics, quasi_dynamic_step, signed_distances, wrap_angle, Configuration, WorldParams};

/// Draws the next subgoal: the goal with probability `p_goal`, else a uniform pose in `bounds`.
pub fn sample_subgoal<R: Rng + ?Sized>(goal: [f64; 3], bounds: &[[f64; 2]; 3], p_goal: f64, rng: &mut R) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&p_goal) {
        return Err(Error::Precondition(format!("p_goal must lie in [0, 1], got {p_goal}")));
    }
    if rng.random::<f64>() < p_goal {
        return Ok(goal);
    }
    Ok(bounds.map(|[lo, hi]| lo + (hi - lo) * rng.random::<f64>()))
}

/// Weighted squared pose distance used to pick the node to extend.
pub fn pose_distance(a: &[f64; 3], b: &[f64; 3], w_xy: f64, w_theta: f64) -> f64 {
    let dx = a[0] - b[0];
    let dz = a[1] - b[1];
    let dt = wrap_angle(a[2] - b[2]);
    w_xy * (dx * dx + dz * dz) + w_theta * dt * dt
}

/// Index of the node closest to `target`; ties go to the lowest index.
pub fn nearest_node(nodes: &[TreeNode], target: &[f64; 3], w_xy: f64, w_theta: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, n) in nodes.iter().enumerate() {
        let d = pose_distance(&n.config.q_u, target, w_xy, w_theta);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Why an extension was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtendFailure {
    Unreachable,
    Invalid,
    Solver,
}

fn distances_to_goal(q_u: &[f64; 3], goal: &[f64; 3]) -> (f64, f64) {
    ((q_u[0] - goal[0]).hypot(q_u[1] - goal[1]), wrap_angle(q_u[2] - goal[2]).abs())
}

pub fn config_valid(q: &Configuration, world: &WorldParams, cfg: &PlannerConfig) -> bool {
    if !q.is_finite() {
        return false;
    }
    let tol = cfg.penetration_tolerance;
    if signed_distances(q, world).min_phi() < -tol {
        return false;
    }
    let r = world.fingertip_radius;
    for arm in 0..2 {
        let tip = fingertip(world, arm, q.q_a[2 * arm], q.q_a[2 * arm + 1]);
        if tip.x < r - tol || tip.y < r - tol {
            return false;
        }
    }
    let [bx, bz, _] = cfg.bounds;
    let margin = 0.2;
    q.q_u[0] > bx[0] - margin && q.q_u[0] < bx[1] + margin && q.q_u[1] < bz[1] + margin
}

fn finger_target(world: &WorldParams, q_u: &[f64; 3], contact: &FingerContact, clearance: f64) -> Vector2<f64> {
    let (p, n) = contact.local_frame(world.box_half_extents);
    let d = world.fingertip_radius + clearance;
    Vector2::new(q_u[0], q_u[1]) + rotate(q_u[2], Vector2::new(p[0] + n[0] * d, p[1] + n[1] * d))
}

fn sample_assignment<R: Rng + ?Sized>(cfg: &PlannerConfig, rng: &mut R) -> ContactAssignment {
    let mut out: ContactAssignment = [None, None];
    for slot in &mut out {
        if rng.random::<f64>() >= cfg.free_finger {
            let face = Face::ALL[rng.random_range(0..Face::ALL.len())];
            *slot = Some(FingerContact { face, offset: rng.random_range(-0.9..0.9) });
        }
    }
    if out == [None, None] {
        let face = Face::ALL[rng.random_range(0..Face::ALL.len())];
        out[rng.random_range(0..2)] = Some(FingerContact { face, offset: rng.random_range(-0.9..0.9) });
    }
    out
}

fn teleport(
    world: &WorldParams,
    cfg: &PlannerConfig,
    from: &Configuration,
    home: &[f64; 4],
    contacts: &ContactAssignment,
) -> std::result::Result<Configuration, ExtendFailure> {
    let mut q_a = *from;
    for (arm, c) in contacts.iter().enumerate() {
        let joints = match c {
            Some(c) => {
                let target = finger_target(world, &from.q_u, c, cfg.standoff_factor * world.fingertip_radius);
                inverse_kinematics(world, arm, target, [from.q_a[2 * arm], from.q_a[2 * arm + 1]]).ok_or(ExtendFailure::Unreachable)?
            }
            None => [home[2 * arm], home[2 * arm + 1]],
        };
        q_a.q_a[2 * arm] = joints[0];
        q_a.q_a[2 * arm + 1] = joints[1];
    }
    if !config_valid(&q_a, world, cfg) {
        return Err(ExtendFailure::Invalid);
    }
    Ok(q_a)
}

/// Requested box displacement toward `subgoal`, clipped to the per-edge bounds.
fn push_displacement(from: &[f64; 3], subgoal: &[f64; 3], cfg: &PlannerConfig) -> [f64; 3] {
    let mut dx = subgoal[0] - from[0];
    let mut dz = subgoal[1] - from[1];
    let norm = dx.hypot(dz);
    if norm > cfg.max_push_trans {
        dx *= cfg.max_push_trans / norm;
        dz *= cfg.max_push_trans / norm;
    }
    let dt = wrap_angle(subgoal[2] - from[2]).clamp(-cfg.max_push_rot, cfg.max_push_rot);
    [dx, dz, dt]
}

#[allow(clippy::type_complexity)]
pub fn push(
    world: &WorldParams,
    cfg: &PlannerConfig,
    start: &Configuration,
    start_cmd: &[f64; 4],
    contacts: &ContactAssignment,
    subgoal: &[f64; 3],
) -> std::result::Result<(Vec<[f64; 4]>, Vec<Configuration>), ExtendFailure> {
    let d = push_displacement(&start.q_u, subgoal, cfg);
    let k_steps = cfg.steps_per_extension;
    let mut cmd = *start_cmd;
    let mut q = *start;
    let mut commands = Vec::with_capacity(k_steps);
    let mut path = Vec::with_capacity(k_steps);
    let pinch = matches!(
        contacts,
        [Some(FingerContact { face: Face::Top, .. }), Some(FingerContact { face: Face::Bottom, .. })]
            | [Some(FingerContact { face: Face::Bottom, .. }), Some(FingerContact { face: Face::Top, .. })]
    );
    let depth = if pinch { cfg.squeeze } else { 0.0 };
    for k in 1..=k_steps {
        let frac = k as f64 / k_steps as f64;
        let pose = [start.q_u[0] + frac * d[0], start.q_u[1] + frac * d[1], start.q_u[2] + frac * d[2]];
        for (arm, c) in contacts.iter().enumerate() {
            let Some(c) = c else { continue };
            let target = finger_target(world, &pose, c, -depth);
            if let Some(ik) = inverse_kinematics(world, arm, target, [cmd[2 * arm], cmd[2 * arm + 1]]) {
                for j in 0..2 {
                    let i = 2 * arm + j;
                    cmd[i] += (ik[j] - cmd[i]).clamp(-cfg.max_joint_step, cfg.max_joint_step);
                }
            }
        }
        q = quasi_dynamic_step(&q, &cmd, world).map_err(|_| ExtendFailure::Solver)?;
        if !config_valid(&q, world, cfg) {
            return Err(ExtendFailure::Invalid);
        }
        commands.push(cmd);
        path.push(q);
    }
    Ok((commands, path))
}

/// Grows the tree from node `from` toward `subgoal`: optionally regrasps (teleport
/// node) and then pushes for `steps_per_extension` quasi-dynamic steps (push node).
/// Returns the indices of the appended nodes.
pub fn extend<R: Rng + ?Sized>(
    nodes: &mut Vec<TreeNode>,
    from: usize,
    subgoal: &[f64; 3],
    home: &[f64; 4],
    world: &WorldParams,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> std::result::Result<Vec<usize>, ExtendFailure> {
    let parent = &nodes[from];
    let in_contact = parent.contacts.iter().any(Option::is_some);
    let reuse = in_contact && rng.random::<f64>() < cfg.reuse_contacts;
    let (contacts, teleported) = if reuse {
        (parent.contacts, None)
    } else {
        let contacts = sample_assignment(cfg, rng);
        (contacts, Some(teleport(world, cfg, &parent.config, home, &contacts)?))
    };
    let (start, start_cmd) = match &teleported {
        Some(q) => (*q, q.q_a),
        None => (parent.config, parent.command),
    };
    let (commands, path) = push(world, cfg, &start, &start_cmd, &contacts, subgoal)?;
    let mut added = Vec::with_capacity(2);
    let mut push_parent = from;
    if let Some(q) = teleported {
        nodes.push(TreeNode { config: q, parent: Some(from), edge: Edge::Teleport, command: q.q_a, contacts });
        push_parent = nodes.len() - 1;
        added.push(push_parent);
    }
    let config = *path.last().expect("at least one push step");
    let command = *commands.last().expect("at least one push step");
    nodes.push(TreeNode { config, parent: Some(push_parent), edge: Edge::Push { commands, path }, command, contacts });
    added.push(nodes.len() - 1);
    Ok(added)
}

/// Result of growing a tree, successful or not.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub nodes: Vec<TreeNode>,
    pub goal_node: Option<usize>,
    /// Node closest to the goal under the planner metric.
    pub best_node: usize,
    pub extensions: usize,
    pub failed_extensions: usize,
}

impl PlanOutcome {
    pub fn best_distances(&self, goal: &[f64; 3]) -> (f64, f64) {
        distances_to_goal(&self.nodes[self.best_node].config.q_u, goal)
    }

    /// Node indices from the root to `node`.
    pub fn branch(&self, node: usize) -> Vec<usize> {
        let mut ids = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            ids.push(p);
            cur = p;
        }
        ids.reverse();
        ids
    }

    /// Time-indexed trajectory from the root to `node`.
    pub fn trajectory(&self, node: usize, dt: f64) -> PlanTrajectory {
        let ids = self.branch(node);
        let root = &self.nodes[ids[0]];
        let mut steps = vec![PlanStep { q_a: root.config.q_a, q_u: root.config.q_u, a: root.command, teleport: false }];
        for &id in &ids[1..] {
            let n = &self.nodes[id];
            match &n.edge {
                Edge::Root => unreachable!("root has no parent"),
                Edge::Teleport => {
                    let last = steps.last_mut().expect("non-empty");
                    last.a = n.config.q_a;
                    last.teleport = true;
                    steps.push(PlanStep { q_a: n.config.q_a, q_u: n.config.q_u, a: n.command, teleport: false });
                }
                Edge::Push { commands, path } => {
                    for (c, q) in commands.iter().zip(path) {
                        let last = steps.last_mut().expect("non-empty");
                        last.a = *c;
                        last.teleport = false;
                        steps.push(PlanStep { q_a: q.q_a, q_u: q.q_u, a: *c, teleport: false });
                    }
                }
            }
        }
        PlanTrajectory { steps, dt }
    }
}

fn within_goal(q_u: &[f64; 3], goal: &[f64; 3], cfg: &PlannerConfig) -> bool {
    let (dt, dr) = distances_to_goal(q_u, goal);
    dt <= cfg.goal_tolerance_trans && dr <= cfg.goal_tolerance_rot
}

/// Grows an RRT over box poses until a node reaches the goal region or the node or
/// time budget runs out. The root's joint configuration doubles as the home posture
/// that free fingers return to on regrasp.
pub fn plan_tree<R: Rng + ?Sized>(initial: &Configuration, goal: &[f64; 3], world: &WorldParams, cfg: &PlannerConfig, rng: &mut R) -> PlanOutcome {
    let root = TreeNode { config: *initial, parent: None, edge: Edge::Root, command: initial.q_a, contacts: [None, None] };
    let mut out = PlanOutcome { nodes: vec![root], goal_node: None, best_node: 0, extensions: 0, failed_extensions: 0 };
    if within_goal(&initial.q_u, goal, cfg) {
        out.goal_node = Some(0);
        return out;
    }
    let started = Instant::now();
    let home = initial.q_a;
    let mut best = pose_distance(&initial.q_u, goal, cfg.w_xy, cfg.w_theta);
    while out.nodes.len() < cfg.max_nodes {
        if cfg.max_seconds.is_some_and(|limit| started.elapsed().as_secs_f64() > limit) {
            break;
        }
        let subgoal = sample_subgoal(*goal, &cfg.bounds, cfg.p_goal, rng).unwrap_or(*goal);
        let near = nearest_node(&out.nodes, &subgoal, cfg.w_xy, cfg.w_theta).expect("tree has a root");
        out.extensions += 1;
        match extend(&mut out.nodes, near, &subgoal, &home, world, cfg, rng) {
            Ok(added) => {
                for id in added {
                    let q_u = out.nodes[id].config.q_u;
                    let d = pose_distance(&q_u, goal, cfg.w_xy, cfg.w_theta);
                    if d < best {
                        best = d;
                        out.best_node = id;
                    }
                    if within_goal(&q_u, goal, cfg) {
                        out.goal_node = Some(id);
                        return out;
                    }
                }
            }
            Err(_) => out.failed_extensions += 1,
        }
    }
    out
}

/// Plans from `initial` to the goal pose and returns the back-chained trajectory.
pub fn plan<R: Rng + ?Sized>(initial: &Configuration, goal: &[f64; 3], world: &WorldParams, cfg: &PlannerConfig, rng: &mut R) -> Result<PlanTrajectory> {
    let outcome = plan_tree(initial, goal, world, cfg, rng);
    match outcome.goal_node {
        Some(id) => Ok(outcome.trajectory(id, world.quasi.step)),
        None => {
            let (best_trans, best_rot) = outcome.best_distances(goal);
            Err(Error::Planning { best_trans, best_rot, nodes: outcome.nodes.len() })
        }
    }
}
