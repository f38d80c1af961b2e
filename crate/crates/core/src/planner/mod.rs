//! Sampling-based planning through contact in the quasi-dynamic model, plan refinement
//! and projection of plans onto robot-only demonstrations.

mod io;
mod refine;
mod replay;

mod rrt;

use serde::{Deserialize, Serialize};

use crate::sim::Configuration;

pub use io::{demo_from_str, demo_to_string, plan_from_str, plan_to_string, read_demo, read_plan, write_demo, write_plan, FileHeader, FORMAT_VERSION};
pub use refine::{refine, replay_plan, resample_linear, resample_uniform};
pub use replay::{open_loop_replay, replay_commands};

pub use rrt::{config_valid, extend, nearest_node, plan, plan_tree, pose_distance, push, sample_subgoal, ExtendFailure, PlanOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Probability of sampling the goal as the subgoal.
    pub p_goal: f64,
    /// Weight of squared planar translation in the nearest-node metric.
    pub w_xy: f64,
    /// Weight of squared wrapped rotation in the nearest-node metric (m^2/rad^2).
    pub w_theta: f64,
    /// Quasi-dynamic steps per push edge.
    pub steps_per_extension: usize,
    pub max_nodes: usize,
    /// Optional wall-clock budget (s).
    pub max_seconds: Option<f64>,
    pub goal_tolerance_trans: f64,
    pub goal_tolerance_rot: f64,
    /// Box pose sampling bounds `[min, max]` for x, z and theta.
    pub bounds: [[f64; 2]; 3],
    /// Teleport standoff as a multiple of the fingertip radius.
    pub standoff_factor: f64,
    /// Commanded fingertip depth inside the box while pinching opposite faces (m).
    pub squeeze: f64,
    /// Largest box translation requested by one push edge (m).
    pub max_push_trans: f64,
    /// Largest box rotation requested by one push edge (rad).
    pub max_push_rot: f64,
    /// Per-step joint command change limit (rad).
    pub max_joint_step: f64,
    /// Probability of keeping the current contacts instead of regrasping.
    pub reuse_contacts: f64,
    /// Probability that a finger is left free in a new contact assignment.
    pub free_finger: f64,
    /// Most negative signed distance accepted on any contact pair (m).
    pub penetration_tolerance: f64,
    /// Random shortcut attempts during refinement.
    pub shortcut_attempts: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            p_goal: 0.2,
            w_xy: 1.0,
            w_theta: 0.1,
            steps_per_extension: 10,
            max_nodes: 20_000,
            max_seconds: None,
            goal_tolerance_trans: 0.05,
            goal_tolerance_rot: 0.2,
            bounds: [[0.05, 0.75], [0.1, 0.6], [-2.0, 0.5]],
            standoff_factor: 1.5,
            squeeze: 0.03,
            max_push_trans: 0.1,
            max_push_rot: 0.3,
            max_joint_step: 0.05,
            reuse_contacts: 0.5,
            free_finger: 0.15,
            penetration_tolerance: 5e-3,
            shortcut_attempts: 100,
        }
    }
}

/// Box face in the box frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Left,
    Top,
    Bottom,
}

impl Face {
    pub const ALL: [Face; 3] = [Face::Left, Face::Top, Face::Bottom];
}

/// Fingertip placement on a face; `offset` in `[-1, 1]` spans the face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerContact {
    pub face: Face,
    pub offset: f64,
}

impl FingerContact {
    /// Contact point and outward normal in the box frame.
    pub fn local_frame(&self, half: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let [hx, hz] = half;
        match self.face {
            Face::Left => ([-hx, self.offset * hz], [-1.0, 0.0]),
            Face::Top => ([self.offset * hx, hz], [0.0, 1.0]),
            Face::Bottom => ([self.offset * hx, -hz], [0.0, -1.0]),
        }
    }
}

/// Contact assignment of fingers 0 and 1; `None` leaves the finger free.
pub type ContactAssignment = [Option<FingerContact>; 2];

#[derive(Debug, Clone, PartialEq)]
pub enum Edge {
    Root,
    /// Instantaneous robot relocation with the box pose held fixed.
    Teleport,
    /// One stiffness command per quasi-dynamic step and the resulting configurations.
    Push {
        commands: Vec<[f64; 4]>,
        path: Vec<Configuration>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub config: Configuration,
    pub parent: Option<usize>,
    pub edge: Edge,
    /// Stiffness command in effect at this node.
    pub command: [f64; 4],
    pub contacts: ContactAssignment,
}

impl TreeNode {
    pub fn steps_from_parent(&self) -> usize {
        match &self.edge {
            Edge::Root => 0,
            Edge::Teleport => 1,
            Edge::Push { commands, .. } => commands.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub q_a: [f64; 4],
    pub q_u: [f64; 3],
    /// Command applied from this step to the next.
    pub a: [f64; 4],
    /// True when the transition into the next step is a teleport.
    pub teleport: bool,
}

impl PlanStep {
    pub fn config(&self) -> Configuration {
        Configuration::new(self.q_a, self.q_u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanTrajectory {
    pub steps: Vec<PlanStep>,
    /// Time between consecutive steps (s).
    pub dt: f64,
}

impl PlanTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn teleport_count(&self) -> usize {
        self.steps.iter().filter(|s| s.teleport).count()
    }

    /// Total joint-space path length (sum of per-step Euclidean q_a changes).
    pub fn path_length(&self) -> f64 {
        self.steps.windows(2).map(|w| w[0].q_a.iter().zip(&w[1].q_a).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub q_a: Vec<[f64; 4]>,
    pub dt: f64,
    pub seed: u64,
    pub scene_hash: String,
}

/// Keeps only the robot configurations of a plan.
pub fn extract_demo(plan: &PlanTrajectory, seed: u64, scene_hash: &str) -> Demonstration {
    Demonstration { q_a: plan.steps.iter().map(|s| s.q_a).collect(), dt: plan.dt, seed, scene_hash: scene_hash.to_string() }
}
