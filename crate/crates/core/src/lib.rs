//! Plan-guided reinforcement learning for a planar pivot-and-lift task.
//!
//! A sampling-based planner searches through contact in a quasi-dynamic model and
//! produces a (possibly infeasible) plan; its robot-configuration sequence becomes the
//! style dataset of an adversarial motion prior, which is combined with a shaped task
//! reward and optimized with PPO under domain randomization.

pub mod amp;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod planner;
pub mod ppo;
pub mod sim;

pub use error::{Error, Result};
