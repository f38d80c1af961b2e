//! Dense networks with recorded forward passes, analytic backward passes and Adam.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod mlp;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{finite_diff_check, min_kink_margin};
pub use mlp::{Activation, Gradients, Mlp, MlpSpec, Tape};
pub use tensor::{gemm, Tensor};
