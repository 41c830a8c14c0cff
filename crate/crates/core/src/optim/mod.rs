//! Weight initialization and first-order optimizers.

mod init;
mod optimizer;

pub use init::{truncated_normal_init, xavier_bound, xavier_init, InitKind, InitSpec};
pub use optimizer::{sgd_step, Optimizer, OptimizerKind};
