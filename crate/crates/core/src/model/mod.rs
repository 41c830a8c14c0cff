//! Network architectures, parameter counting and checkpoints.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint};
pub use network::{batch_from_images, ForwardPass, Network};
pub use spec::{count_params, Layer, ModelSpec, Variant};
