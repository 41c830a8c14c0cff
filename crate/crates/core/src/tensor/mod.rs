//! N-dimensional arrays with tape-based reverse-mode differentiation and
//! the layer primitives the model zoo is built from (NHWC layout).

mod geometry;
mod gradcheck;
mod real;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use geometry::{output_dim, Padding, Window2d};
pub use gradcheck::{finite_diff_check, finite_diff_check_excluding, relative_error};
pub use real::Real;
pub use tape::{Activation, Tape, Var};
pub use tensor::{softmax, Tensor};

#[cfg(test)]
mod tests;
