//! Dense tensors, a reverse-mode tape, Adam and differentiable sampling.

mod adam;
mod gradcheck;
mod gumbel;
pub(crate) mod kernels;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::finite_difference_check;
pub use gumbel::{gumbel_softmax, DEFAULT_TEMPERATURE};
pub use params::{Bound, ParamId, ParamStore};
pub use rng::{streams, RngStream};
pub use tape::{Attrs, Degree, Gradients, OpKind, Tape, Var, LEAKY_SLOPE};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
