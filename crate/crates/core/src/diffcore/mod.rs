//! Reverse-mode differentiation over the small operator set the networks
//! need: convolution, pooling, upsampling, activations, channel concat,
//! residual add and dense layers, plus SGD with momentum.
//!
//! A [`Tape`] records one forward pass against a borrowed [`ParamStore`].
//! `backward` returns a [`Gradients`] set that callers fold into the store
//! with [`ParamStore::accumulate`]; keeping the two apart lets independent
//! samples run on separate tapes and be reduced in a fixed order.

mod gradcheck;
mod param;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, finite_difference_check_coords, relative_error};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use real::Real;
#[cfg(test)]
pub(crate) use tape::softmax;
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;
