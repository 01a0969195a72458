//! The two architectures: a LinkNet-style region detector and the
//! multiscale cascaded multitask (MSC-MT) network. Every architectural
//! addition of the latter is a switch in [`NetworkConfig`].
//!
//! Both are built from ResBlocks (strided conv pair with a projected
//! shortcut) and decoder blocks (1×1 reduce, nearest 2× upsample, 3×3 conv)
//! with additive skips from the matching encoder block.

mod config;
mod gradcheck;
mod network;
mod objective;

pub use config::{CascadeLevel, NetworkConfig};
pub use gradcheck::{network_gradient_check, objective_gradient, GradCheckReport};
pub use network::{build_mscmt_net, build_region_net, NetKind, Network, Outputs, PredictionPair};
pub use objective::{objective_value, record_objective, LossTerms, Target};

#[cfg(test)]
mod tests;
