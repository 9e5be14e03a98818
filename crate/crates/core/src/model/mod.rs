//! Network assembly for the four block families in every convolution mode.

mod build;
mod network;
mod spec;

pub use build::{build_model, OUTPUTS, STEM_LAYERS};
pub use network::{Gradients, Network, NetworkBuilder, Node, Op, ParameterStore, Tape};
pub use spec::{Family, ModelSpec};
