//! Dense function approximation: tanh multilayer perceptrons with a hand-written
//! backward pass, forward-mode tangents, flat parameter vectors and Adam.

mod adam;
mod mlp;
mod params;

pub use adam::Adam;
pub use mlp::{Backward, ForwardCache, Mlp};
pub use params::{ParameterGradient, ParameterVector};
