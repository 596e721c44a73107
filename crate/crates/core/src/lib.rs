//! Physics-informed networks with memory-gated residual micro-steps.
//!
//! The crate holds two representation networks (a tanh MLP and an
//! xLSTM-style block stack), the four PDE benchmarks they are trained on,
//! an Adam training loop over collocation losses, and a frequency-domain
//! probe suite for spectral bias. Input-space derivatives up to fourth order
//! come from Taylor jets recorded on a tensor tape, so every PDE residual is
//! differentiated exactly with respect to the network parameters.

pub mod autodiff;
mod error;
pub mod model;
pub mod problems;
pub mod report;
pub mod spectral;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
