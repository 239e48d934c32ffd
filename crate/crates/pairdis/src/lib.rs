//! Weakly-supervised disentanglement of VAE latent variables from
//! pairwise similarity labels.
//!
//! The model splits the latent code into a relevant block z^(u) tied to a
//! single factor of interest through a similarity likelihood over pairs,
//! and a residual block z^(v) that absorbs everything else. Training
//! maximizes reconstruction + pairwise log-likelihood + an asymmetric KL
//! regularizer that penalizes z^(u) capacity with weight beta.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `pairdis` binary for the experiment pipeline.

pub mod datasets;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;
pub mod similarity;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub mod cli;

pub use error::{Error, Result};
pub use tensor::Tensor;
