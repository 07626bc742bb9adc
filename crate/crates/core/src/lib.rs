//! Disentangling autoencoder laboratory.
//!
//! The model pipeline is encoder → batch min-max normalisation → per-feature
//! Λ scaling → nearest-neighbour Gaussian interpolation → Euler (circle) map →
//! decoder, trained on reconstruction loss alone. Alongside it live a small
//! reverse-mode autodiff engine ([`tensor`]), PCA-based Λ estimation
//! ([`linalg`]), the 2D toy factor datasets ([`datasets`]), baseline
//! autoencoders ([`model`]) and five supervised disentanglement scores
//! ([`metrics`]).

mod binio;
pub mod datasets;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::{Rng, Stream};
pub use tensor::{Tape, Tensor, Var};
