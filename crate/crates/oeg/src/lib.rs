//! Behavioral face-dynamics pipeline: Riemannian shape geodesics, VAR
//! coherence sequence kernels, GMM-UBM supervectors, Gaussian-process
//! regression and a tensor-based counterfactual treatment recommender.

pub mod causal;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gpr;
pub mod io;
pub mod manifold;
pub mod pipeline;
pub mod synth;
pub mod ubm;

pub use error::{OegError, Result};
