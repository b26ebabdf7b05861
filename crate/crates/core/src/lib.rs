//! Robust estimation for corrupted generalized linear models with heavy-tailed
//! features.
//!
//! The crate provides
//! - preprocessing operators that shrink feature vectors (ℓ4 / ℓ2 norm) or clip
//!   them elementwise and clip responses ([`shrink`]),
//! - exact evaluation of GLM negative log-likelihoods, the noisy-label weighted
//!   loss, their gradients and Hessians ([`glm`]),
//! - damped Newton and accelerated proximal-gradient solvers ([`optimize`]),
//! - seeded synthetic data generation ([`datagen`]) and a Monte Carlo benchmark
//!   harness with cross-validation ([`bench`]).
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). Data
//! generation and benchmarking run in `f64`; the `*64` aliases below name the
//! concrete types used there.

pub mod bench;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod optimize;
pub mod rng;
pub mod scalar;
pub mod shrink;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use glm::{Family, Loss};
pub use optimize::{FitResult, SolverOpts};
pub use scalar::Scalar;
pub use shrink::{FeatureMode, NormKind, ResponseMode, ShrinkSpec, TauScale};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
