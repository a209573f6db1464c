//! Sparse equation discovery for ordinary differential equations by
//! push-forward rejection sampling.
//!
//! A model is `dx/dt = lambda * theta(x)` for a library `theta` of candidate
//! terms and a sparse coefficient matrix `lambda`. Prior samples of `lambda`
//! are simulated forward, scored against a kernel density estimate of the
//! observed trajectories, and accepted by rejection. A matched block
//! bootstrap supplies replicate paths when only one trajectory is observed,
//! and a finite-difference STLSQ regression serves as a comparator.

// `!(x > 0.0)` is used deliberately so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod bootstrap;
pub mod coeffs;
pub mod density;
pub mod error;
pub mod infer;
pub mod library;
pub mod noise;
pub mod path;
pub mod priors;
pub mod seed;
pub mod simulate;
pub mod stats;

pub use coeffs::CoefficientMatrix;
pub use error::{Error, Result};
pub use library::{build_library, TermDescriptor, TermLibrary};
pub use noise::{add_noise, NoiseKind, NoiseSpec};
pub use path::{Dataset, SamplePath};
pub use simulate::{integrate, push_forward, IntegratorConfig, SimOutcome};
