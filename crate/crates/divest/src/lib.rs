//! # divest
//!
//! Estimation of f-divergences (KL, χ²) and likelihood ratios between two
//! sampled distributions, by convex M-estimation over Gaussian reproducing-kernel
//! function classes.
//!
//! Given i.i.d. samples `y₁…yₙ ~ P` and `x₁…xₙ ~ Q`, the variational lower bound
//!
//! ```text
//! D_φ(P,Q) ≥ sup_f ∫ f dQ − ∫ φ*(f) dP
//! ```
//!
//! turns divergence estimation into empirical risk minimization. With the
//! function class anchored in a Gaussian RKHS and a squared Hilbert-norm
//! penalty, the fit reduces to an n-dimensional convex dual program over the
//! Gram matrix. Two KL estimators are provided:
//!
//! - **M1** — RKHS structure on the ratio class `G` itself; the dual is a
//!   log-barrier plus quadratic, and the fitted ratio `ĝ` is a kernel expansion.
//! - **M2** — RKHS structure on `log G`; the dual is an entropy plus quadratic,
//!   and `ĝ = exp⟨ŵ,Φ(·)⟩` is positive everywhere.
//!
//! A penalized least-squares estimator for the χ²-divergence `∫ p²/q dμ`, a
//! WKV-style partition baseline, analytic distribution oracles, ratio-quality
//! metrics (generalized Hellinger, surrogate and Bregman distances), and a
//! reproducible sweep harness with a CLI round out the crate.
//!
//! Core numerics are generic over the scalar type via [`Scalar`] (implemented
//! for `f32` and `f64`); concrete `f64` aliases are exported at the crate root.
//!
//! ## Quick start
//!
//! ```
//! use divest::{DistSpec, KernelSpec, SolverConfig};
//! use divest::estimators::{fit_m2, m2_kl_estimate};
//!
//! let p: DistSpec<f64> = "gauss:1,1".parse().unwrap();
//! let q: DistSpec<f64> = "gauss:0,1".parse().unwrap();
//! let y = p.sample(500, 7).unwrap();  // from P
//! let x = q.sample(500, 8).unwrap();  // from Q
//! let kernel = KernelSpec::new(0.1).unwrap();
//! let model = fit_m2(&x, &y, &kernel, 1.0 / 500.0, &SolverConfig::default()).unwrap();
//! let est = m2_kl_estimate(&model);
//! assert!((est.value - 0.5).abs() < 0.3); // true KL is 0.5
//! ```

#![forbid(unsafe_code)]

use thiserror::Error;

pub mod baselines;
pub mod cli;
pub mod distributions;
pub mod estimators;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod solver;
pub mod special;

pub use distributions::{DistSpec, RatioOracle, Truth, TruthMethod};
pub use kernel::{GramBlocks, KernelSpec, PointSet};
pub use scalar::Scalar;
pub use solver::{ConvexObjective, SolverConfig, SolverResult};

/// Errors for divergence estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),

    #[error("bandwidth error: {0}")]
    Bandwidth(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("infeasible at index {index}: {message}")]
    Infeasible { index: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Process exit code for the CLI: 2 for bad input, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Bandwidth(_) | Error::Parse { .. } | Error::Usage(_) => 2,
            Error::Numeric(_)
            | Error::Sampling(_)
            | Error::Infeasible { .. }
            | Error::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

// Concrete aliases for the common double-precision instantiation.
pub type KernelSpec64 = kernel::KernelSpec<f64>;
pub type PointSet64 = kernel::PointSet<f64>;
pub type GramBlocks64 = kernel::GramBlocks<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type DistSpec64 = distributions::DistSpec<f64>;
pub type RatioModelM164 = estimators::RatioModelM1<f64>;
pub type RatioModelM264 = estimators::RatioModelM2<f64>;
pub type RatioModelChi264 = estimators::RatioModelChi2<f64>;
pub type DivergenceEstimate64 = estimators::DivergenceEstimate<f64>;
pub type ExperimentConfig64 = harness::ExperimentConfig<f64>;
pub type SweepResult64 = harness::SweepResult<f64>;
