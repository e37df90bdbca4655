//! The kernel M-estimators.
//!
//! Fitting maximizes the empirical variational bound
//! `∫ f dQ_n − ∫ φ*(f) dP_n` over a penalized RKHS class; each estimator is
//! the convex dual of that program over the Gram matrix:
//!
//! - [`fit_m1`] — RKHS structure on the ratio class itself. Dual objective
//!   `−1 − (1/n) Σ_j log(nα_j) + quadratic(α)`, strong duality with the primal
//!   through the kernel-expansion link `ŵ = (1/λ)(Σ_j α̂_j Φ(y_j) − (1/n) Σ_i Φ(x_i))`.
//! - [`fit_m2`] — RKHS structure on the log-ratio. Dual objective
//!   `Σ_i α_i log(nα_i) − α_i + quadratic(α)`; the fitted ratio
//!   `exp⟨ŵ,Φ(·)⟩` is positive everywhere.
//! - [`fit_chi2`] — penalized least-squares fit of the ratio for the
//!   χ²-divergence `∫ p²/q dμ`, a single linear system over pooled anchors.
//!
//! Orientation note: `x` always denotes the sample from `Q` and `y` the sample
//! from `P`, matching the estimated divergence `D(P‖Q) = ∫ p log(p/q)`.

mod chi2;
mod m1;
mod m2;

pub use chi2::{chi2_divergence_estimate, chi2_ratio_at, fit_chi2, RatioModelChi2};
pub use m1::{fit_m1, m1_kl_estimate, m1_ratio_at, RatioModelM1};
pub use m2::{fit_m2, m2_kl_estimate, m2_log_ratio_at, RatioModelM2};

use crate::scalar::Scalar;
use crate::{argument, Error, Result};

/// Which estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorId {
    M1,
    M2,
    Chi2,
    Wkv,
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorId::M1 => "m1",
            EstimatorId::M2 => "m2",
            EstimatorId::Chi2 => "chi2",
            EstimatorId::Wkv => "wkv",
        })
    }
}

/// A scalar divergence estimate (nats) with solver diagnostics.
#[derive(Debug, Clone)]
pub struct DivergenceEstimate<T> {
    pub value: T,
    pub estimator_id: EstimatorId,
    pub n: usize,
    pub lambda: T,
    pub sigma: T,
    pub duality_gap: Option<T>,
    pub solver_iterations: Option<usize>,
}

/// Convergence bookkeeping carried by the fitted models.
#[derive(Debug, Clone, Copy)]
pub struct FitStats<T> {
    pub iterations: usize,
    pub converged: bool,
    pub grad_sup_norm: T,
}

/// Plug-in divergence `∫ f dQ_n − ∫ φ*(f) dP_n` from per-sample values of a
/// candidate dual function `f`.
///
/// `f_on_x` holds `f` at the Q-sample and `f_on_y` at the P-sample; `φ*` is
/// applied to the P side. For the KL pair `φ*(v) = −1 − log(−v)`, `f = −g`,
/// this reproduces the penalty-free KL objective `∫ log g dP_n − ∫ g dQ_n + 1`.
///
/// Fails with the offending index when `φ*` is infinite at some P-sample value.
pub fn plugin_dphi<T: Scalar>(f_on_y: &[T], f_on_x: &[T], phi_star: impl Fn(T) -> T) -> Result<T> {
    if f_on_y.is_empty() || f_on_x.is_empty() {
        return Err(argument("plug-in estimator needs nonempty sample values"));
    }
    let mut p_side = T::zero();
    for (index, &v) in f_on_y.iter().enumerate() {
        let s = phi_star(v);
        if !s.is_finite() {
            return Err(Error::Infeasible {
                index,
                message: format!("phi* is not finite at value {v}"),
            });
        }
        p_side += s;
    }
    let q_side: T = f_on_x.iter().copied().sum();
    Ok(q_side / T::cast(f_on_x.len() as f64) - p_side / T::cast(f_on_y.len() as f64))
}

/// `φ*` for the KL divergence: `−1 − log(−v)` on `v < 0`, `+∞` elsewhere.
pub fn kl_phi_star<T: Scalar>(v: T) -> T {
    if v < T::zero() {
        -T::one() - (-v).ln()
    } else {
        T::infinity()
    }
}

/// `φ*` for `φ(u) = 1/u` (the χ² case): `−2√(−v)` on `v ≤ 0`, `+∞` elsewhere.
pub fn chi2_phi_star<T: Scalar>(v: T) -> T {
    if v <= T::zero() {
        -T::cast(2.0) * (-v).sqrt()
    } else {
        T::infinity()
    }
}
