//! The M1 estimator: RKHS structure imposed on the ratio class `G`.
//!
//! Primal (over the Hilbert weight `w`, samples `x ~ Q`, `y ~ P`):
//!
//! ```text
//! J(w) = (1/n) Σ_i ⟨w,Φ(x_i)⟩ − (1/n) Σ_j log⟨w,Φ(y_j)⟩ + (λ/2)‖w‖²_H
//! ```
//!
//! Its dual is minimized here over `α > 0`:
//!
//! ```text
//! G(α) = −1 − (1/n) Σ_j log(nα_j) + (1/2λ) αᵀK_yy α
//!        + (1/2λn²) 1ᵀK_xx 1 − (1/λn) 1ᵀK_xy α
//! ```
//!
//! with `min J = −min G` and the primal weight recovered as
//! `ŵ = (1/λ)(Σ_j α̂_j Φ(y_j) − (1/n) Σ_i Φ(x_i))`. Fenchel stationarity gives
//! `n α̂_j ĝ(y_j) = 1` at the optimum, which is what the KL readout
//! `D̂_K = −(1/n) Σ_j log(n α̂_j)` exploits.

use super::{DivergenceEstimate, EstimatorId, FitStats};
use crate::kernel::{GramBlocks, KernelSpec, PointSet};
use crate::linalg::{dot, Mat, PartialCholesky};
use crate::scalar::Scalar;
use crate::solver::{minimize_positive, ConvexObjective, Hessian, SolverConfig};
use crate::{argument, Result};

const PCHOL_TOL: f64 = 1e-10;
const PCHOL_MAX_RANK: usize = 384;

/// Fitted M1 ratio model: dual weights over the P-sample anchors.
#[derive(Debug, Clone)]
pub struct RatioModelM1<T> {
    pub alpha: Vec<T>,
    /// Sample from Q.
    pub x_anchors: PointSet<T>,
    /// Sample from P.
    pub y_anchors: PointSet<T>,
    pub lambda: T,
    pub kernel: KernelSpec<T>,
    /// `J(ŵ)` evaluated through the kernel expansion; `+∞` when some
    /// `ĝ(y_j) ≤ 0` (only possible on non-converged fits).
    pub primal_value: T,
    /// The dual minimum `G(α̂)`; strong duality means `primal + dual ≈ 0`.
    pub dual_value: T,
    /// `‖ŵ‖²_H` computed from the Gram blocks.
    pub hilbert_norm_sq: T,
    pub stats: FitStats<T>,
}

struct M1Dual<'a, T> {
    kyy: &'a Mat<T>,
    factor: &'a PartialCholesky<T>,
    inv_lambda: T,
    inv_n: T,
    /// `b_j = (1/λn) Σ_i K(x_i, y_j)`
    b: Vec<T>,
    constant: T,
}

impl<T: Scalar> ConvexObjective<T> for M1Dual<'_, T> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, alpha: &[T]) -> T {
        let n = alpha.len();
        let inv_n_t = self.inv_n;
        let mut barrier = T::zero();
        for &a in alpha {
            barrier += (a / inv_n_t).ln(); // log(n α_j)
        }
        let mut ka = vec![T::zero(); n];
        self.kyy.matvec(alpha, &mut ka);
        let quad = dot(alpha, &ka) * self.inv_lambda * T::cast(0.5);
        self.constant - inv_n_t * barrier + quad - dot(&self.b, alpha)
    }

    fn gradient(&self, alpha: &[T]) -> Vec<T> {
        let n = alpha.len();
        let mut g = vec![T::zero(); n];
        self.kyy.matvec(alpha, &mut g);
        for ((gi, &ai), &bi) in g.iter_mut().zip(alpha).zip(&self.b) {
            *gi = *gi * self.inv_lambda - self.inv_n / ai - bi;
        }
        g
    }

    fn hessian(&self, alpha: &[T]) -> Hessian<'_, T> {
        let diag = alpha.iter().map(|&a| self.inv_n / (a * a)).collect();
        Hessian::KernelShifted {
            diag,
            coeff: self.inv_lambda,
            gram: self.kyy,
            factor: self.factor,
        }
    }
}

/// Fit the M1 dual program. Equal sample sizes are required.
///
/// A non-converged solve is not an error: the model is returned with
/// `stats.converged == false` and the diagnostics still populated.
pub fn fit_m1<T: Scalar>(
    x_from_q: &PointSet<T>,
    y_from_p: &PointSet<T>,
    kernel: &KernelSpec<T>,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<RatioModelM1<T>> {
    let n = y_from_p.len();
    if x_from_q.len() != n {
        return Err(argument(format!(
            "M1 requires equal sample sizes, got {} from Q and {n} from P",
            x_from_q.len()
        )));
    }
    if !crate::scalar::is_positive_finite(lambda) {
        return Err(argument("lambda must be positive and finite"));
    }

    let GramBlocks { kyy, kxx, kxy } = GramBlocks::new(kernel, x_from_q, y_from_p)?;
    let n_t = T::cast(n as f64);
    let inv_n = T::one() / n_t;
    let inv_lambda = T::one() / lambda;

    let kxy_colsum = kxy.col_sums(); // Σ_i K(x_i, y_j)
    let kxx_rowsum = kxx.row_sums(); // Σ_i' K(x_i, x_i')
    let kxx_total = kxx.total();
    drop(kxx);

    let b: Vec<T> = kxy_colsum.iter().map(|&c| c * inv_lambda * inv_n).collect();
    let constant = -T::one() + kxx_total * inv_lambda * inv_n * inv_n * T::cast(0.5);

    let factor = PartialCholesky::new(&kyy, T::cast(PCHOL_TOL), PCHOL_MAX_RANK);
    let objective = M1Dual {
        kyy: &kyy,
        factor: &factor,
        inv_lambda,
        inv_n,
        b,
        constant,
    };
    let alpha0 = vec![inv_n; n];
    let solved = minimize_positive(&objective, &alpha0, cfg)?;
    let alpha = solved.alpha;

    // ĝ at both samples and ‖ŵ‖² through the Gram blocks, via the
    // primal-dual link for ŵ
    let mut kyy_alpha = vec![T::zero(); n];
    kyy.matvec(&alpha, &mut kyy_alpha);
    let g_at_y: Vec<T> = kyy_alpha
        .iter()
        .zip(&kxy_colsum)
        .map(|(&ka, &cs)| inv_lambda * (ka - inv_n * cs))
        .collect();
    let mut kxy_alpha = vec![T::zero(); n];
    kxy.matvec(&alpha, &mut kxy_alpha); // Σ_j α_j K(x_i, y_j)
    let g_at_x: Vec<T> = kxy_alpha
        .iter()
        .zip(&kxx_rowsum)
        .map(|(&c, &r)| inv_lambda * (c - inv_n * r))
        .collect();

    let norm_sq = inv_lambda
        * inv_lambda
        * (dot(&alpha, &kyy_alpha) - T::cast(2.0) * inv_n * dot(&alpha, &kxy_colsum)
            + kxx_total * inv_n * inv_n);

    let primal_value = if g_at_y.iter().all(|&g| g > T::zero()) {
        let mean_gx: T = g_at_x.iter().copied().sum::<T>() * inv_n;
        let mean_log_gy: T = g_at_y.iter().map(|&g| g.ln()).sum::<T>() * inv_n;
        mean_gx - mean_log_gy + lambda * T::cast(0.5) * norm_sq
    } else {
        T::infinity()
    };

    Ok(RatioModelM1 {
        alpha,
        x_anchors: x_from_q.clone(),
        y_anchors: y_from_p.clone(),
        lambda,
        kernel: *kernel,
        primal_value,
        dual_value: solved.objective,
        hilbert_norm_sq: norm_sq,
        stats: FitStats {
            iterations: solved.iterations,
            converged: solved.converged,
            grad_sup_norm: solved.grad_sup_norm,
        },
    })
}

/// `ĝ(t) = ⟨ŵ,Φ(t)⟩ = (1/λ)(Σ_j α̂_j K(y_j,t) − (1/n) Σ_i K(x_i,t))`.
///
/// May be negative away from the sample; the dual constrains `ĝ` only at the
/// anchors.
pub fn m1_ratio_at<T: Scalar>(model: &RatioModelM1<T>, t: &[T]) -> Result<T> {
    if t.len() != model.y_anchors.dim() {
        return Err(argument(format!(
            "point has dimension {}, anchors have {}",
            t.len(),
            model.y_anchors.dim()
        )));
    }
    let mut y_part = T::zero();
    for (j, p) in model.y_anchors.iter_points().enumerate() {
        y_part += model.alpha[j] * model.kernel.eval(p, t)?;
    }
    let mut x_part = T::zero();
    for p in model.x_anchors.iter_points() {
        x_part += model.kernel.eval(p, t)?;
    }
    let n = T::cast(model.x_anchors.len() as f64);
    Ok((y_part - x_part / n) / model.lambda)
}

/// KL readout `D̂_K = −(1/n) Σ_j log(n α̂_j)`.
pub fn m1_kl_estimate<T: Scalar>(model: &RatioModelM1<T>) -> DivergenceEstimate<T> {
    let n = model.alpha.len();
    let n_t = T::cast(n as f64);
    let value = -model.alpha.iter().map(|&a| (n_t * a).ln()).sum::<T>() / n_t;
    DivergenceEstimate {
        value,
        estimator_id: EstimatorId::M1,
        n,
        lambda: model.lambda,
        sigma: model.kernel.sigma(),
        duality_gap: Some((model.primal_value + model.dual_value).abs()),
        solver_iterations: Some(model.stats.iterations),
    }
}
