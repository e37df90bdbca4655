//! The M2 estimator: RKHS structure imposed on the log-ratio class `log G`.
//!
//! Primal (over the Hilbert weight `w`, ratios `g = exp⟨w,Φ(·)⟩`):
//!
//! ```text
//! J(w) = (1/n) Σ_i exp⟨w,Φ(x_i)⟩ − (1/n) Σ_j ⟨w,Φ(y_j)⟩ + (λ/2)‖w‖²_H
//! ```
//!
//! Dual, minimized here over `α > 0`:
//!
//! ```text
//! G(α) = Σ_i [α_i log(nα_i) − α_i] + (1/2λ)‖Σ_i α_i Φ(x_i) − (1/n) Σ_j Φ(y_j)‖²_H
//! ```
//!
//! with `min J = −min G` and `ŵ = (1/λ)((1/n) Σ_j Φ(y_j) − Σ_i α̂_i Φ(x_i))`.
//! Stationarity pins the fitted ratio at the Q-sample: `ĝ(x_i) = n α̂_i`,
//! which gives the KL readout `D̂_K = 1 + Σ_i α̂_i log α̂_i + α̂_i log(n/e)`.

use super::{DivergenceEstimate, EstimatorId, FitStats};
use crate::kernel::{GramBlocks, KernelSpec, PointSet};
use crate::linalg::{dot, Mat, PartialCholesky};
use crate::scalar::Scalar;
use crate::solver::{minimize_positive, ConvexObjective, Hessian, SolverConfig};
use crate::{argument, Result};

const PCHOL_TOL: f64 = 1e-10;
const PCHOL_MAX_RANK: usize = 384;

/// Fitted M2 model: dual weights over the Q-sample anchors.
#[derive(Debug, Clone)]
pub struct RatioModelM2<T> {
    pub alpha: Vec<T>,
    /// Sample from Q.
    pub x_anchors: PointSet<T>,
    /// Sample from P.
    pub y_anchors: PointSet<T>,
    pub lambda: T,
    pub kernel: KernelSpec<T>,
    /// The dual minimum `G(α̂)`.
    pub dual_value: T,
    /// `J(ŵ)` through the kernel expansion, for the duality-gap diagnostic.
    pub primal_value: T,
    /// `‖ŵ‖²_H` from the Gram blocks.
    pub hilbert_norm_sq: T,
    pub stats: FitStats<T>,
}

struct M2Dual<'a, T> {
    kxx: &'a Mat<T>,
    factor: &'a PartialCholesky<T>,
    inv_lambda: T,
    n_t: T,
    /// `b_i = (1/λn) Σ_j K(x_i, y_j)`
    b: Vec<T>,
    constant: T,
}

impl<T: Scalar> ConvexObjective<T> for M2Dual<'_, T> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, alpha: &[T]) -> T {
        let n = alpha.len();
        let mut entropy = T::zero();
        for &a in alpha {
            entropy += a * (self.n_t * a).ln() - a;
        }
        let mut ka = vec![T::zero(); n];
        self.kxx.matvec(alpha, &mut ka);
        let quad = dot(alpha, &ka) * self.inv_lambda * T::cast(0.5);
        entropy + quad - dot(&self.b, alpha) + self.constant
    }

    fn gradient(&self, alpha: &[T]) -> Vec<T> {
        let n = alpha.len();
        let mut g = vec![T::zero(); n];
        self.kxx.matvec(alpha, &mut g);
        for ((gi, &ai), &bi) in g.iter_mut().zip(alpha).zip(&self.b) {
            *gi = (self.n_t * ai).ln() + *gi * self.inv_lambda - bi;
        }
        g
    }

    fn hessian(&self, alpha: &[T]) -> Hessian<'_, T> {
        let diag = alpha.iter().map(|&a| T::one() / a).collect();
        Hessian::KernelShifted {
            diag,
            coeff: self.inv_lambda,
            gram: self.kxx,
            factor: self.factor,
        }
    }
}

/// Fit the M2 dual program. Equal sample sizes are required.
pub fn fit_m2<T: Scalar>(
    x_from_q: &PointSet<T>,
    y_from_p: &PointSet<T>,
    kernel: &KernelSpec<T>,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<RatioModelM2<T>> {
    let n = y_from_p.len();
    if x_from_q.len() != n {
        return Err(argument(format!(
            "M2 requires equal sample sizes, got {} from Q and {n} from P",
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

    let kxy_rowsum = kxy.row_sums(); // Σ_j K(x_i, y_j)
    let kyy_colsum = kyy.col_sums(); // Σ_j' K(y_j', y_j)
    let kyy_total = kyy.total();
    drop(kyy);

    let b: Vec<T> = kxy_rowsum.iter().map(|&r| r * inv_lambda * inv_n).collect();
    let constant = kyy_total * inv_lambda * inv_n * inv_n * T::cast(0.5);

    let factor = PartialCholesky::new(&kxx, T::cast(PCHOL_TOL), PCHOL_MAX_RANK);
    let objective = M2Dual {
        kxx: &kxx,
        factor: &factor,
        inv_lambda,
        n_t,
        b,
        constant,
    };
    let alpha0 = vec![inv_n; n];
    let solved = minimize_positive(&objective, &alpha0, cfg)?;
    let alpha = solved.alpha;

    // log-ratio at both samples for the primal diagnostic
    let mut kxx_alpha = vec![T::zero(); n];
    kxx.matvec(&alpha, &mut kxx_alpha);
    let log_g_at_x: Vec<T> = kxx_alpha
        .iter()
        .zip(&kxy_rowsum)
        .map(|(&ka, &rs)| inv_lambda * (inv_n * rs - ka))
        .collect();
    let mut kxy_t_alpha = vec![T::zero(); n]; // Σ_i α_i K(x_i, y_j)
    for (i, &ai) in alpha.iter().enumerate() {
        crate::linalg::axpy(ai, kxy.row(i), &mut kxy_t_alpha);
    }
    let log_g_at_y: Vec<T> = kxy_t_alpha
        .iter()
        .zip(&kyy_colsum)
        .map(|(&xa, &cs)| inv_lambda * (inv_n * cs - xa))
        .collect();

    let norm_sq = inv_lambda
        * inv_lambda
        * (dot(&alpha, &kxx_alpha) - T::cast(2.0) * inv_n * dot(&alpha, &kxy_rowsum)
            + kyy_total * inv_n * inv_n);

    let mean_exp: T = log_g_at_x.iter().map(|&v| v.exp()).sum::<T>() * inv_n;
    let mean_log_y: T = log_g_at_y.iter().copied().sum::<T>() * inv_n;
    let primal_value = mean_exp - mean_log_y + lambda * T::cast(0.5) * norm_sq;

    Ok(RatioModelM2 {
        alpha,
        x_anchors: x_from_q.clone(),
        y_anchors: y_from_p.clone(),
        lambda,
        kernel: *kernel,
        dual_value: solved.objective,
        primal_value,
        hilbert_norm_sq: norm_sq,
        stats: FitStats {
            iterations: solved.iterations,
            converged: solved.converged,
            grad_sup_norm: solved.grad_sup_norm,
        },
    })
}

/// `⟨ŵ,Φ(t)⟩ = (1/λ)((1/n) Σ_j K(y_j,t) − Σ_i α̂_i K(x_i,t))`.
///
/// The fitted ratio is `exp` of this value, positive everywhere.
pub fn m2_log_ratio_at<T: Scalar>(model: &RatioModelM2<T>, t: &[T]) -> Result<T> {
    if t.len() != model.x_anchors.dim() {
        return Err(argument(format!(
            "point has dimension {}, anchors have {}",
            t.len(),
            model.x_anchors.dim()
        )));
    }
    let mut y_part = T::zero();
    for p in model.y_anchors.iter_points() {
        y_part += model.kernel.eval(p, t)?;
    }
    let mut x_part = T::zero();
    for (i, p) in model.x_anchors.iter_points().enumerate() {
        x_part += model.alpha[i] * model.kernel.eval(p, t)?;
    }
    let n = T::cast(model.y_anchors.len() as f64);
    Ok((y_part / n - x_part) / model.lambda)
}

/// KL readout `D̂_K = 1 + Σ_i α̂_i log α̂_i + α̂_i log(n/e)`.
pub fn m2_kl_estimate<T: Scalar>(model: &RatioModelM2<T>) -> DivergenceEstimate<T> {
    let n = model.alpha.len();
    let n_t = T::cast(n as f64);
    let log_n_over_e = n_t.ln() - T::one();
    let mut value = T::one();
    for &a in &model.alpha {
        value += a * a.ln() + a * log_n_over_e;
    }
    DivergenceEstimate {
        value,
        estimator_id: EstimatorId::M2,
        n,
        lambda: model.lambda,
        sigma: model.kernel.sigma(),
        duality_gap: Some((model.primal_value + model.dual_value).abs()),
        solver_iterations: Some(model.stats.iterations),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn symmetric_singleton_is_exactly_uniform() {
        // n = 1, x = y = {0}: stationarity log α + α − 1 = 0 has root α = 1
        let x = PointSet::<f64>::one_dim(vec![0.0]).unwrap();
        let y = PointSet::one_dim(vec![0.0]).unwrap();
        let kernel = KernelSpec::new(1.0).unwrap();
        let cfg = SolverConfig::default().with_grad_tol(1e-13);
        let model = fit_m2(&x, &y, &kernel, 1.0, &cfg).unwrap();
        assert!(model.stats.converged);
        assert!((model.alpha[0] - 1.0).abs() < 1e-10);

        // ŵ coefficients cancel: the log-ratio is 0 and the ratio 1 everywhere
        for t in [-2.0, 0.0, 0.7, 31.0] {
            let lr = m2_log_ratio_at(&model, &[t]).unwrap();
            assert!(lr.abs() < 1e-9, "log-ratio at {t} is {lr}");
        }

        // KL readout: 1 + 0 + log(1/e) = 0
        let est = m2_kl_estimate(&model);
        assert!(est.value.abs() < 1e-9);
    }

    #[test]
    fn separated_singleton_matches_bisection_oracle() {
        // n = 1, x = {0}, y = {1}, σ = 1, λ = 1: log α + α − e⁻¹ = 0
        let x = PointSet::one_dim(vec![0.0]).unwrap();
        let y = PointSet::one_dim(vec![1.0]).unwrap();
        let kernel = KernelSpec::new(1.0).unwrap();
        let cfg = SolverConfig::default().with_grad_tol(1e-13);
        let model = fit_m2(&x, &y, &kernel, 1.0, &cfg).unwrap();
        let target = (-1.0f64).exp();
        let oracle = bisect(|a| a.ln() + a - target, 1e-6, 2.0);
        assert!((model.alpha[0] - oracle).abs() < 1e-9);
    }

    #[test]
    fn stationarity_identity_at_anchors() {
        let x = PointSet::<f64>::one_dim(vec![0.1, -0.8, 0.4, 1.2, -0.3, 0.9]).unwrap();
        let y = PointSet::one_dim(vec![0.6, 0.2, -0.5, 1.5, 0.0, 0.7]).unwrap();
        let kernel = KernelSpec::new(0.4).unwrap();
        let cfg = SolverConfig::default().with_grad_tol(1e-12);
        let model = fit_m2(&x, &y, &kernel, 0.1, &cfg).unwrap();
        assert!(model.stats.converged);
        let n = 6.0;
        for (i, p) in model.x_anchors.iter_points().enumerate() {
            let ratio = m2_log_ratio_at(&model, p).unwrap().exp();
            assert!(
                (ratio - n * model.alpha[i]).abs() < 1e-6,
                "anchor {i}: {ratio} vs {}",
                n * model.alpha[i]
            );
        }
        // duality-gap diagnostic is tiny on converged fits
        let gap = (model.primal_value + model.dual_value).abs();
        assert!(gap <= 1e-6 * model.primal_value.abs().max(1.0));
    }

    #[test]
    fn log_ratio_vanishes_far_from_anchors() {
        let x = PointSet::<f64>::one_dim(vec![0.0, 0.5]).unwrap();
        let y = PointSet::one_dim(vec![0.3, 0.8]).unwrap();
        let kernel = KernelSpec::new(1.0).unwrap();
        let model = fit_m2(&x, &y, &kernel, 0.5, &SolverConfig::default()).unwrap();
        let lr = m2_log_ratio_at(&model, &[60.0]).unwrap();
        assert!(lr.abs() < 1e-12);
        assert!((lr.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_readout_cancels_at_uniform_alpha() {
        // α = 1/n makes 1 + Σ α log α + α log(n/e) collapse to 0
        let x = PointSet::<f64>::one_dim(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = PointSet::one_dim(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let kernel = KernelSpec::new(1.0).unwrap();
        let mut model = fit_m2(&x, &y, &kernel, 1.0, &SolverConfig::default()).unwrap();
        model.alpha = vec![0.25; 4];
        let est = m2_kl_estimate(&model);
        assert!(est.value.abs() < 1e-15);
    }

    #[test]
    fn huge_penalty_drives_alpha_to_uniform() {
        let x = PointSet::<f64>::one_dim(vec![0.2, -0.9, 1.1]).unwrap();
        let y = PointSet::one_dim(vec![0.8, -0.1, 0.4]).unwrap();
        let kernel = KernelSpec::new(1.0).unwrap();
        let model = fit_m2(&x, &y, &kernel, 1e9, &SolverConfig::default()).unwrap();
        for &a in &model.alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!(m2_kl_estimate(&model).value.abs() < 1e-6);
    }

    #[test]
    fn rejects_unequal_sample_sizes() {
        let x = PointSet::one_dim(vec![0.0, 1.0]).unwrap();
        let y = PointSet::one_dim(vec![0.0]).unwrap();
        let kernel = KernelSpec::new(1.0).unwrap();
        assert!(fit_m2(&x, &y, &kernel, 1.0, &SolverConfig::default()).is_err());
    }
}
