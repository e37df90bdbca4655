//! Damped Newton minimization of smooth strictly convex objectives over the
//! strictly positive orthant.
//!
//! The M1 and M2 dual programs both have the shape `barrier(α) + quadratic(α)`
//! whose gradients blow up at the boundary, so plain feasibility backtracking
//! keeps every iterate interior; no reparametrization is needed and the
//! Hessians stay exactly those of the dual programs.
//!
//! Newton systems are solved either densely (with jitter escalation) or, for
//! the `diag + c·K` structure of the kernel duals, by preconditioned conjugate
//! gradients against a partial-Cholesky/Woodbury preconditioner — see
//! [`crate::linalg`]. A solve failure falls back to a gradient step for that
//! iteration.

use crate::linalg::{self, Cholesky, Mat, PartialCholesky, Woodbury};
use crate::scalar::Scalar;
use crate::{argument, Result};

/// Newton solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<T> {
    /// Stop when `‖∇f‖∞ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: T,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant, in (0, 1).
    pub armijo_c: T,
    /// Step shrink factor, in (0, 1).
    pub backtrack_ratio: T,
    /// Initial diagonal jitter for the Newton system; escalated ×10 up to 1e−4
    /// when a solve fails.
    pub hessian_jitter: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            grad_tol: T::cast(1e-8),
            max_iters: 200,
            armijo_c: T::cast(1e-4),
            backtrack_ratio: T::cast(0.5),
            hessian_jitter: T::cast(1e-10),
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    /// Same knobs with a tighter gradient tolerance.
    pub fn with_grad_tol(mut self, tol: T) -> Self {
        self.grad_tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !crate::scalar::is_positive_finite(self.grad_tol) {
            return Err(argument("grad_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(argument("max_iters must be positive"));
        }
        let in_unit = |v: T| v > T::zero() && v < T::one();
        if !in_unit(self.armijo_c) {
            return Err(argument("armijo_c must lie in (0, 1)"));
        }
        if !in_unit(self.backtrack_ratio) {
            return Err(argument("backtrack_ratio must lie in (0, 1)"));
        }
        if self.hessian_jitter < T::zero() {
            return Err(argument("hessian_jitter must be nonnegative"));
        }
        Ok(())
    }
}

/// Solver output. `alpha` is strictly positive componentwise.
#[derive(Debug, Clone)]
pub struct SolverResult<T> {
    pub alpha: Vec<T>,
    pub objective: T,
    /// `‖∇f‖∞ / max(1, |f|)` at exit — the scale-free measure the stopping
    /// rule uses, so `converged` implies `grad_sup_norm ≤ grad_tol`.
    pub grad_sup_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Hessian of a [`ConvexObjective`] at a point.
///
/// Either an explicit dense symmetric matrix, or the structured form
/// `diag(d) + coeff·K` shared by the kernel dual programs, which carries a
/// reusable partial Cholesky of `K` for preconditioning.
pub enum Hessian<'a, T> {
    Dense(Mat<T>),
    KernelShifted {
        diag: Vec<T>,
        coeff: T,
        gram: &'a Mat<T>,
        factor: &'a PartialCholesky<T>,
    },
}

/// A smooth strictly convex objective on the positive orthant.
///
/// `value` must be finite on the interior, and minimizing sequences must stay
/// interior (the −log and α·log α terms of the dual programs repel the
/// boundary: the former in value, the latter in slope).
pub trait ConvexObjective<T: Scalar> {
    fn dim(&self) -> usize;
    fn value(&self, alpha: &[T]) -> T;
    fn gradient(&self, alpha: &[T]) -> Vec<T>;
    fn hessian(&self, alpha: &[T]) -> Hessian<'_, T>;
}

const JITTER_CEIL: f64 = 1e-4;
const PCG_RTOL: f64 = 1e-12;
/// Worst acceptable relative residual for a CG direction; beyond this the
/// solve is treated as failed and jitter escalates.
const PCG_ACCEPT: f64 = 1e-4;

fn solve_newton_system<T: Scalar>(
    hess: &Hessian<'_, T>,
    neg_grad: &[T],
    jitter: T,
) -> Option<Vec<T>> {
    match hess {
        Hessian::Dense(h) => {
            let n = h.rows();
            let mut a = h.clone();
            for i in 0..n {
                a[(i, i)] += jitter;
            }
            let factor = Cholesky::new(&a).ok()?;
            let x = factor.solve(neg_grad);
            x.iter().all(|v| v.is_finite()).then_some(x)
        }
        Hessian::KernelShifted {
            diag,
            coeff,
            gram,
            factor,
        } => {
            let n = diag.len();
            let d_shift: Vec<T> = diag.iter().map(|&d| d + jitter).collect();
            let prec = Woodbury::scaled_identity(&d_shift, *coeff, factor).ok()?;
            let out = linalg::pcg(
                |p, out| {
                    gram.matvec(p, out);
                    for (o, (&pi, &di)) in out.iter_mut().zip(p.iter().zip(&d_shift)) {
                        *o = *o * *coeff + pi * di;
                    }
                },
                neg_grad,
                |r, z| prec.apply(r, z),
                T::cast(PCG_RTOL),
                n.clamp(32, 400),
            );
            if out.rel_residual <= T::cast(PCG_ACCEPT) && out.x.iter().all(|v| v.is_finite()) {
                Some(out.x)
            } else {
                None
            }
        }
    }
}

/// Minimize `obj` over strictly positive `α`, starting from `alpha0`.
///
/// Backtracking enforces positivity and the Armijo decrease condition:
/// every iterate stays strictly positive and accepted objective values are
/// non-increasing up to the precision the objective can be evaluated at
/// (the terminal polish step tolerates a few ulps of evaluation noise while
/// requiring the gradient to halve).
///
/// A `converged == false` result is still usable: it carries the best point
/// found, typically optimal to the evaluation-noise floor when the floor sits
/// above `grad_tol`.
pub fn minimize_positive<T: Scalar>(
    obj: &impl ConvexObjective<T>,
    alpha0: &[T],
    cfg: &SolverConfig<T>,
) -> Result<SolverResult<T>> {
    cfg.validate()?;
    if alpha0.len() != obj.dim() {
        return Err(argument(format!(
            "starting point has length {} but the objective has dimension {}",
            alpha0.len(),
            obj.dim()
        )));
    }
    if alpha0
        .iter()
        .any(|v| !crate::scalar::is_positive_finite(*v))
    {
        return Err(argument("starting point must be strictly positive"));
    }

    let mut alpha = alpha0.to_vec();
    let mut f = obj.value(&alpha);
    if !f.is_finite() {
        return Err(argument("objective is not finite at the starting point"));
    }
    let mut g = obj.gradient(&alpha);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(argument("gradient is not finite at the starting point"));
    }

    let mut iterations = 0usize;
    let mut converged = false;
    let mut scaled_gnorm = linalg::sup_norm(&g) / T::one().max(f.abs());
    // consecutive accepted steps with no representable objective decrease and
    // no gradient improvement: the evaluation-noise floor has been reached
    let mut stagnant = 0usize;

    for _ in 0..cfg.max_iters {
        if scaled_gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }

        let neg_grad: Vec<T> = g.iter().map(|&v| -v).collect();
        let hess = obj.hessian(&alpha);
        let mut direction = None;
        let mut jitter = cfg.hessian_jitter;
        loop {
            if let Some(d) = solve_newton_system(&hess, &neg_grad, jitter) {
                // SPD solve of −g gives a descent direction; double-check
                // before trusting an inexact solve.
                if linalg::dot(&d, &g) < T::zero() {
                    direction = Some(d);
                    break;
                }
            }
            jitter = (jitter * T::cast(10.0)).max(T::cast(1e-12));
            if jitter > T::cast(JITTER_CEIL) {
                break;
            }
        }
        // gradient fallback when the Hessian solve failed outright
        let direction = direction.unwrap_or(neg_grad);
        let slope = linalg::dot(&direction, &g);

        let mut step = T::one();
        let mut accepted = None;
        for trial_idx in 0..120 {
            let trial: Vec<T> = alpha
                .iter()
                .zip(&direction)
                .map(|(&a, &d)| a + step * d)
                .collect();
            if trial.iter().all(|v| *v > T::zero()) {
                let ft = obj.value(&trial);
                if ft.is_finite() && ft <= f + cfg.armijo_c * step * slope {
                    accepted = Some((trial, ft));
                    break;
                }
                // noise endgame: once the predicted Armijo decrease drops
                // below evaluation precision, descent can no longer be
                // certified through f (the evaluated objective wobbles by a
                // few ulps of its intermediate scale). Accept a full Newton
                // step that at least halves the gradient and keeps the
                // objective flat to evaluation precision; this lets the
                // quadratic phase finish instead of freezing at a gradient
                // floor well above grad_tol.
                if trial_idx == 0
                    && ft.is_finite()
                    && cfg.armijo_c * (-slope) <= T::epsilon().sqrt() * T::one().max(f.abs())
                    && ft <= f + T::cast(32.0) * T::epsilon() * T::one().max(f.abs())
                {
                    let gt = obj.gradient(&trial);
                    let gt_norm = linalg::sup_norm(&gt) / T::one().max(ft.abs());
                    if gt.iter().all(|v| v.is_finite()) && gt_norm <= T::cast(0.5) * scaled_gnorm {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
            }
            step *= cfg.backtrack_ratio;
        }

        let Some((next, fnext)) = accepted else {
            // no acceptable step: stagnation
            break;
        };
        debug_assert!(
            fnext <= f + T::cast(32.0) * T::epsilon() * T::one().max(f.abs()),
            "accepted objective must not increase beyond evaluation noise"
        );
        let f_progress = f - fnext;
        alpha = next;
        f = fnext;
        iterations += 1;
        g = obj.gradient(&alpha);
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let prev_gnorm = scaled_gnorm;
        scaled_gnorm = linalg::sup_norm(&g) / T::one().max(f.abs());
        if scaled_gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }
        let f_noise = T::cast(8.0) * T::epsilon() * T::one().max(f.abs());
        if f_progress <= f_noise && scaled_gnorm > T::cast(0.9) * prev_gnorm {
            stagnant += 1;
            if stagnant >= 2 {
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    Ok(SolverResult {
        alpha,
        objective: f,
        grad_sup_norm: scaled_gnorm,
        iterations,
        converged,
    })
}
