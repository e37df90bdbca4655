//! Ratio-quality diagnostics: generalized Hellinger distance, the KL
//! surrogate distance, the Bregman distance for general `φ`, and the
//! error-summary helpers behind the sweep harness.
//!
//! Population integrals are evaluated as Q-sample averages, with the P-side
//! integral in importance form `∫ (·) g₀ dQ_n`. Under that convention the
//! bound `d(g₀, g) ≥ 2 h²_Q(g₀, g)` is an integrand-wise inequality, so it
//! holds exactly on every sample rather than just in expectation.

use crate::distributions::RatioOracle;
use crate::kernel::PointSet;
use crate::scalar::Scalar;
use crate::{argument, Error, Result};

/// Floor applied to ratio values before logs and square roots.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Diagnostic distances for one fitted ratio against the truth.
#[derive(Debug, Clone)]
pub struct MetricReport<T> {
    pub hellinger_sq: T,
    pub surrogate_d: T,
    pub bregman_d: Option<T>,
    pub mc_points: usize,
    pub clamp_count: usize,
}

impl<T> MetricReport<T> {
    /// More than 1% of evaluations hit the clamp floor.
    pub fn flagged(&self) -> bool {
        self.clamp_count * 100 > self.mc_points
    }
}

fn hellinger_and_surrogate<T: Scalar>(
    g: &impl Fn(&[T]) -> T,
    g0: &RatioOracle<T>,
    q_sample: &PointSet<T>,
) -> Result<(T, T, usize)> {
    let floor = T::cast(CLAMP_FLOOR);
    let half = T::cast(0.5);
    let mut hell = T::zero();
    let mut surr = T::zero();
    let mut clamps = 0usize;
    for t in q_sample.iter_points() {
        let truth = g0.eval(t)?;
        let raw = g(t);
        let gv = if raw < floor {
            clamps += 1;
            floor
        } else {
            raw
        };
        let ds = truth.sqrt() - gv.sqrt();
        hell += half * ds * ds;
        surr += (gv - truth) - (gv / truth).ln() * truth;
    }
    let m = T::cast(q_sample.len() as f64);
    Ok((hell / m, surr / m, clamps))
}

/// Generalized Hellinger distance `h²_Q(g₀, g) = ½ ∫ (√g₀ − √g)² dQ_n`.
pub fn hellinger_sq<T: Scalar>(
    g: impl Fn(&[T]) -> T,
    g0: &RatioOracle<T>,
    q_sample: &PointSet<T>,
) -> Result<T> {
    Ok(hellinger_and_surrogate(&g, g0, q_sample)?.0)
}

/// Surrogate distance `d(g₀, g) = ∫ (g − g₀) dQ_n − ∫ log(g/g₀) g₀ dQ_n`.
///
/// Both integrals run over the same Q-sample, so `d ≥ 2h²_Q` holds exactly.
pub fn surrogate_distance<T: Scalar>(
    g: impl Fn(&[T]) -> T,
    g0: &RatioOracle<T>,
    q_sample: &PointSet<T>,
) -> Result<T> {
    Ok(hellinger_and_surrogate(&g, g0, q_sample)?.1)
}

/// Both sample distances plus clamp bookkeeping in one pass.
pub fn metric_report<T: Scalar>(
    g: impl Fn(&[T]) -> T,
    g0: &RatioOracle<T>,
    q_sample: &PointSet<T>,
) -> Result<MetricReport<T>> {
    let (hellinger_sq, surrogate_d, clamp_count) = hellinger_and_surrogate(&g, g0, q_sample)?;
    Ok(MetricReport {
        hellinger_sq,
        surrogate_d,
        bregman_d: None,
        mc_points: q_sample.len(),
        clamp_count,
    })
}

/// Bregman distance `d_φ(f₀, f) = Σ w_i [φ*(f_i) − φ*(f₀ᵢ) − φ*'(f₀ᵢ)(f_i − f₀ᵢ)] / Σ w_i`.
///
/// Nonnegative whenever `φ*` is convex. Fails with the offending index when
/// `φ*` is infinite at a supplied value.
pub fn bregman_distance<T: Scalar>(
    f: &[T],
    f0: &[T],
    phi_star: impl Fn(T) -> T,
    phi_star_deriv: impl Fn(T) -> T,
    p_weights: &[T],
) -> Result<T> {
    if f.is_empty() || f.len() != f0.len() || f.len() != p_weights.len() {
        return Err(argument(
            "bregman distance needs equal-length nonempty value and weight arrays",
        ));
    }
    if p_weights.iter().any(|w| *w < T::zero()) {
        return Err(argument("weights must be nonnegative"));
    }
    let wsum: T = p_weights.iter().copied().sum();
    if !crate::scalar::is_positive_finite(wsum) {
        return Err(argument("weights must not all vanish"));
    }
    let mut acc = T::zero();
    for (index, ((&fi, &f0i), &wi)) in f.iter().zip(f0).zip(p_weights).enumerate() {
        let a = phi_star(fi);
        let b = phi_star(f0i);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Infeasible {
                index,
                message: "phi* is not finite at a supplied value".into(),
            });
        }
        acc += wi * (a - b - phi_star_deriv(f0i) * (fi - f0i));
    }
    Ok(acc / wsum)
}

/// Replication-error summary: bias, signed median error, MSE, and the
/// 10/90 percent quantiles of the signed errors.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSummary<T> {
    pub bias: T,
    pub median_error: T,
    pub median_abs_error: T,
    pub mse: T,
    pub q10: T,
    pub q90: T,
    pub n: usize,
}

/// Quantile with linear interpolation between order statistics.
fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::cast(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn error_summary<T: Scalar>(estimates: &[T], truth: T) -> Result<ErrorSummary<T>> {
    if estimates.is_empty() {
        return Err(argument("error summary needs at least one estimate"));
    }
    let n = estimates.len();
    let n_t = T::cast(n as f64);
    let mut errors: Vec<T> = estimates.iter().map(|&e| e - truth).collect();
    let bias = errors.iter().copied().sum::<T>() / n_t;
    let mse = errors.iter().map(|&e| e * e).sum::<T>() / n_t;
    errors.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let mut abs: Vec<T> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    Ok(ErrorSummary {
        bias,
        median_error: quantile(&errors, 0.5),
        median_abs_error: quantile(&abs, 0.5),
        mse,
        q10: quantile(&errors, 0.1),
        q90: quantile(&errors, 0.9),
        n,
    })
}

/// Least-squares slope of `log(error)` against `log(n)`.
pub fn fit_rate<T: Scalar>(ns: &[usize], errors: &[T]) -> Result<T> {
    if ns.len() != errors.len() || ns.len() < 3 {
        return Err(argument(
            "rate fit needs at least 3 matched (n, error) points",
        ));
    }
    if errors
        .iter()
        .any(|e| !crate::scalar::is_positive_finite(*e))
    {
        return Err(argument("rate fit needs strictly positive errors"));
    }
    let m = T::cast(ns.len() as f64);
    let xs: Vec<T> = ns.iter().map(|&n| T::cast(n as f64).ln()).collect();
    let ys: Vec<T> = errors.iter().map(|e| e.ln()).collect();
    let xbar = xs.iter().copied().sum::<T>() / m;
    let ybar = ys.iter().copied().sum::<T>() / m;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    if den <= T::zero() {
        return Err(argument(
            "rate fit needs at least two distinct sample sizes",
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{adaptive_simpson, true_ratio, DistSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(m: f64, v: f64) -> DistSpec<f64> {
        DistSpec::gaussian1(m, v).unwrap()
    }

    fn oracle_and_sample() -> (RatioOracle<f64>, PointSet<f64>) {
        let p = gauss(1.0, 1.0);
        let q = gauss(0.0, 1.0);
        let sample = q.sample(4000, 99).unwrap();
        (true_ratio(&p, &q).unwrap(), sample)
    }

    #[test]
    fn distances_vanish_at_the_truth() {
        let (oracle, sample) = oracle_and_sample();
        let g = |t: &[f64]| (t[0] - 0.5).exp(); // exactly g₀
        let report = metric_report(g, &oracle, &sample).unwrap();
        assert!(report.hellinger_sq.abs() < 1e-12);
        assert!(report.surrogate_d.abs() < 1e-12);
        assert_eq!(report.clamp_count, 0);
        assert!(!report.flagged());
    }

    #[test]
    fn constant_ratio_against_unit_truth() {
        let p = gauss(0.0, 1.0);
        let oracle = true_ratio(&p, &p).unwrap();
        let sample = p.sample(500, 5).unwrap();
        let c = 0.49f64;
        let h = hellinger_sq(|_: &[f64]| c, &oracle, &sample).unwrap();
        assert!((h - 0.5 * (1.0 - c.sqrt()).powi(2)).abs() < 1e-12);
        let d = surrogate_distance(|_: &[f64]| c, &oracle, &sample).unwrap();
        assert!((d - ((c - 1.0) - c.ln())).abs() < 1e-12);
        assert!(d >= 0.0);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let p = gauss(1.0, 1.0);
        let q = gauss(0.0, 1.0);
        let oracle = true_ratio(&p, &q).unwrap();
        let g = |t: &[f64]| 0.8 * (0.9 * (t[0] - 0.5)).exp();
        let n = 40_000;
        let sample = q.sample(n, 17).unwrap();
        let mc = hellinger_sq(g, &oracle, &sample).unwrap();

        let integrand = |t: f64| {
            let g0 = (t - 0.5f64).exp();
            let gv = g(&[t]);
            0.5 * (g0.sqrt() - gv.sqrt()).powi(2) * q.density(&[t]).unwrap()
        };
        let exact = adaptive_simpson(&integrand, -14.0, 14.0, 1e-10, 40).unwrap();

        // 3 Monte Carlo standard errors from the sample variance
        let var: f64 = {
            let mut acc = 0.0;
            for t in sample.iter_points() {
                let g0: f64 = (t[0] - 0.5).exp();
                let term = 0.5 * (g0.sqrt() - g(t).sqrt()).powi(2);
                acc += (term - mc) * (term - mc);
            }
            acc / (n as f64 - 1.0)
        };
        let se = (var / n as f64).sqrt();
        assert!(
            (mc - exact).abs() <= 3.0 * se,
            "mc {mc}, exact {exact}, se {se}"
        );
    }

    #[test]
    fn surrogate_dominates_twice_hellinger_samplewise() {
        let (oracle, sample) = oracle_and_sample();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            // random positive kernel expansion
            let centers: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let coefs: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..1.5)).collect();
            let sigma = rng.random_range(0.2..2.0);
            let g = move |t: &[f64]| {
                centers
                    .iter()
                    .zip(&coefs)
                    .map(|(&c, &w)| w * (-(t[0] - c) * (t[0] - c) / sigma).exp())
                    .sum::<f64>()
            };
            let report = metric_report(&g, &oracle, &sample).unwrap();
            assert!(
                report.surrogate_d >= 2.0 * report.hellinger_sq - 1e-12,
                "d = {}, 2h² = {}",
                report.surrogate_d,
                2.0 * report.hellinger_sq
            );
            // loose sanity bound: h² ≤ ½ ∫ (g₀ + g) dQ_n
            let mean_sum: f64 = sample
                .iter_points()
                .map(|t| oracle.eval(t).unwrap() + g(t).max(CLAMP_FLOOR))
                .sum::<f64>()
                / sample.len() as f64;
            assert!(report.hellinger_sq <= 0.5 * mean_sum + 1e-12);
        }
    }

    #[test]
    fn clamping_is_counted_and_flagged() {
        let (oracle, sample) = oracle_and_sample();
        let g = |t: &[f64]| if t[0] > 0.0 { -1.0 } else { 1.0 };
        let report = metric_report(g, &oracle, &sample).unwrap();
        assert!(report.clamp_count > 0);
        assert!(report.flagged());
        assert!(report.surrogate_d >= 2.0 * report.hellinger_sq - 1e-12);
    }

    #[test]
    fn bregman_vanishes_at_truth_and_reduces_to_l2_for_chi2() {
        // φ(u) = 1/u has φ*(v) = −2√(−v); with f = −g², the Bregman
        // integrand collapses to (g − g₀)²/g₀, i.e. the L₂(Q) metric under
        // importance weights w = g₀.
        let phi_star = |v: f64| {
            if v <= 0.0 {
                -2.0 * (-v).sqrt()
            } else {
                f64::INFINITY
            }
        };
        let phi_star_d = |v: f64| 1.0 / (-v).sqrt();

        let g0_vals = [0.7f64, 1.3, 1.0, 2.2, 0.4];
        let g_vals = [0.9f64, 1.1, 1.4, 2.0, 0.6];
        let f: Vec<f64> = g_vals.iter().map(|&g| -g * g).collect();
        let f0: Vec<f64> = g0_vals.iter().map(|&g| -g * g).collect();

        let zero = bregman_distance(&f0, &f0, phi_star, phi_star_d, &g0_vals).unwrap();
        assert!(zero.abs() < 1e-12);

        let d = bregman_distance(&f, &f0, phi_star, phi_star_d, &g0_vals).unwrap();
        let l2: f64 = g_vals
            .iter()
            .zip(&g0_vals)
            .map(|(&g, &g0)| (g - g0) * (g - g0))
            .sum::<f64>()
            / g0_vals.iter().sum::<f64>();
        assert!((d - l2).abs() < 1e-12, "{d} vs {l2}");
        assert!(d >= 0.0);
    }

    #[test]
    fn bregman_nonnegative_for_random_convex_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let a = rng.random_range(0.05..3.0);
            let b = rng.random_range(-2.0..2.0);
            let phi_star = move |v: f64| a * v * v + b * v;
            let phi_star_d = move |v: f64| 2.0 * a * v + b;
            let n = rng.random_range(2..12);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            if w.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let d = bregman_distance(&f, &f0, phi_star, phi_star_d, &w).unwrap();
            assert!(d >= -1e-12, "negative bregman {d}");
        }
    }

    #[test]
    fn bregman_reports_infeasible_values() {
        let phi_star = |v: f64| if v < 0.0 { -(-v).ln() } else { f64::INFINITY };
        let err = bregman_distance(
            &[-1.0, 2.0],
            &[-1.0, -1.0],
            phi_star,
            |v| -1.0 / v,
            &[1.0, 1.0],
        );
        assert!(matches!(err, Err(Error::Infeasible { index: 1, .. })));
    }

    #[test]
    fn error_summary_exact_cases() {
        let s = error_summary(&[0.5f64, 0.5, 0.5], 0.5).unwrap();
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.mse, 0.0);
        assert_eq!(s.median_error, 0.0);

        let s = error_summary(&[0.0f64, 1.0], 0.5).unwrap();
        assert!(s.bias.abs() < 1e-15);
        assert!((s.mse - 0.25).abs() < 1e-15);
        assert!(s.median_error.abs() < 1e-15);
        assert!((s.median_abs_error - 0.5).abs() < 1e-15);

        assert!(error_summary::<f64>(&[], 0.0).is_err());
    }

    #[test]
    fn error_summary_mse_concentrates() {
        // 250 draws of truth + N(0, 0.01): E[MSE] = 0.01, well inside [0.005, 0.02]
        let noise = gauss(0.0, 0.01);
        let draws = noise.sample(250, 2024).unwrap();
        let estimates: Vec<f64> = draws.iter_points().map(|t| 0.5 + t[0]).collect();
        let s = error_summary(&estimates, 0.5).unwrap();
        assert!(s.mse >= 0.005 && s.mse <= 0.02, "mse {}", s.mse);
    }

    #[test]
    fn rate_fit_recovers_exact_slopes() {
        let ns = [100usize, 200, 400, 800, 1600, 3200];
        let half: Vec<f64> = ns.iter().map(|&n| 3.7 / (n as f64).sqrt()).collect();
        let slope = fit_rate(&ns, &half).unwrap();
        assert!((slope + 0.5).abs() < 1e-10, "slope {slope}");

        let flat = vec![0.3f64; ns.len()];
        let slope = fit_rate(&ns, &flat).unwrap();
        assert!(slope.abs() < 1e-12);
    }

    #[test]
    fn rate_fit_rejects_bad_inputs() {
        assert!(fit_rate(&[100, 200], &[1.0f64, 0.5]).is_err());
        assert!(fit_rate(&[100, 200, 400], &[1.0f64, 0.0, 0.5]).is_err());
        assert!(fit_rate(&[100, 100, 100], &[1.0f64, 1.0, 1.0]).is_err());
    }
}
