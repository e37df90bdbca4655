//! Test distributions: samplers, densities, true likelihood ratios, and
//! analytic (or numerically verified) divergence oracles.
//!
//! These supply the ground truth the experiment harness measures estimators
//! against. Gaussian/Gaussian and Beta/Beta pairs have closed-form KL and
//! χ² divergences; everything else falls back to adaptive quadrature in one
//! dimension or a fixed-seed 10⁶-sample Monte Carlo average above it, and the
//! result is flagged accordingly.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernel::PointSet;
use crate::scalar::{is_positive_finite, Scalar};
use crate::special::{digamma, ln_gamma, normal_cdf};
use crate::{argument, Error, Result};

/// Fixed seed for the internal Monte Carlo truth oracle.
const ORACLE_SEED: u64 = 0x0d1_5eed;
const ORACLE_SAMPLES: usize = 1_000_000;

/// Analytic distribution description.
///
/// Truncated Gaussians have identity covariance and a componentwise
/// truncation box; the default box for `tgauss:a,k` is `[a−3, a+3]^k`.
#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec<T> {
    Gaussian {
        mean: Vec<T>,
        var: Vec<T>,
    },
    TruncatedGaussian {
        mean: Vec<T>,
        lo: Vec<T>,
        hi: Vec<T>,
    },
    Beta {
        a: T,
        b: T,
    },
    Mixture {
        weights: Vec<T>,
        comps: Vec<DistSpec<T>>,
    },
    Product {
        comps: Vec<DistSpec<T>>,
    },
}

/// How a divergence truth value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// A divergence ground-truth value with its provenance.
#[derive(Debug, Clone, Copy)]
pub struct Truth<T> {
    pub value: T,
    pub method: TruthMethod,
}

impl<T> Truth<T> {
    pub fn approximate(&self) -> bool {
        self.method != TruthMethod::ClosedForm
    }
}

impl<T: Scalar> DistSpec<T> {
    pub fn gaussian(mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(argument("gaussian mean and variance lists must match"));
        }
        if var.iter().any(|v| !is_positive_finite(*v)) {
            return Err(argument("gaussian variances must be positive"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(argument("gaussian means must be finite"));
        }
        Ok(DistSpec::Gaussian { mean, var })
    }

    pub fn gaussian1(mean: T, var: T) -> Result<Self> {
        Self::gaussian(vec![mean], vec![var])
    }

    pub fn truncated_gaussian(mean: Vec<T>, lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() != lo.len() || mean.len() != hi.len() {
            return Err(argument("truncation box must match the mean dimension"));
        }
        let box_ok = lo
            .iter()
            .zip(&hi)
            .all(|(l, h)| l.is_finite() && h.is_finite() && *l < *h);
        if !box_ok {
            return Err(argument("truncation box must be nonempty"));
        }
        Ok(DistSpec::TruncatedGaussian { mean, lo, hi })
    }

    /// `N_t(a, I_k)`: mean `(a,…,a)`, unit variances, box `[a−3, a+3]^k`.
    pub fn truncated_default(a: T, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(argument("dimension must be at least 1"));
        }
        let three = T::cast(3.0);
        Self::truncated_gaussian(vec![a; k], vec![a - three; k], vec![a + three; k])
    }

    pub fn beta(a: T, b: T) -> Result<Self> {
        if !is_positive_finite(a) || !is_positive_finite(b) {
            return Err(argument("beta shape parameters must be positive"));
        }
        Ok(DistSpec::Beta { a, b })
    }

    pub fn mixture(weights: Vec<T>, comps: Vec<DistSpec<T>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != comps.len() {
            return Err(argument("mixture weights and components must match"));
        }
        if weights.iter().any(|w| !is_positive_finite(*w)) {
            return Err(argument("mixture weights must be positive"));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::cast(1e-9) {
            return Err(argument(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = comps[0].dim();
        for c in &comps {
            if !matches!(c, DistSpec::Gaussian { .. }) {
                return Err(argument("mixture components must be gaussians"));
            }
            if c.dim() != dim {
                return Err(argument("mixture components must share a dimension"));
            }
        }
        Ok(DistSpec::Mixture { weights, comps })
    }

    pub fn product(comps: Vec<DistSpec<T>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(argument("product needs at least one component"));
        }
        Ok(DistSpec::Product { comps })
    }

    pub fn dim(&self) -> usize {
        match self {
            DistSpec::Gaussian { mean, .. } => mean.len(),
            DistSpec::TruncatedGaussian { mean, .. } => mean.len(),
            DistSpec::Beta { .. } => 1,
            DistSpec::Mixture { comps, .. } => comps[0].dim(),
            DistSpec::Product { comps } => comps.iter().map(|c| c.dim()).sum(),
        }
    }

    /// Componentwise support bounds; `None` means unbounded.
    fn support(&self) -> Vec<(Option<T>, Option<T>)> {
        match self {
            DistSpec::Gaussian { mean, .. } => vec![(None, None); mean.len()],
            DistSpec::TruncatedGaussian { lo, hi, .. } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| (Some(l), Some(h)))
                .collect(),
            DistSpec::Beta { .. } => vec![(Some(T::zero()), Some(T::one()))],
            DistSpec::Mixture { comps, .. } => vec![(None, None); comps[0].dim()],
            DistSpec::Product { comps } => comps.iter().flat_map(|c| c.support()).collect(),
        }
    }

    fn same_support(&self, other: &Self) -> bool {
        let (a, b) = (self.support(), other.support());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x == y)
    }

    /// Normalized density at `t`; zero outside the support.
    pub fn density(&self, t: &[T]) -> Result<T> {
        if t.len() != self.dim() {
            return Err(argument(format!(
                "point has dimension {}, distribution has {}",
                t.len(),
                self.dim()
            )));
        }
        Ok(self.density_unchecked(t))
    }

    fn density_unchecked(&self, t: &[T]) -> T {
        match self {
            DistSpec::Gaussian { mean, var } => {
                let mut acc = T::one();
                for ((&x, &m), &v) in t.iter().zip(mean).zip(var) {
                    acc *= gauss_pdf(x, m, v);
                }
                acc
            }
            DistSpec::TruncatedGaussian { mean, lo, hi } => {
                let mut acc = T::one();
                for (((&x, &m), &l), &h) in t.iter().zip(mean).zip(lo).zip(hi) {
                    if x < l || x > h {
                        return T::zero();
                    }
                    let z = normal_cdf(h - m) - normal_cdf(l - m);
                    acc = acc * gauss_pdf(x, m, T::one()) / z;
                }
                acc
            }
            DistSpec::Beta { a, b } => {
                let x = t[0];
                if x < T::zero() || x > T::one() {
                    return T::zero();
                }
                let ln_b = ln_gamma(*a) + ln_gamma(*b) - ln_gamma(*a + *b);
                let one = T::one();
                // endpoint care: x^(a−1) with a<1 diverges, with a>1 vanishes
                if (x == T::zero() && *a < one) || (x == one && *b < one) {
                    return T::infinity();
                }
                let lx = if x > T::zero() {
                    (*a - one) * x.ln()
                } else {
                    T::zero()
                };
                let l1x = if x < one {
                    (*b - one) * (one - x).ln()
                } else {
                    T::zero()
                };
                (lx + l1x - ln_b).exp()
            }
            DistSpec::Mixture { weights, comps } => {
                let mut acc = T::zero();
                for (&w, c) in weights.iter().zip(comps) {
                    acc += w * c.density_unchecked(t);
                }
                acc
            }
            DistSpec::Product { comps } => {
                let mut acc = T::one();
                let mut offset = 0;
                for c in comps {
                    let d = c.dim();
                    acc *= c.density_unchecked(&t[offset..offset + d]);
                    offset += d;
                }
                acc
            }
        }
    }

    /// Draw `n` i.i.d. points; deterministic in `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PointSet<T>> {
        if n == 0 {
            return Err(argument("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dim();
        let mut coords = Vec::with_capacity(n * dim);
        let mut rejections = RejectionBudget::default();
        for _ in 0..n {
            self.sample_point(&mut rng, &mut coords, &mut rejections)?;
        }
        PointSet::new(coords, dim)
    }

    fn sample_point<R: Rng>(
        &self,
        rng: &mut R,
        out: &mut Vec<T>,
        budget: &mut RejectionBudget,
    ) -> Result<()> {
        match self {
            DistSpec::Gaussian { mean, var } => {
                for (&m, &v) in mean.iter().zip(var) {
                    let z: T = Scalar::std_normal(rng);
                    out.push(m + v.sqrt() * z);
                }
                Ok(())
            }
            DistSpec::TruncatedGaussian { mean, lo, hi } => {
                let k = mean.len();
                loop {
                    budget.proposals += 1;
                    let start = out.len();
                    let mut inside = true;
                    for ((&m, &l), &h) in mean.iter().zip(lo).zip(hi) {
                        let z: T = Scalar::std_normal(rng);
                        let x = m + z;
                        if x < l || x > h {
                            inside = false;
                            break;
                        }
                        out.push(x);
                    }
                    if inside && out.len() == start + k {
                        budget.accepted += 1;
                        return Ok(());
                    }
                    out.truncate(start);
                    budget.check()?;
                }
            }
            DistSpec::Beta { a, b } => {
                out.push(Scalar::beta_draw(rng, *a, *b)?);
                Ok(())
            }
            DistSpec::Mixture { weights, comps } => {
                let u: T = Scalar::unit_uniform(rng);
                let mut cum = T::zero();
                let mut chosen = comps.len() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    cum += w;
                    if u < cum {
                        chosen = i;
                        break;
                    }
                }
                comps[chosen].sample_point(rng, out, budget)
            }
            DistSpec::Product { comps } => {
                for c in comps {
                    c.sample_point(rng, out, budget)?;
                }
                Ok(())
            }
        }
    }

    /// Effective 1-D integration range covering all but negligible mass.
    fn range_1d(&self) -> (T, T) {
        let twelve = T::cast(12.0);
        match self {
            DistSpec::Gaussian { mean, var } => {
                let s = var[0].sqrt();
                (mean[0] - twelve * s, mean[0] + twelve * s)
            }
            DistSpec::TruncatedGaussian { lo, hi, .. } => (lo[0], hi[0]),
            DistSpec::Beta { .. } => (T::zero(), T::one()),
            DistSpec::Mixture { comps, .. } => {
                comps
                    .iter()
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), c| {
                        let (l, h) = c.range_1d();
                        (lo.min(l), hi.max(h))
                    })
            }
            DistSpec::Product { comps } => comps[0].range_1d(),
        }
    }
}

#[derive(Default)]
struct RejectionBudget {
    proposals: u64,
    accepted: u64,
}

impl RejectionBudget {
    fn check(&self) -> Result<()> {
        if self.proposals >= 1_000_000 && (self.accepted as f64) < 1e-6 * self.proposals as f64 {
            return Err(Error::Sampling(format!(
                "rejection acceptance rate below 1e-6 ({} of {} proposals)",
                self.accepted, self.proposals
            )));
        }
        Ok(())
    }
}

#[inline]
fn gauss_pdf<T: Scalar>(x: T, mean: T, var: T) -> T {
    let two_pi = T::cast(std::f64::consts::TAU);
    let d = x - mean;
    (-(d * d) / (T::cast(2.0) * var)).exp() / (two_pi * var).sqrt()
}

/// Evaluable true likelihood ratio `g₀ = p₀/q₀` for a `(P, Q)` pair sharing a
/// common support.
#[derive(Debug, Clone)]
pub struct RatioOracle<T> {
    p: DistSpec<T>,
    q: DistSpec<T>,
}

impl<T: Scalar> RatioOracle<T> {
    pub fn eval(&self, t: &[T]) -> Result<T> {
        let qd = self.q.density(t)?;
        if qd.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(argument(
                "likelihood ratio requested outside the common support",
            ));
        }
        Ok(self.p.density(t)? / qd)
    }
}

/// Pointwise density quotient `p₀/q₀`; the supports must be identical.
pub fn true_ratio<T: Scalar>(p: &DistSpec<T>, q: &DistSpec<T>) -> Result<RatioOracle<T>> {
    if p.dim() != q.dim() {
        return Err(argument("distributions have different dimensions"));
    }
    if !p.same_support(q) {
        return Err(argument("distributions have different supports"));
    }
    Ok(RatioOracle {
        p: p.clone(),
        q: q.clone(),
    })
}

/// KL divergence `∫ p₀ log(p₀/q₀) dμ`.
pub fn analytic_kl<T: Scalar>(p: &DistSpec<T>, q: &DistSpec<T>) -> Result<Truth<T>> {
    check_pair(p, q)?;
    if p == q {
        return Ok(Truth {
            value: T::zero(),
            method: TruthMethod::ClosedForm,
        });
    }
    match (p, q) {
        (DistSpec::Gaussian { mean: m1, var: v1 }, DistSpec::Gaussian { mean: m2, var: v2 }) => {
            let half = T::cast(0.5);
            let mut acc = T::zero();
            for (((&a, &va), &b), &vb) in m1.iter().zip(v1).zip(m2).zip(v2) {
                let d = a - b;
                acc += half * (va / vb + d * d / vb - T::one() + (vb / va).ln());
            }
            Ok(Truth {
                value: acc,
                method: TruthMethod::ClosedForm,
            })
        }
        (DistSpec::Beta { a: a1, b: b1 }, DistSpec::Beta { a: a2, b: b2 }) => {
            let ln_beta = |a: T, b: T| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let value = ln_beta(*a2, *b2) - ln_beta(*a1, *b1)
                + (*a1 - *a2) * digamma(*a1)
                + (*b1 - *b2) * digamma(*b1)
                + (*a2 - *a1 + *b2 - *b1) * digamma(*a1 + *b1);
            Ok(Truth {
                value,
                method: TruthMethod::ClosedForm,
            })
        }
        (DistSpec::Product { comps: pc }, DistSpec::Product { comps: qc })
            if pc.len() == qc.len() && pc.iter().zip(qc).all(|(a, b)| a.dim() == b.dim()) =>
        {
            // KL factorizes over independent components
            let mut acc = T::zero();
            let mut method = TruthMethod::ClosedForm;
            for (a, b) in pc.iter().zip(qc) {
                let t = analytic_kl(a, b)?;
                acc += t.value;
                method = worse(method, t.method);
            }
            Ok(Truth { value: acc, method })
        }
        _ if p.dim() == 1 => {
            let value = integrate_pair(p, q, |pd, qd| {
                if pd > T::zero() {
                    pd * (pd / qd).ln()
                } else {
                    T::zero()
                }
            })?;
            Ok(Truth {
                value,
                method: TruthMethod::Quadrature,
            })
        }
        _ => {
            // E_P[log g₀] by fixed-seed Monte Carlo
            let oracle = true_ratio(p, q)?;
            let sample = p.sample(ORACLE_SAMPLES, ORACLE_SEED)?;
            let mut acc = T::zero();
            for t in sample.iter_points() {
                acc += oracle.eval(t)?.ln();
            }
            Ok(Truth {
                value: acc / T::cast(ORACLE_SAMPLES as f64),
                method: TruthMethod::MonteCarlo,
            })
        }
    }
}

/// χ²-style divergence `∫ p₀²/q₀ dμ` (equal to 1 when P = Q).
pub fn analytic_chi2<T: Scalar>(p: &DistSpec<T>, q: &DistSpec<T>) -> Result<Truth<T>> {
    check_pair(p, q)?;
    if p == q {
        return Ok(Truth {
            value: T::one(),
            method: TruthMethod::ClosedForm,
        });
    }
    match (p, q) {
        (DistSpec::Gaussian { mean: m1, var: v1 }, DistSpec::Gaussian { mean: m2, var: v2 }) => {
            let half = T::cast(0.5);
            let quarter = T::cast(0.25);
            let mut acc = T::one();
            for (((&a, &va), &b), &vb) in m1.iter().zip(v1).zip(m2).zip(v2) {
                // ∫ N(a,va)²/N(b,vb) along one axis
                let big_a = T::one() / va - half / vb;
                if big_a <= T::zero() {
                    return Err(argument(
                        "chi-square divergence diverges: P tail heavier than sqrt(Q)",
                    ));
                }
                let big_b = T::cast(2.0) * a / va - b / vb;
                let big_c = -(a * a) / va + half * b * b / vb;
                let factor = (vb / (T::cast(2.0) * va * va * big_a)).sqrt()
                    * (quarter * big_b * big_b / big_a + big_c).exp();
                acc *= factor;
            }
            Ok(Truth {
                value: acc,
                method: TruthMethod::ClosedForm,
            })
        }
        (DistSpec::Beta { a: a1, b: b1 }, DistSpec::Beta { a: a2, b: b2 }) => {
            let two = T::cast(2.0);
            let aa = two * *a1 - *a2;
            let bb = two * *b1 - *b2;
            if aa <= T::zero() || bb <= T::zero() {
                return Err(argument(
                    "chi-square divergence diverges for this beta pair",
                ));
            }
            let ln_beta = |a: T, b: T| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let value = (ln_beta(aa, bb) + ln_beta(*a2, *b2) - two * ln_beta(*a1, *b1)).exp();
            Ok(Truth {
                value,
                method: TruthMethod::ClosedForm,
            })
        }
        (DistSpec::Product { comps: pc }, DistSpec::Product { comps: qc })
            if pc.len() == qc.len() && pc.iter().zip(qc).all(|(a, b)| a.dim() == b.dim()) =>
        {
            let mut acc = T::one();
            let mut method = TruthMethod::ClosedForm;
            for (a, b) in pc.iter().zip(qc) {
                let t = analytic_chi2(a, b)?;
                acc *= t.value;
                method = worse(method, t.method);
            }
            Ok(Truth { value: acc, method })
        }
        _ if p.dim() == 1 => {
            let value = integrate_pair(p, q, |pd, qd| pd * pd / qd)?;
            Ok(Truth {
                value,
                method: TruthMethod::Quadrature,
            })
        }
        _ => {
            // E_P[g₀] by fixed-seed Monte Carlo
            let oracle = true_ratio(p, q)?;
            let sample = p.sample(ORACLE_SAMPLES, ORACLE_SEED)?;
            let mut acc = T::zero();
            for t in sample.iter_points() {
                acc += oracle.eval(t)?;
            }
            Ok(Truth {
                value: acc / T::cast(ORACLE_SAMPLES as f64),
                method: TruthMethod::MonteCarlo,
            })
        }
    }
}

fn check_pair<T: Scalar>(p: &DistSpec<T>, q: &DistSpec<T>) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(argument("distributions have different dimensions"));
    }
    if !p.same_support(q) {
        return Err(argument("distributions have different supports"));
    }
    Ok(())
}

fn worse(a: TruthMethod, b: TruthMethod) -> TruthMethod {
    use TruthMethod::*;
    match (a, b) {
        (MonteCarlo, _) | (_, MonteCarlo) => MonteCarlo,
        (Quadrature, _) | (_, Quadrature) => Quadrature,
        _ => ClosedForm,
    }
}

fn integrate_pair<T: Scalar>(
    p: &DistSpec<T>,
    q: &DistSpec<T>,
    integrand: impl Fn(T, T) -> T,
) -> Result<T> {
    let (plo, phi) = p.range_1d();
    let (qlo, qhi) = q.range_1d();
    let mut lo = plo.min(qlo);
    let mut hi = phi.max(qhi);
    // keep clear of endpoint singularities on bounded supports
    let eps = T::cast(1e-12);
    lo += eps;
    hi -= eps;
    let f = |t: T| {
        let pd = p.density_unchecked(&[t]);
        let qd = q.density_unchecked(&[t]);
        if qd > T::zero() {
            integrand(pd, qd)
        } else {
            T::zero()
        }
    };
    adaptive_simpson(&f, lo, hi, T::cast(1e-9), 48)
}

/// Adaptive Simpson quadrature with Richardson acceptance.
pub fn adaptive_simpson<T: Scalar>(
    f: &impl Fn(T) -> T,
    lo: T,
    hi: T,
    tol: T,
    max_depth: usize,
) -> Result<T> {
    fn simpson<T: Scalar>(fl: T, fm: T, fr: T, h: T) -> T {
        h / T::cast(6.0) * (fl + T::cast(4.0) * fm + fr)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<T: Scalar>(
        f: &impl Fn(T) -> T,
        lo: T,
        mid: T,
        hi: T,
        fl: T,
        fm: T,
        fr: T,
        whole: T,
        tol: T,
        depth: usize,
    ) -> Result<T> {
        let lm = (lo + mid) / T::cast(2.0);
        let rm = (mid + hi) / T::cast(2.0);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fl, flm, fm, mid - lo);
        let right = simpson(fm, frm, fr, hi - mid);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::Numeric("quadrature integrand is not finite".into()));
        }
        if depth == 0 {
            return Ok(left + right + delta / T::cast(15.0));
        }
        if delta.abs() <= T::cast(15.0) * tol {
            return Ok(left + right + delta / T::cast(15.0));
        }
        let half_tol = tol / T::cast(2.0);
        let a = recurse(f, lo, lm, mid, fl, flm, fm, left, half_tol, depth - 1)?;
        let b = recurse(f, mid, rm, hi, fm, frm, fr, right, half_tol, depth - 1)?;
        Ok(a + b)
    }

    let mid = (lo + hi) / T::cast(2.0);
    let (fl, fm, fr) = (f(lo), f(mid), f(hi));
    let whole = simpson(fl, fm, fr, hi - lo);
    recurse(f, lo, mid, hi, fl, fm, fr, whole, tol, max_depth)
}

// ---------------------------------------------------------------------------
// textual form

impl<T: Scalar> FromStr for DistSpec<T> {
    type Err = Error;

    /// Parse the CLI textual form:
    /// `gauss:M,V` · `gaussK:m1,…,mK|v1,…,vK` · `beta:A,B` · `tgauss:a,k` ·
    /// `mix:w1*SPEC+w2*SPEC+…` · `prod:SPEC;SPEC;…`
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, body) = s
            .split_once(':')
            .ok_or_else(|| argument(format!("missing ':' in distribution '{s}'")))?;

        if let Some(rest) = head.strip_prefix("gauss") {
            let (mean, var) = parse_gauss_body::<T>(body)?;
            if !rest.is_empty() {
                let k: usize = rest
                    .parse()
                    .map_err(|_| argument(format!("bad gaussian dimension '{rest}'")))?;
                if mean.len() != k {
                    return Err(argument(format!(
                        "gauss{k} expects {k}-dimensional parameter lists, got {}",
                        mean.len()
                    )));
                }
            }
            return DistSpec::gaussian(mean, var);
        }
        match head {
            "beta" => {
                let ps = parse_numbers::<T>(body)?;
                if ps.len() != 2 {
                    return Err(argument("beta takes exactly two shape parameters"));
                }
                DistSpec::beta(ps[0], ps[1])
            }
            "tgauss" => {
                let ps = parse_numbers::<f64>(body)?;
                if ps.len() != 2 || ps[1].fract() != 0.0 || ps[1] < 1.0 {
                    return Err(argument("tgauss takes 'a,k' with integer k ≥ 1"));
                }
                DistSpec::truncated_default(T::cast(ps[0]), ps[1] as usize)
            }
            "mix" => {
                let mut weights = Vec::new();
                let mut comps = Vec::new();
                for term in body.split('+') {
                    let (w, spec) = term
                        .split_once('*')
                        .ok_or_else(|| argument(format!("mixture term '{term}' is not w*SPEC")))?;
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| argument(format!("bad mixture weight '{w}'")))?;
                    weights.push(T::cast(w));
                    comps.push(spec.parse()?);
                }
                DistSpec::mixture(weights, comps)
            }
            "prod" => {
                let comps = body
                    .split(';')
                    .map(|p| p.parse())
                    .collect::<Result<Vec<_>>>()?;
                DistSpec::product(comps)
            }
            other => Err(argument(format!("unknown distribution family '{other}'"))),
        }
    }
}

fn parse_gauss_body<T: Scalar>(body: &str) -> Result<(Vec<T>, Vec<T>)> {
    if let Some((means, vars)) = body.split_once('|') {
        let mean = parse_numbers::<T>(means)?;
        let var = parse_numbers::<T>(vars)?;
        Ok((mean, var))
    } else {
        let ps = parse_numbers::<T>(body)?;
        if ps.len() != 2 {
            return Err(argument("gauss takes 'mean,variance' or 'means|variances'"));
        }
        Ok((vec![ps[0]], vec![ps[1]]))
    }
}

fn parse_numbers<T: Scalar>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map(T::cast)
                .map_err(|_| argument(format!("bad number '{tok}'")))
        })
        .collect()
}

impl<T: Scalar> fmt::Display for DistSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list<T: Scalar>(xs: &[T]) -> String {
            xs.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        match self {
            DistSpec::Gaussian { mean, var } => {
                if mean.len() == 1 {
                    write!(f, "gauss:{},{}", mean[0], var[0])
                } else {
                    write!(f, "gauss{}:{}|{}", mean.len(), list(mean), list(var))
                }
            }
            DistSpec::TruncatedGaussian { mean, lo, hi } => {
                write!(f, "tgauss[{}|{}|{}]", list(mean), list(lo), list(hi))
            }
            DistSpec::Beta { a, b } => write!(f, "beta:{a},{b}"),
            DistSpec::Mixture { weights, comps } => {
                let terms: Vec<String> = weights
                    .iter()
                    .zip(comps)
                    .map(|(w, c)| format!("{w}*{c}"))
                    .collect();
                write!(f, "mix:{}", terms.join("+"))
            }
            DistSpec::Product { comps } => {
                let terms: Vec<String> = comps.iter().map(|c| c.to_string()).collect();
                write!(f, "prod:{}", terms.join(";"))
            }
        }
    }
}
