//! Minimal dense linear algebra: row-major matrices, Cholesky factorization,
//! pivoted partial Cholesky, and preconditioned conjugate gradients.
//!
//! The dual programs solved in this crate all lead to symmetric positive
//! definite systems of the form `diag + c·K` with `K` a fixed Gram matrix.
//! Dense Cholesky handles small systems; large ones are solved matrix-free by
//! CG, preconditioned with a low-rank-plus-diagonal surrogate built from a
//! pivoted partial Cholesky of `K`. Gaussian Gram spectra decay fast, so the
//! surrogate is typically accurate to near machine precision and CG converges
//! in a handful of iterations.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            data: vec![T::zero(); rows * cols],
            rows,
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `xᵀ A x` for symmetric `A`.
    pub fn quad_form(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.rows {
            acc += x[i] * dot(self.row(i), x);
        }
        acc
    }

    /// Sum of all entries.
    pub fn total(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Column sums, i.e. `Aᵀ 1`.
    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += *v;
            }
        }
        out
    }

    /// Row sums, i.e. `A 1`.
    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().copied().sum())
            .collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub fn sup_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

pub fn two_norm<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factor `A = L Lᵀ`. Fails when a pivot is not strictly positive.
    pub fn new(a: &Mat<T>) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::Numeric("cholesky of non-square matrix".into()));
        }
        let mut l = a.clone();
        for j in 0..n {
            let mut d = l[(j, j)];
            for k in 0..j {
                let v = l[(j, k)];
                d -= v * v;
            }
            if d <= T::zero() || !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "cholesky pivot {j} is not positive"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            let inv = T::one() / d;
            for i in (j + 1)..n {
                let mut s = l[(i, j)];
                // row slices keep the inner reduction contiguous
                let (head, tail) = l.data.split_at(i * n);
                let rj = &head[j * n..j * n + j];
                let ri = &tail[..j];
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[(i, j)] = s * inv;
            }
        }
        Ok(Cholesky { l })
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.l.rows();
        debug_assert_eq!(b.len(), n);
        // forward: L z = b
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &b[..i]);
            b[i] = (b[i] - s) / self.l[(i, i)];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = b[i];
            for (k, &bk) in b.iter().enumerate().skip(i + 1) {
                s -= self.l[(k, i)] * bk;
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Rank-`r` pivoted partial Cholesky of a symmetric PSD matrix: `K ≈ U Uᵀ`.
///
/// Greedy diagonal pivoting; stops when the residual trace drops below
/// `rel_tol · trace(K)` or `max_rank` columns have been taken. The residual
/// `K − U Uᵀ` stays PSD, so `resid_diag` is nonnegative and bounds the
/// approximation error column by column.
#[derive(Debug, Clone)]
pub struct PartialCholesky<T> {
    cols: Vec<T>, // n * rank, column-major
    n: usize,
    rank: usize,
    pivots: Vec<usize>,
    resid_diag: Vec<T>,
    resid_trace: T,
}

impl<T: Scalar> PartialCholesky<T> {
    pub fn new(k: &Mat<T>, rel_tol: T, max_rank: usize) -> Self {
        let n = k.rows();
        debug_assert_eq!(n, k.cols());
        let mut d: Vec<T> = k.diag();
        let trace0: T = d.iter().copied().sum();
        let stop = rel_tol * trace0;
        let rmax = max_rank.min(n);

        let mut cols: Vec<T> = Vec::with_capacity(rmax * n);
        let mut pivots = Vec::with_capacity(rmax);
        let mut resid_trace = trace0;

        for _ in 0..rmax {
            if resid_trace <= stop {
                break;
            }
            let (piv, dmax) =
                d.iter()
                    .enumerate()
                    .fold((0usize, T::neg_infinity()), |(bi, bv), (i, &v)| {
                        if v > bv {
                            (i, v)
                        } else {
                            (bi, bv)
                        }
                    });
            if dmax <= T::zero() || !dmax.is_finite() {
                break;
            }
            let root = dmax.sqrt();
            let rank = pivots.len();
            let mut new_col = k.row(piv).to_vec();
            for c in 0..rank {
                let col = &cols[c * n..(c + 1) * n];
                axpy(-col[piv], col, &mut new_col);
            }
            let inv = T::one() / root;
            for v in new_col.iter_mut() {
                *v *= inv;
            }
            new_col[piv] = root;
            resid_trace = T::zero();
            for (di, ci) in d.iter_mut().zip(&new_col) {
                *di = (*di - *ci * *ci).max(T::zero());
                resid_trace += *di;
            }
            d[piv] = T::zero();
            cols.extend_from_slice(&new_col);
            pivots.push(piv);
        }

        let rank = pivots.len();
        PartialCholesky {
            cols,
            n,
            rank,
            pivots,
            resid_diag: d,
            resid_trace,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Diagonal of the PSD residual `K − U Uᵀ`.
    pub fn resid_diag(&self) -> &[T] {
        &self.resid_diag
    }

    pub fn resid_trace(&self) -> T {
        self.resid_trace
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[T] {
        &self.cols[c * self.n..(c + 1) * self.n]
    }

    /// `Uᵀ x` (length `rank`).
    pub fn t_apply(&self, x: &[T]) -> Vec<T> {
        (0..self.rank).map(|c| dot(self.col(c), x)).collect()
    }

    /// `out += U y` for `y` of length `rank`.
    pub fn apply_acc(&self, y: &[T], out: &mut [T]) {
        for (c, &yc) in y.iter().enumerate().take(self.rank) {
            axpy(yc, self.col(c), out);
        }
    }
}

/// Sherman–Morrison–Woodbury application of `M⁻¹` for `M = D + U C Uᵀ`,
/// with `D` diagonal positive and `C` (r×r) symmetric positive definite.
pub struct Woodbury<'a, T> {
    d_inv: Vec<T>,
    u: &'a PartialCholesky<T>,
    s: Option<Cholesky<T>>, // factor of C⁻¹ + Uᵀ D⁻¹ U; None when rank 0
}

impl<'a, T: Scalar> Woodbury<'a, T> {
    /// `M = D + coeff · U Uᵀ`, i.e. `C = coeff · I`.
    pub fn scaled_identity(d: &[T], coeff: T, u: &'a PartialCholesky<T>) -> Result<Self> {
        let r = u.rank();
        let mut c_inv = Mat::zeros(r, r);
        let inv = T::one() / coeff;
        for i in 0..r {
            c_inv[(i, i)] = inv;
        }
        Self::with_inner_inverse(d, c_inv, u)
    }

    /// General inner matrix `C`, passed by its inverse.
    pub fn with_inner_inverse(d: &[T], c_inv: Mat<T>, u: &'a PartialCholesky<T>) -> Result<Self> {
        let n = u.dim();
        debug_assert_eq!(d.len(), n);
        let r = u.rank();
        let d_inv: Vec<T> = d
            .iter()
            .map(|&v| {
                debug_assert!(v > T::zero());
                T::one() / v
            })
            .collect();
        if r == 0 {
            return Ok(Woodbury { d_inv, u, s: None });
        }
        // S = C⁻¹ + Uᵀ D⁻¹ U
        let mut s = c_inv;
        for a in 0..r {
            let ca = u.col(a);
            for b in a..r {
                let cb = u.col(b);
                let mut acc = T::zero();
                for i in 0..n {
                    acc += ca[i] * cb[i] * d_inv[i];
                }
                s[(a, b)] += acc;
                if a != b {
                    let v = s[(a, b)];
                    s[(b, a)] = v;
                }
            }
        }
        let s = Cholesky::new(&s)?;
        Ok(Woodbury {
            d_inv,
            u,
            s: Some(s),
        })
    }

    /// `out = M⁻¹ v`.
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        for ((o, &vi), &di) in out.iter_mut().zip(v).zip(&self.d_inv) {
            *o = vi * di;
        }
        let Some(s) = &self.s else { return };
        let mut z = self.u.t_apply(out);
        s.solve_in_place(&mut z);
        let mut corr = vec![T::zero(); v.len()];
        self.u.apply_acc(&z, &mut corr);
        for (o, (&c, &di)) in out.iter_mut().zip(corr.iter().zip(&self.d_inv)) {
            *o -= c * di;
        }
    }
}

/// Outcome of a preconditioned conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct PcgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub rel_residual: T,
    pub converged: bool,
}

/// Preconditioned CG for `A x = b` with SPD `A`, started from `x = 0`.
///
/// `apply_a` writes `A p` into its output slice; `prec` applies the
/// preconditioner inverse. Stops at `‖r‖ ≤ rtol ‖b‖` or `max_iters`.
pub fn pcg<T: Scalar>(
    apply_a: impl Fn(&[T], &mut [T]),
    b: &[T],
    prec: impl Fn(&[T], &mut [T]),
    rtol: T,
    max_iters: usize,
) -> PcgOutcome<T> {
    let n = b.len();
    let b_norm = two_norm(b);
    if b_norm == T::zero() {
        return PcgOutcome {
            x: vec![T::zero(); n],
            iterations: 0,
            rel_residual: T::zero(),
            converged: true,
        };
    }
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut rel = T::one();

    for it in 0..max_iters {
        apply_a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() || !pap.is_finite() {
            return PcgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
                converged: false,
            };
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = two_norm(&r) / b_norm;
        if rel <= rtol {
            return PcgOutcome {
                x,
                iterations: it + 1,
                rel_residual: rel,
                converged: true,
            };
        }
        prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    PcgOutcome {
        x,
        iterations: max_iters,
        rel_residual: rel,
        converged: false,
    }
}
