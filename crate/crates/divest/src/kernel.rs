//! Gaussian kernel evaluation and Gram-matrix construction.
//!
//! The kernel is `K(x, y) = exp(−‖x − y‖² / σ)` with bandwidth `σ > 0` carrying
//! squared-length units. All entries lie in `(0, 1]` and Gram matrices are
//! symmetric positive semidefinite.

use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::{argument, Error, Result};

/// Gaussian kernel family with bandwidth `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    sigma: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(sigma: T) -> Result<Self> {
        if !crate::scalar::is_positive_finite(sigma) {
            return Err(Error::Bandwidth(format!(
                "bandwidth must be positive and finite, got {sigma}"
            )));
        }
        Ok(KernelSpec { sigma })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// `K(x, y) = exp(−‖x−y‖²/σ)`, symmetric, in `(0, 1]`.
    pub fn eval(&self, x: &[T], y: &[T]) -> Result<T> {
        if x.len() != y.len() {
            return Err(argument(format!(
                "kernel arguments have dimensions {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(argument("kernel arguments must be finite"));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        let mut sq = T::zero();
        for (&a, &b) in x.iter().zip(y) {
            let d = a - b;
            sq += d * d;
        }
        let v = (-sq / self.sigma).exp();
        // exp underflows to +0 for very distant pairs; floor at the smallest
        // positive value so the (0, 1] contract holds for any finite input.
        if v > T::zero() {
            v
        } else {
            T::min_positive_value()
        }
    }

    /// Pairwise kernel matrix, entry `(i, j) = K(a_i, b_j)`.
    ///
    /// When `a` and `b` are the same point set the result is symmetric with
    /// unit diagonal: each unordered pair is evaluated once and mirrored.
    pub fn gram(&self, a: &PointSet<T>, b: &PointSet<T>) -> Result<Mat<T>> {
        if a.dim() != b.dim() {
            return Err(argument(format!(
                "point sets have dimensions {} and {}",
                a.dim(),
                b.dim()
            )));
        }
        let (na, nb) = (a.len(), b.len());
        let mut m = Mat::zeros(na, nb);
        if std::ptr::eq(a, b) || a == b {
            for i in 0..na {
                m[(i, i)] = T::one();
                for j in (i + 1)..nb {
                    let v = self.eval_unchecked(a.point(i), b.point(j));
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        } else {
            for i in 0..na {
                let pi = a.point(i);
                for j in 0..nb {
                    m[(i, j)] = self.eval_unchecked(pi, b.point(j));
                }
            }
        }
        Ok(m)
    }
}

/// A set of `n ≥ 1` points in `ℝ^d`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    coords: Vec<T>,
    dim: usize,
}

impl<T: Scalar> PointSet<T> {
    /// Build from flat coordinates, `n·d` values in row order.
    pub fn new(coords: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(argument("point dimension must be at least 1"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(argument(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(argument(format!(
                "non-finite coordinate at flat index {pos}"
            )));
        }
        Ok(PointSet { coords, dim })
    }

    /// Build from one row per point.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(argument("point set must contain at least one point"));
        };
        let dim = first.len();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(argument(format!(
                    "point {i} has dimension {} but point 0 has {dim}",
                    r.len()
                )));
            }
            coords.extend_from_slice(r);
        }
        PointSet::new(coords, dim)
    }

    /// 1-D convenience constructor.
    pub fn one_dim(values: Vec<T>) -> Result<Self> {
        PointSet::new(values, 1)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false // n ≥ 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[T]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Concatenation of two sets of equal dimension.
    pub fn concat(&self, other: &PointSet<T>) -> Result<Self> {
        if self.dim != other.dim {
            return Err(argument("cannot pool point sets of different dimension"));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        PointSet::new(coords, self.dim)
    }
}

/// The three Gram blocks every kernel estimator consumes:
/// `kyy` over the P-sample, `kxx` over the Q-sample, and the cross block
/// `kxy` with entry `(i, j) = K(x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct GramBlocks<T> {
    pub kyy: Mat<T>,
    pub kxx: Mat<T>,
    pub kxy: Mat<T>,
}

impl<T: Scalar> GramBlocks<T> {
    pub fn new(kernel: &KernelSpec<T>, x: &PointSet<T>, y: &PointSet<T>) -> Result<Self> {
        Ok(GramBlocks {
            kyy: kernel.gram(y, y)?,
            kxx: kernel.gram(x, x)?,
            kxy: kernel.gram(x, y)?,
        })
    }
}

/// Median of pairwise squared Euclidean distances over distinct index pairs.
///
/// Fails when fewer than two points are given or all points coincide
/// (a zero bandwidth is unusable).
pub fn median_heuristic<T: Scalar>(a: &PointSet<T>) -> Result<T> {
    let n = a.len();
    if n < 2 {
        return Err(Error::Bandwidth(
            "median heuristic needs at least 2 points".into(),
        ));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let pi = a.point(i);
        for j in (i + 1)..n {
            let mut sq = T::zero();
            for (&u, &v) in pi.iter().zip(a.point(j)) {
                let d = u - v;
                sq += d * d;
            }
            dists.push(sq);
        }
    }
    let m = dists.len();
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        (dists[m / 2 - 1] + dists[m / 2]) / T::cast(2.0)
    };
    if median <= T::zero() {
        return Err(Error::Bandwidth(
            "median pairwise distance is zero; points are not distinct".into(),
        ));
    }
    Ok(median)
}

/// Default bandwidth rule: `σ = 0.1` in one dimension, otherwise the median
/// heuristic over the pooled sample.
pub fn default_bandwidth<T: Scalar>(x: &PointSet<T>, y: &PointSet<T>) -> Result<T> {
    if x.dim() == 1 && y.dim() == 1 {
        Ok(T::cast(0.1))
    } else {
        median_heuristic(&x.concat(y)?)
    }
}
