//! WKV-style KL baseline: data-dependent partitioning of the line into cells
//! of equal empirical Q-measure, `s ∼ n^γ` Q-points per cell.
//!
//! The comparison method implemented here is a rank-based stand-in for the
//! partition algorithm of Wang, Kulkarni and Verdú: boundaries sit at
//! midpoints between adjacent Q order statistics, both empirical masses get
//! additive smoothing `ε = 1/(2n)` and are renormalized, and the estimate is
//! the discrete KL over cells. One dimension only.

use crate::kernel::PointSet;
use crate::scalar::Scalar;
use crate::{argument, Result};

/// Fitted partition estimate.
#[derive(Debug, Clone)]
pub struct PartitionEstimate<T> {
    /// Interior cell boundaries, ascending; `cells − 1` values.
    pub cell_boundaries: Vec<T>,
    /// Smoothed, renormalized P-sample masses per cell.
    pub cell_p_mass: Vec<T>,
    /// Smoothed, renormalized Q-sample masses per cell.
    pub cell_q_mass: Vec<T>,
    /// Discrete KL estimate in nats.
    pub value: T,
    pub gamma: T,
    /// `s ≥ n` collapsed the partition to a single cell.
    pub degenerate: bool,
}

/// Partition estimator with `s = ⌈n^γ⌉` Q-points per cell.
///
/// The Q-sample `x` drives the partition; interior cells hold exactly `s`
/// points and the last cell takes the remainder. Requires `d = 1`,
/// `0 < γ < 1`, and at least 4 Q-points.
pub fn fit_partition<T: Scalar>(
    x_from_q: &PointSet<T>,
    y_from_p: &PointSet<T>,
    gamma: T,
) -> Result<PartitionEstimate<T>> {
    if x_from_q.dim() != 1 || y_from_p.dim() != 1 {
        return Err(argument("the partition baseline is one-dimensional"));
    }
    let gamma_ok = gamma > T::zero() && gamma < T::one();
    if !gamma_ok {
        return Err(argument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let n = x_from_q.len();
    if n < 4 {
        return Err(argument("partition baseline needs at least 4 Q-points"));
    }

    let s = (T::cast(n as f64).powf(gamma)).ceil().f64() as usize;
    if s >= n {
        // single cell: both masses are 1, the estimate is exactly 0
        return Ok(PartitionEstimate {
            cell_boundaries: Vec::new(),
            cell_p_mass: vec![T::one()],
            cell_q_mass: vec![T::one()],
            value: T::zero(),
            gamma,
            degenerate: true,
        });
    }

    let mut q_sorted: Vec<T> = x_from_q.iter_points().map(|p| p[0]).collect();
    q_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    let cells = n / s; // last cell absorbs n mod s
    let half = T::cast(0.5);
    let boundaries: Vec<T> = (1..cells)
        .map(|k| (q_sorted[k * s - 1] + q_sorted[k * s]) * half)
        .collect();

    let count = |sample: &PointSet<T>| -> Vec<usize> {
        let mut counts = vec![0usize; cells];
        for p in sample.iter_points() {
            let v = p[0];
            let cell = boundaries.partition_point(|&b| b < v);
            counts[cell] += 1;
        }
        counts
    };
    let q_counts = count(x_from_q);
    let p_counts = count(y_from_p);

    let smooth = |counts: &[usize], total: usize| -> Vec<T> {
        let eps = half / T::cast(total as f64);
        let denom = T::one() + eps * T::cast(cells as f64);
        counts
            .iter()
            .map(|&c| (T::cast(c as f64) / T::cast(total as f64) + eps) / denom)
            .collect()
    };
    let q_mass = smooth(&q_counts, n);
    let p_mass = smooth(&p_counts, y_from_p.len());

    let mut value = T::zero();
    for (&p, &q) in p_mass.iter().zip(&q_mass) {
        value += p * (p / q).ln();
    }

    Ok(PartitionEstimate {
        cell_boundaries: boundaries,
        cell_p_mass: p_mass,
        cell_q_mass: q_mass,
        value,
        gamma,
        degenerate: false,
    })
}
