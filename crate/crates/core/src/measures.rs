//! Finitely supported probability measures `Σ_i β_i δ_{y_i}` and the squared
//! distance induced between them by a Huber-energy kernel:
//!
//! ```text
//! d(m, m̃)² = Σ_{i,j} β_i β̃_j h(y_i, ỹ_j)
//!          − ½ Σ_{i,j} β_i β_j h(y_i, y_j)
//!          − ½ Σ_{i,j} β̃_i β̃_j h(ỹ_i, ỹ_j)
//! ```

use crate::error::{check_dim, Error, Result};
use crate::kernel::{sq_dist, KernelParams};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Points in `R^dim` (stored row-major) with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Weighted measure. Weights must be finite, non-negative and sum to 1.
    pub fn new(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let (dim, flat) = flatten(points)?;
        Self::from_flat(dim, flat, weights)
    }

    /// Measure over `dim`-dimensional points packed row-major in `flat`.
    pub fn from_flat(dim: usize, flat: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                field: "dim",
                reason: "points must have dimension >= 1".into(),
            });
        }
        if flat.is_empty() {
            return Err(Error::EmptyInput("measure needs at least one point"));
        }
        if !flat.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates do not split into points of dimension {dim}",
                flat.len()
            )));
        }
        check_dim(flat.len() / dim, weights.len())?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter {
                field: "weights",
                reason: "weights must be finite and non-negative".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter {
                field: "weights",
                reason: format!("weights sum to {total}, expected 1"),
            });
        }
        Ok(Self {
            dim,
            points: flat,
            weights,
        })
    }

    /// Uniform measure over packed points; every weight is exactly `1/L`.
    pub fn uniform_flat(dim: usize, flat: Vec<f64>) -> Result<Self> {
        if dim == 0 || flat.is_empty() || !flat.len().is_multiple_of(dim) {
            return Self::from_flat(dim, flat, Vec::new());
        }
        let n = flat.len() / dim;
        let w = 1.0 / n as f64;
        Ok(Self {
            dim,
            points: flat,
            weights: vec![w; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn flatten(points: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let first = points
        .first()
        .ok_or(Error::EmptyInput("measure needs at least one point"))?;
    let dim = first.len();
    let mut flat = Vec::with_capacity(dim * points.len());
    for p in points {
        check_dim(dim, p.len())?;
        flat.extend_from_slice(p);
    }
    Ok((dim, flat))
}

/// Uniform-weight measure `(1/L) Σ δ_{y_ℓ}`.
pub fn empirical(points: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    let (dim, flat) = flatten(points)?;
    DiscreteMeasure::uniform_flat(dim, flat)
}

fn cross_term(p: &KernelParams, m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> f64 {
    let mut total = 0.0;
    for (yi, bi) in m1.points().zip(&m1.weights) {
        let mut row = 0.0;
        for (yj, bj) in m2.points().zip(&m2.weights) {
            row += bj * p.value_from_sq_dist(sq_dist(yi, yj));
        }
        total += bi * row;
    }
    total
}

/// `½ Σ_{i,j} β_i β_j h(y_i, y_j)`, summed over the strict upper triangle.
fn self_term(p: &KernelParams, m: &DiscreteMeasure) -> f64 {
    let n = m.len();
    let mut total = 0.0;
    for i in 0..n {
        let yi = m.point(i);
        let mut row = 0.0;
        for j in (i + 1)..n {
            row += m.weights[j] * p.value_from_sq_dist(sq_dist(yi, m.point(j)));
        }
        total += m.weights[i] * row;
    }
    total
}

/// Squared Huber-energy distance between two discrete measures.
pub fn distance_squared(p: &KernelParams, m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> Result<f64> {
    check_dim(m1.dim, m2.dim)?;
    Ok(cross_term(p, m1, m2) - self_term(p, m1) - self_term(p, m2))
}

/// `½ Σ_{i,j} β_i β_j h(y_i, y_j)` for a single measure.
///
/// This is the part of the distance that does not depend on the other
/// measure; callers that only need gradients with respect to the other side
/// can compute it separately (or skip it).
pub fn self_energy(p: &KernelParams, m: &DiscreteMeasure) -> f64 {
    self_term(p, m)
}

/// Gradient of `distance_squared(p, m_var, m_fixed)` with respect to every
/// point of `m_var`, weights held fixed. One vector of length `dim` per point.
pub fn distance_squared_grad(
    p: &KernelParams,
    m_var: &DiscreteMeasure,
    m_fixed: &DiscreteMeasure,
) -> Result<Vec<Vec<f64>>> {
    let (_, grad) = distance_and_grad(p, m_var, m_fixed)?;
    Ok(grad.chunks_exact(m_var.dim).map(<[f64]>::to_vec).collect())
}

/// Cross term plus the self term of `m_var`, and the gradient with respect to
/// the points of `m_var` (flat, row-major).
///
/// The self term of `m_fixed` is *not* included in the returned value; add
/// [`self_energy`] of `m_fixed` to obtain the full squared distance.
pub fn distance_and_grad(
    p: &KernelParams,
    m_var: &DiscreteMeasure,
    m_fixed: &DiscreteMeasure,
) -> Result<(f64, Vec<f64>)> {
    check_dim(m_var.dim, m_fixed.dim)?;
    let dim = m_var.dim;
    let mut grad = vec![0.0; m_var.points.len()];
    let mut cross = 0.0;
    for (i, (yi, bi)) in m_var.points().zip(&m_var.weights).enumerate() {
        let gi = &mut grad[i * dim..(i + 1) * dim];
        let mut row = 0.0;
        for (yj, bj) in m_fixed.points().zip(&m_fixed.weights) {
            let d2 = sq_dist(yi, yj);
            row += bj * p.value_from_sq_dist(d2);
            let f = bi * bj * p.grad_factor_from_sq_dist(d2);
            for k in 0..dim {
                gi[k] += f * (yi[k] - yj[k]);
            }
        }
        cross += bi * row;
    }
    // d/dy_i of −½ Σ_{k,l} β_k β_l h(y_k, y_l) = −β_i Σ_k β_k ∇h(y_i, y_k)
    let n = m_var.len();
    let mut own = 0.0;
    for i in 0..n {
        let yi = m_var.point(i);
        let bi = m_var.weights[i];
        let mut row = 0.0;
        for j in (i + 1)..n {
            let yj = m_var.point(j);
            let bj = m_var.weights[j];
            let d2 = sq_dist(yi, yj);
            row += bj * p.value_from_sq_dist(d2);
            let f = bi * bj * p.grad_factor_from_sq_dist(d2);
            for k in 0..dim {
                let t = f * (yi[k] - yj[k]);
                grad[i * dim + k] -= t;
                grad[j * dim + k] += t;
            }
        }
        own += bi * row;
    }
    Ok((cross - own, grad))
}

/// Row-major triple double loop over all `(i, j)` pairs; the slow, literal
/// reading of the distance formula. Kept as the reference path for checks.
pub fn distance_squared_reference(p: &KernelParams, m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> Result<f64> {
    check_dim(m1.dim, m2.dim)?;
    let double_sum = |a: &DiscreteMeasure, b: &DiscreteMeasure| {
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                s += a.weights[i] * b.weights[j] * p.value_from_sq_dist(sq_dist(a.point(i), b.point(j)));
            }
        }
        s
    };
    Ok(double_sum(m1, m2) - 0.5 * double_sum(m1, m1) - 0.5 * double_sum(m2, m2))
}
