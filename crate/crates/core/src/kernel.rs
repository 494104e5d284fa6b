//! Huber-energy kernel `h_{a,r}(y, ỹ) = (a² + ‖y−ỹ‖²)^{r/2} − a^r`.
//!
//! For `a = 0, r = 1` this is the classical energy kernel `‖y−ỹ‖`. A small
//! positive `a` smooths the kink at coincident points so the kernel is
//! differentiable everywhere.

use crate::error::{check_dim, Error, Result};

/// Validated kernel parameters. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    a: f64,
    r: f64,
    a_sq: f64,
    a_pow_r: f64,
}

impl KernelParams {
    /// Builds `(a, r)` with `a ≥ 0` and `0 < r < 2`.
    pub fn new(a: f64, r: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "a",
                reason: format!("must be finite and >= 0, got {a}"),
            });
        }
        if !(r > 0.0 && r < 2.0) {
            return Err(Error::InvalidParameter {
                field: "r",
                reason: format!("must satisfy 0 < r < 2, got {r}"),
            });
        }
        Ok(Self {
            a,
            r,
            a_sq: a * a,
            a_pow_r: if a == 0.0 { 0.0 } else { libm::pow(a, r) },
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Kernel value as a function of the squared distance `‖y−ỹ‖²`.
    #[inline]
    pub fn value_from_sq_dist(&self, d2: f64) -> f64 {
        if self.r == 1.0 {
            // sqrt(a² + d²) − a, rearranged to avoid cancellation for d ≪ a
            let s = (self.a_sq + d2).sqrt();
            if self.a == 0.0 {
                s
            } else {
                d2 / (s + self.a)
            }
        } else if self.a == 0.0 {
            libm::pow(d2, 0.5 * self.r)
        } else {
            // a^r · expm1((r/2)·ln1p(d²/a²))
            self.a_pow_r * libm::expm1(0.5 * self.r * libm::log1p(d2 / self.a_sq))
        }
    }

    /// Scalar factor `g` such that `∇_y h(y, ỹ) = g · (y − ỹ)`.
    ///
    /// Returns 0 at the kink (`a = 0`, `d² = 0`).
    #[inline]
    pub fn grad_factor_from_sq_dist(&self, d2: f64) -> f64 {
        let base = self.a_sq + d2;
        if base == 0.0 {
            return 0.0;
        }
        if self.r == 1.0 {
            1.0 / base.sqrt()
        } else {
            self.r * libm::pow(base, 0.5 * self.r - 1.0)
        }
    }
}

#[inline]
pub(crate) fn sq_dist(y: &[f64], y2: &[f64]) -> f64 {
    y.iter().zip(y2).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `h_{a,r}(y, y2)`.
pub fn huber_energy(p: &KernelParams, y: &[f64], y2: &[f64]) -> Result<f64> {
    check_dim(y.len(), y2.len())?;
    Ok(p.value_from_sq_dist(sq_dist(y, y2)))
}

/// Gradient of `h_{a,r}(y, y2)` with respect to `y`:
/// `r·(a² + ‖y−y2‖²)^{r/2−1}·(y − y2)`.
///
/// At `a = 0, y = y2` the kernel has a kink; the zero subgradient is returned.
pub fn huber_energy_grad(p: &KernelParams, y: &[f64], y2: &[f64]) -> Result<Vec<f64>> {
    check_dim(y.len(), y2.len())?;
    let g = p.grad_factor_from_sq_dist(sq_dist(y, y2));
    Ok(y.iter().zip(y2).map(|(u, v)| g * (u - v)).collect())
}
