//! Reference solutions the trained network is checked against.
//!
//! In one dimension with the energy kernel (`a = 0, r = 1`) the optimal
//! `Q`-point uniform quantizer of an absolutely continuous law with positive
//! density is unique: it sits at the quantiles of levels `(q + ½)/Q`. The
//! [`quantile_quantizer`] evaluates that directly. [`static_quantizer`]
//! solves the same problem for any single law by descending the sampled
//! distance, and [`InterpolationGrid`] is the naive baseline that linearly
//! interpolates quantizers precomputed at a few conditions.

use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::measures::{distance_and_grad, self_energy, DiscreteMeasure};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{tag, StreamRng};
use crate::special::norm_inv_cdf;

/// Inverse CDF of a one-dimensional law.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileFunction {
    Normal {
        mean: f64,
        std: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Sorted sample; the quantile at level α is the smallest stored value
    /// whose empirical CDF reaches α.
    Empirical(Vec<f64>),
}

impl QuantileFunction {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "std",
                reason: format!("normal law needs finite mean and std > 0, got ({mean}, {std})"),
            });
        }
        Ok(Self::Normal { mean, std })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low < high && low.is_finite() && high.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "high",
                reason: format!("uniform law needs low < high, got ({low}, {high})"),
            });
        }
        Ok(Self::Uniform { low, high })
    }

    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptyInput("empirical quantile function needs a sample"));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "sample",
                reason: "values must be finite".into(),
            });
        }
        sample.sort_by(f64::total_cmp);
        Ok(Self::Empirical(sample))
    }

    /// Quantile at level `alpha ∈ (0, 1)`.
    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            Self::Normal { mean, std } => mean + std * norm_inv_cdf(alpha),
            Self::Uniform { low, high } => low + alpha * (high - low),
            Self::Empirical(sorted) => {
                let n = sorted.len();
                let k = (alpha * n as f64).ceil() as usize;
                sorted[k.clamp(1, n) - 1]
            }
        }
    }

    /// The law translated by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        match self {
            Self::Normal { mean, std } => Self::Normal {
                mean: mean + shift,
                std: *std,
            },
            Self::Uniform { low, high } => Self::Uniform {
                low: low + shift,
                high: high + shift,
            },
            Self::Empirical(s) => Self::Empirical(s.iter().map(|v| v + shift).collect()),
        }
    }
}

/// Quantiles at levels `(q + ½)/Q`, `q = 0..Q`, ascending.
pub fn quantile_quantizer(qf: &QuantileFunction, q: usize) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::InvalidParameter {
            field: "q",
            reason: "need at least one point".into(),
        });
    }
    let mut pts: Vec<f64> = (0..q).map(|i| qf.eval((i as f64 + 0.5) / q as f64)).collect();
    pts.sort_by(f64::total_cmp);
    Ok(pts)
}

/// Settings for [`static_quantizer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticQuantizerConfig {
    pub q: usize,
    pub steps: usize,
    /// Fresh target draws per step.
    pub samples_per_step: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Fraction of the final steps whose iterates are averaged into the
    /// returned points; 0 returns the last iterate.
    pub average_tail: f64,
}

impl StaticQuantizerConfig {
    pub fn new(q: usize, steps: usize, seed: u64) -> Self {
        Self {
            q,
            steps,
            samples_per_step: 512,
            seed,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            average_tail: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticQuantization {
    /// `Q` points (in 1D: sorted ascending).
    pub points: Vec<Vec<f64>>,
    /// Full squared distance against that step's draws, before the update.
    pub loss_trace: Vec<f64>,
}

/// Quantizes a single (non-conditional) law by running Adam directly on the
/// `Q` point coordinates, with a fresh sample from `sample_source` at every
/// step. The points start at the first `Q` draws. The returned points are
/// the mean of the iterates over the last `average_tail` fraction of steps,
/// which removes most of the step-to-step jitter of the stochastic loss.
pub fn static_quantizer<F>(
    p: &KernelParams,
    mut sample_source: F,
    config: &StaticQuantizerConfig,
) -> Result<StaticQuantization>
where
    F: FnMut(&mut StreamRng, usize) -> Vec<Vec<f64>>,
{
    if !(0.0..=1.0).contains(&config.average_tail) {
        return Err(Error::InvalidParameter {
            field: "average_tail",
            reason: "must lie in [0, 1]".into(),
        });
    }
    if config.q == 0 || config.samples_per_step == 0 {
        return Err(Error::InvalidParameter {
            field: "q",
            reason: "q and samples_per_step must be >= 1".into(),
        });
    }
    let mut init_rng = StreamRng::substream(config.seed, &[tag::STATIC, u64::MAX]);
    let init = sample_source(&mut init_rng, config.q);
    let dim = init
        .first()
        .map(Vec::len)
        .ok_or(Error::EmptyInput("sample source returned nothing"))?;
    let mut coords: Vec<f64> = init.into_iter().flatten().collect();
    let mut adam = AdamState::new(config.adam, coords.len())?;
    let mut loss_trace = Vec::with_capacity(config.steps);
    let tail = ((config.steps as f64 * config.average_tail).round() as usize).min(config.steps);
    let mut tail_sum = vec![0.0; coords.len()];
    for step in 0..config.steps {
        let mut rng = StreamRng::substream(config.seed, &[tag::STATIC, step as u64]);
        let target = DiscreteMeasure::uniform_flat(
            dim,
            sample_source(&mut rng, config.samples_per_step)
                .into_iter()
                .flatten()
                .collect(),
        )?;
        let current = DiscreteMeasure::uniform_flat(dim, coords.clone())?;
        let (partial, grad) = distance_and_grad(p, &current, &target)?;
        loss_trace.push(partial - self_energy(p, &target));
        adam.step(&mut coords, &grad)?;
        if step + tail >= config.steps {
            for (acc, c) in tail_sum.iter_mut().zip(&coords) {
                *acc += c;
            }
        }
    }
    if tail > 0 {
        coords = tail_sum.iter().map(|v| v / tail as f64).collect();
    }
    let mut points: Vec<Vec<f64>> = coords.chunks_exact(dim).map(<[f64]>::to_vec).collect();
    if dim == 1 {
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    Ok(StaticQuantization { points, loss_trace })
}

/// Piecewise-linear interpolation between 1D quantizers precomputed at
/// sorted conditions `x_1 < … < x_L`. Outside the grid the nearest endpoint
/// quantizer is returned.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationGrid {
    xs: Vec<f64>,
    quantizers: Vec<Vec<f64>>,
}

impl InterpolationGrid {
    pub fn new(xs: Vec<f64>, quantizers: Vec<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("interpolation grid needs at least one node"));
        }
        if xs.len() != quantizers.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: quantizers.len(),
            });
        }
        if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                field: "grid",
                reason: "grid nodes must be finite and strictly increasing".into(),
            });
        }
        let q = quantizers[0].len();
        for y in &quantizers {
            if y.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: y.len(),
                });
            }
            if y.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidParameter {
                    field: "quantizers",
                    reason: "each quantizer must be sorted ascending".into(),
                });
            }
        }
        Ok(Self { xs, quantizers })
    }

    /// Builds the grid by evaluating `quantizer_at` at every node.
    pub fn from_fn<F>(xs: Vec<f64>, mut quantizer_at: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<Vec<f64>>,
    {
        let quantizers = xs.iter().map(|&x| quantizer_at(x)).collect::<Result<Vec<_>>>()?;
        Self::new(xs, quantizers)
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.quantizers[0].clone();
        }
        if x >= self.xs[n - 1] {
            return self.quantizers[n - 1].clone();
        }
        // first node strictly greater than x; 1 ≤ hi ≤ n − 1 here
        let hi = self.xs.partition_point(|&v| v <= x);
        let lo = hi - 1;
        if self.xs[lo] == x {
            return self.quantizers[lo].clone();
        }
        let v = (self.xs[hi] - x) / (self.xs[hi] - self.xs[lo]);
        self.quantizers[lo]
            .iter()
            .zip(&self.quantizers[hi])
            .map(|(a, b)| v * a + (1.0 - v) * b)
            .collect()
    }
}

/// Convenience form of [`InterpolationGrid::eval`].
pub fn interpolated_quantizer(grid: &InterpolationGrid, x: f64) -> Vec<f64> {
    grid.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_two_points() {
        let qf = QuantileFunction::uniform(0.0, 1.0).unwrap();
        assert_eq!(quantile_quantizer(&qf, 2).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn normal_median() {
        let qf = QuantileFunction::normal(0.0, 1.0).unwrap();
        assert_eq!(quantile_quantizer(&qf, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn normal_five_points() {
        let qf = QuantileFunction::normal(0.0, 1.0).unwrap();
        let got = quantile_quantizer(&qf, 5).unwrap();
        let expected = [-1.2816, -0.5244, 0.0, 0.5244, 1.2816];
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-3);
        }
    }

    #[test]
    fn shift_is_exact() {
        let base = QuantileFunction::normal(0.0, 1.0).unwrap();
        for m in [-3.0, 0.25, 7.5] {
            let shifted = quantile_quantizer(&QuantileFunction::normal(m, 1.0).unwrap(), 7).unwrap();
            let expected: Vec<f64> = quantile_quantizer(&base, 7).unwrap().iter().map(|v| v + m).collect();
            assert_eq!(shifted, expected);
            assert_eq!(base.shifted(m), QuantileFunction::normal(m, 1.0).unwrap());
        }
    }

    #[test]
    fn empirical_quantiles() {
        let qf = QuantileFunction::empirical(vec![3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(qf.eval(0.25), 1.0);
        assert_eq!(qf.eval(0.26), 2.0);
        assert_eq!(qf.eval(0.999), 4.0);
        assert_eq!(quantile_quantizer(&qf, 2).unwrap(), vec![1.0, 3.0]);
        assert!(QuantileFunction::empirical(vec![]).is_err());
    }

    #[test]
    fn invalid_laws() {
        assert!(QuantileFunction::normal(0.0, 0.0).is_err());
        assert!(QuantileFunction::uniform(1.0, 1.0).is_err());
        assert!(quantile_quantizer(&QuantileFunction::uniform(0.0, 1.0).unwrap(), 0).is_err());
    }

    fn normal_source(mean: f64) -> impl FnMut(&mut StreamRng, usize) -> Vec<Vec<f64>> {
        move |rng, n| (0..n).map(|_| vec![mean + rng.standard_normal()]).collect()
    }

    #[test]
    fn static_dirac() {
        let p = KernelParams::new(1e-6, 1.0).unwrap();
        let cfg = StaticQuantizerConfig::new(1, 500, 3);
        let out = static_quantizer(&p, |_: &mut StreamRng, n| vec![vec![0.0]; n], &cfg).unwrap();
        assert!(out.points[0][0].abs() < 1e-3);
    }

    #[test]
    fn static_uniform_two_points() {
        let p = KernelParams::new(1e-6, 1.0).unwrap();
        let cfg = StaticQuantizerConfig::new(2, 3000, 4);
        let out = static_quantizer(
            &p,
            |rng: &mut StreamRng, n| (0..n).map(|_| vec![rng.uniform()]).collect(),
            &cfg,
        )
        .unwrap();
        assert!((out.points[0][0] - 0.25).abs() < 0.03, "{:?}", out.points);
        assert!((out.points[1][0] - 0.75).abs() < 0.03, "{:?}", out.points);
    }

    #[test]
    fn static_normal_is_symmetric() {
        let p = KernelParams::new(1e-6, 1.0).unwrap();
        let cfg = StaticQuantizerConfig::new(4, 3000, 5);
        let out = static_quantizer(&p, normal_source(2.0), &cfg).unwrap();
        let pts: Vec<f64> = out.points.iter().map(|v| v[0]).collect();
        for i in 0..2 {
            let mirrored = 4.0 - pts[3 - i];
            assert!((pts[i] - mirrored).abs() < 0.05, "{pts:?}");
        }
        assert_eq!(out.loss_trace.len(), 3000);
    }

    #[test]
    fn static_is_deterministic() {
        let p = KernelParams::new(1e-6, 1.0).unwrap();
        let cfg = StaticQuantizerConfig::new(3, 50, 6);
        let a = static_quantizer(&p, normal_source(0.0), &cfg).unwrap();
        let b = static_quantizer(&p, normal_source(0.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    fn grid() -> InterpolationGrid {
        InterpolationGrid::new(
            vec![-1.0, 0.0, 2.0],
            vec![vec![-2.0, 0.0], vec![-1.0, 1.0], vec![1.0, 5.0]],
        )
        .unwrap()
    }

    #[test]
    fn interpolation_nodes_midpoints_and_clamps() {
        let g = grid();
        assert_eq!(interpolated_quantizer(&g, 0.0), vec![-1.0, 1.0]);
        assert_eq!(interpolated_quantizer(&g, 2.0), vec![1.0, 5.0]);
        assert_eq!(interpolated_quantizer(&g, -0.5), vec![-1.5, 0.5]);
        assert_eq!(interpolated_quantizer(&g, 1.0), vec![0.0, 3.0]);
        assert_eq!(interpolated_quantizer(&g, -7.0), vec![-2.0, 0.0]);
        assert_eq!(interpolated_quantizer(&g, 9.0), vec![1.0, 5.0]);
    }

    #[test]
    fn interpolation_rejects_bad_grids() {
        assert!(InterpolationGrid::new(vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(InterpolationGrid::new(vec![1.0, 0.0], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(InterpolationGrid::new(vec![0.0], vec![vec![1.0, 0.0]]).is_err());
        assert!(InterpolationGrid::new(vec![], vec![]).is_err());
        assert!(InterpolationGrid::new(vec![0.0, 1.0], vec![vec![0.0]]).is_err());
    }

    proptest! {
        #[test]
        fn quantiles_strictly_increasing(mean in -5.0..5.0f64, std in 0.1..3.0f64, q in 1usize..40) {
            let pts = quantile_quantizer(&QuantileFunction::normal(mean, std).unwrap(), q).unwrap();
            prop_assert!(pts.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn interpolation_continuous_and_monotone(x in -3.0..4.0f64, dx in 1e-9..1e-3f64) {
            // node quantizers increase componentwise with x, so does the interpolant
            let g = grid();
            let a = g.eval(x);
            let b = g.eval(x + dx);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!(v >= u);
                prop_assert!(v - u <= 2.0 * dx + 1e-12);
            }
        }
    }
}
