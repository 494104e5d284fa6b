//! Adam over a flat parameter vector.

use crate::error::{check_dim, Error, Result};
use crate::net::OptimizerSnapshot;

/// Something that turns a gradient into a parameter update.
pub trait Optimizer {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()>;
}

/// Adam hyperparameters. `clip_norm` rescales the gradient to at most that
/// global L2 norm before the update; off by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must satisfy 0 <= beta1 < 1");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must satisfy 0 <= beta2 < 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be > 0");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip_norm", "must be > 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        })
    }

    /// Resumes from stored moments.
    pub fn from_snapshot(config: AdamConfig, snapshot: OptimizerSnapshot) -> Result<Self> {
        config.validate()?;
        check_dim(snapshot.m.len(), snapshot.v.len())?;
        if snapshot.v.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidParameter {
                field: "v",
                reason: "second moments must be non-negative".into(),
            });
        }
        Ok(Self {
            config,
            t: snapshot.t,
            m: snapshot.m,
            v: snapshot.v,
        })
    }

    pub fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot {
            t: self.t,
            m: self.m.clone(),
            v: self.v.clone(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One Adam update. A non-finite gradient is rejected before any state
    /// changes.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_dim(self.m.len(), params.len())?;
        check_dim(self.m.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let scale = match self.config.clip_norm {
            Some(c) => {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let g = g * scale;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

impl Optimizer for AdamState {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        AdamState::step(self, params, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(AdamConfig::default(), 3).unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(cfg, 1).unwrap();
        let mut p = vec![0.0];
        s.step(&mut p, &[4.0]).unwrap();
        // m̂ = g, √v̂ = |g|
        let expected = -cfg.learning_rate * 4.0 / (4.0 + cfg.epsilon);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let (a, b1, b2, e) = (1e-3, 0.9, 0.999, 1e-8);
        let (mut th, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        let g = 2.5;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            th -= a * mh / (vh.sqrt() + e);
        }
        let mut s = AdamState::new(AdamConfig::default(), 1).unwrap();
        let mut p = vec![0.5];
        s.step(&mut p, &[g]).unwrap();
        s.step(&mut p, &[g]).unwrap();
        assert!((p[0] - th).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_leaves_state_untouched() {
        let mut s = AdamState::new(AdamConfig::default(), 2).unwrap();
        let mut p = vec![1.0, 1.0];
        s.step(&mut p, &[0.3, -0.1]).unwrap();
        let before = (s.clone(), p.clone());
        let err = s.step(&mut p, &[f64::NAN, 1.0]).unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient");
        assert_eq!((s, p), before);
    }

    #[test]
    fn rejects_bad_config_and_lengths() {
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad, 1).is_err());
        let bad = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad, 1).is_err());
        let mut s = AdamState::new(AdamConfig::default(), 2).unwrap();
        assert!(s.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn clipping_bounds_first_step_direction() {
        let cfg = AdamConfig {
            clip_norm: Some(1.0),
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(cfg, 2).unwrap();
        let mut p = vec![0.0, 0.0];
        s.step(&mut p, &[300.0, 400.0]).unwrap();
        // after clipping g = (0.6, 0.8); first Adam step is still ≈ −α·sign(g)
        assert!((p[0] + 1e-3).abs() < 1e-9 && (p[1] + 1e-3).abs() < 1e-9);
        assert!((s.first_moment()[0] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn converges_on_quadratic() {
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        for seed in 0..5 {
            let mut r = StreamRng::substream(seed, &[]);
            let c: Vec<f64> = (0..4).map(|_| 4.0 * r.uniform() - 2.0).collect();
            let mut p: Vec<f64> = (0..4).map(|_| 4.0 * r.uniform() - 2.0).collect();
            let mut s = AdamState::new(cfg, 4).unwrap();
            for _ in 0..5000 {
                let g: Vec<f64> = p.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
                s.step(&mut p, &g).unwrap();
            }
            let dist = p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dist < 1e-3, "seed {seed}: {dist}");
        }
    }

    proptest! {
        #[test]
        fn constant_sign_updates_are_bounded(seed in any::<u64>(), sign in prop_oneof![Just(1.0f64), Just(-1.0f64)]) {
            // i.i.d. magnitudes within ±10% of a random scale; larger relative
            // swings can push a single step up to (1−β1)/√(1−β2) ≈ 3.2·α
            let alpha = AdamConfig::default().learning_rate;
            let mut rng = StreamRng::substream(seed, &[]);
            let scale = 10f64.powf(6.0 * rng.uniform() - 3.0);
            let mut s = AdamState::new(AdamConfig::default(), 1).unwrap();
            let mut p = vec![0.0];
            for _ in 0..500 {
                let g = sign * scale * (0.9 + 0.2 * rng.uniform());
                let before = p[0];
                s.step(&mut p, &[g]).unwrap();
                prop_assert!((p[0] - before).abs() <= 1.1 * alpha);
                prop_assert!(s.second_moment()[0] >= 0.0);
            }
        }

        #[test]
        fn deterministic(g in proptest::collection::vec(-5.0..5.0f64, 1..8)) {
            let n = g.len();
            let mut a = AdamState::new(AdamConfig::default(), n).unwrap();
            let mut b = a.clone();
            let mut pa = vec![0.25; n];
            let mut pb = pa.clone();
            a.step(&mut pa, &g).unwrap();
            b.step(&mut pb, &g).unwrap();
            prop_assert_eq!(pa, pb);
            prop_assert_eq!(a, b);
        }
    }
}
