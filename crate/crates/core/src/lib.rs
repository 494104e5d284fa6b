//! Conditional measure quantization.
//!
//! A small fully-connected network maps a condition `x` to `Q` points whose
//! uniform Dirac mixture approximates the conditional law of `Y` given
//! `X = x`. Training minimizes the squared Huber-energy distance between that
//! mixture and fresh conditional samples, batch by batch, with Adam.
//!
//! Module map:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernel`] | Huber-energy kernel `(a² + ‖y−ỹ‖²)^{r/2} − a^r` and its gradient |
//! | [`measures`] | Weighted Dirac sums and their squared kernel distance |
//! | [`net`] | The quantizer network, reverse-mode gradients, checkpoints |
//! | [`optim`] | Adam over a flat parameter vector |
//! | [`rng`] | Counter-based substreams keyed by `(seed, labels…)` |
//! | [`samplers`] | Joint laws: additive / multiplicative Gaussian, empirical k-NN |
//! | [`oracle`] | Quantile quantizer, static quantizer, interpolation baseline |
//! | [`trainer`] | The training loop, batch loss, evaluation, training logs |

pub mod error;
pub mod kernel;
pub mod measures;
pub mod net;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod samplers;
pub mod special;
pub mod trainer;

pub use error::{Error, Result};
pub use kernel::KernelParams;
pub use measures::DiscreteMeasure;
pub use net::{Activation, NetArchitecture, QuantizerNet};
pub use optim::{AdamConfig, AdamState};
pub use rng::StreamRng;
pub use samplers::ConditionalSampler;
pub use trainer::{TrainConfig, TrainReport};

/// Decimal text with 17 significant digits; parses back to the same `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
