//! The training loop.
//!
//! Each iteration draws `B` conditions from the marginal of `X`, `J` fresh
//! conditional samples for every condition, and takes one Adam step on
//!
//! ```text
//! (1/B) Σ_b d( (1/J) Σ_j δ_{ỹ_{b,j}} , (1/Q) Σ_q δ_{y_q(x_b)} )²
//! ```
//!
//! Batch elements are evaluated in parallel; their gradients are reduced in
//! batch order, so results do not depend on the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::fmt17;
use crate::kernel::KernelParams;
use crate::measures::{distance_and_grad, distance_squared_reference, self_energy, DiscreteMeasure};
use crate::net::{CheckpointDocument, NetArchitecture, QuantizerNet};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{tag, StreamRng};
use crate::samplers::ConditionalSampler;

pub const FINAL_CHECKPOINT: &str = "model.ckpt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// `B`, conditions per iteration.
    pub batch_size: usize,
    /// `J`, conditional draws per condition.
    pub samples_per_condition: usize,
    pub kernel: KernelParams,
    pub max_iterations: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Intermediate checkpoint period in iterations; 0 disables them.
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            samples_per_condition: 64,
            kernel: KernelParams::new(1e-6, 1.0).expect("valid default kernel"),
            max_iterations: 1000,
            seed: 0,
            adam: AdamConfig::default(),
            checkpoint_every: 250,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("samples_per_condition", self.samples_per_condition),
            ("max_iterations", self.max_iterations),
            ("log_every", self.log_every),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    field,
                    reason: "must be >= 1".into(),
                });
            }
        }
        self.adam.validate()
    }
}

/// One logged loss value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    /// Zero-based iteration; the loss is evaluated before that iteration's update.
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<LogEntry>,
    /// Wall-clock milliseconds spent in each iteration.
    pub wall_ms: Vec<f64>,
    pub final_checkpoint: Option<PathBuf>,
    pub config: TrainConfig,
}

impl TrainReport {
    /// Mean logged loss over the first and the last `fraction` of the trace
    /// (at least one entry each).
    pub fn head_tail_means(&self, fraction: f64) -> (f64, f64) {
        let n = self.trace.len();
        let k = ((n as f64 * fraction).floor() as usize).clamp(1, n.max(1));
        let mean = |s: &[LogEntry]| s.iter().map(|e| e.loss).sum::<f64>() / s.len() as f64;
        (mean(&self.trace[..k]), mean(&self.trace[n - k..]))
    }
}

/// Conditions and their conditional samples for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBatch {
    pub xs: Vec<Vec<f64>>,
    /// `samples[b]` holds the `J` draws for `xs[b]`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// Draws the batch of `iteration`. Conditions come from substream
/// `(seed, SAMPLE_X, iteration)`, the draws for element `b` from
/// `(seed, SAMPLE_Y, iteration, b)`.
pub fn draw_batch(
    sampler: &dyn ConditionalSampler,
    seed: u64,
    iteration: usize,
    batch_size: usize,
    samples_per_condition: usize,
) -> Result<ConditionBatch> {
    let mut xrng = StreamRng::substream(seed, &[tag::SAMPLE_X, iteration as u64]);
    let xs = sampler.sample_x(&mut xrng, batch_size);
    let samples = xs
        .par_iter()
        .enumerate()
        .map(|(b, x)| {
            let mut rng = StreamRng::substream(seed, &[tag::SAMPLE_Y, iteration as u64, b as u64]);
            sampler.sample_y_given_x(&mut rng, x, samples_per_condition)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionBatch { xs, samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Mean full squared distance over the batch.
    pub loss: f64,
    /// Gradient of `loss` with respect to the net parameters.
    pub grad: Vec<f64>,
    pub per_element: Vec<f64>,
}

/// Loss and parameter gradient on an already drawn batch.
///
/// The reported loss includes the samples' own self-energy term; that term
/// does not depend on the parameters and contributes nothing to the gradient.
pub fn loss_on_batch(
    net: &QuantizerNet,
    p: &KernelParams,
    batch: &ConditionBatch,
    iteration: usize,
) -> Result<BatchLoss> {
    loss_on_batch_checked(net, p, batch, iteration, false)
}

fn loss_on_batch_checked(
    net: &QuantizerNet,
    p: &KernelParams,
    batch: &ConditionBatch,
    iteration: usize,
    verify: bool,
) -> Result<BatchLoss> {
    let arch = net.architecture();
    check_dim(batch.xs.len(), batch.samples.len())?;
    if batch.xs.is_empty() {
        return Err(Error::EmptyInput("batch has no conditions"));
    }
    let n_params = net.params().len();
    let per_element = batch
        .xs
        .par_iter()
        .zip(&batch.samples)
        .map(|(x, ys)| -> Result<(f64, Vec<f64>)> {
            let cache = net.forward_cached(x)?;
            let points = DiscreteMeasure::uniform_flat(arch.n_y(), cache.output().to_vec())?;
            let flat_samples: Vec<f64> = ys.iter().flatten().copied().collect();
            if ys.iter().any(|y| y.len() != arch.n_y()) {
                return Err(Error::DimensionMismatch {
                    expected: arch.n_y(),
                    got: ys.iter().map(Vec::len).find(|&l| l != arch.n_y()).unwrap_or(0),
                });
            }
            let samples = DiscreteMeasure::uniform_flat(arch.n_y(), flat_samples)?;
            let (partial, upstream) = distance_and_grad(p, &points, &samples)?;
            let loss = partial - self_energy(p, &samples);
            if verify {
                let reference = distance_squared_reference(p, &samples, &points)?;
                assert!(
                    (loss - reference).abs() <= 1e-10 * reference.abs().max(1.0),
                    "reported loss {loss} disagrees with reference {reference}"
                );
            }
            let mut grad = vec![0.0; n_params];
            net.backward_into(&cache, &upstream, &mut grad)?;
            Ok((loss, grad))
        })
        .collect::<Result<Vec<_>>>()?;

    let inv_b = 1.0 / per_element.len() as f64;
    let mut grad = vec![0.0; n_params];
    let mut total = 0.0;
    let mut losses = Vec::with_capacity(per_element.len());
    for (batch_index, (loss, g)) in per_element.into_iter().enumerate() {
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                batch_index,
                loss,
            });
        }
        total += loss;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
        losses.push(loss);
    }
    for g in &mut grad {
        *g *= inv_b;
    }
    Ok(BatchLoss {
        loss: total * inv_b,
        grad,
        per_element: losses,
    })
}

/// Draws the batch of `iteration` and evaluates loss and gradient on it.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss(
    net: &QuantizerNet,
    sampler: &dyn ConditionalSampler,
    p: &KernelParams,
    batch_size: usize,
    samples_per_condition: usize,
    seed: u64,
    iteration: usize,
) -> Result<BatchLoss> {
    check_sampler_dims(net.architecture(), sampler)?;
    let batch = draw_batch(sampler, seed, iteration, batch_size, samples_per_condition)?;
    loss_on_batch(net, p, &batch, iteration)
}

fn check_sampler_dims(arch: &NetArchitecture, sampler: &dyn ConditionalSampler) -> Result<()> {
    let (n_x, n_y) = sampler.dims();
    check_dim(arch.input_dim(), n_x)?;
    check_dim(arch.n_y(), n_y)
}

fn checkpoint_document(net: &QuantizerNet, adam: &AdamState, seed: u64, iterations: usize) -> CheckpointDocument {
    let mut doc = net.to_document(Some(seed), Some(iterations as u64));
    doc.optimizer = Some(adam.snapshot());
    doc
}

fn write_checkpoint(path: &Path, doc: &CheckpointDocument) -> Result<()> {
    std::fs::write(path, doc.to_text()).map_err(|source| Error::CheckpointWrite {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs exactly `config.max_iterations` iterations from a fresh network.
///
/// With `out_dir`, intermediate checkpoints `checkpoint_<iter>.ckpt` are
/// written every `checkpoint_every` iterations and the final state goes to
/// `model.ckpt`.
pub fn train(
    config: &TrainConfig,
    arch: NetArchitecture,
    sampler: &dyn ConditionalSampler,
    out_dir: Option<&Path>,
) -> Result<(QuantizerNet, TrainReport)> {
    config.validate()?;
    check_sampler_dims(&arch, sampler)?;
    let mut net = QuantizerNet::init(arch, config.seed);
    let mut adam = AdamState::new(config.adam, net.params().len())?;
    let mut trace = Vec::with_capacity(config.max_iterations / config.log_every + 1);
    let mut wall_ms = Vec::with_capacity(config.max_iterations);

    for it in 0..config.max_iterations {
        let start = Instant::now();
        let logged = it % config.log_every == 0 || it + 1 == config.max_iterations;
        let batch = draw_batch(
            sampler,
            config.seed,
            it,
            config.batch_size,
            config.samples_per_condition,
        )?;
        let verify = cfg!(debug_assertions) && logged;
        let out = loss_on_batch_checked(&net, &config.kernel, &batch, it, verify)?;
        adam.step(net.params_mut(), &out.grad)
            .and_then(|()| net.check_finite())
            .map_err(|e| Error::Diverged {
                iteration: it,
                source: Box::new(e),
            })?;
        if logged {
            trace.push(LogEntry {
                iteration: it,
                loss: out.loss,
            });
        }
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 && it + 1 < config.max_iterations
            {
                let path = dir.join(format!("checkpoint_{:06}.ckpt", it + 1));
                write_checkpoint(&path, &checkpoint_document(&net, &adam, config.seed, it + 1))?;
            }
        }
        wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join(FINAL_CHECKPOINT);
            write_checkpoint(
                &path,
                &checkpoint_document(&net, &adam, config.seed, config.max_iterations),
            )?;
            Some(path)
        }
        None => None,
    };
    Ok((
        net,
        TrainReport {
            trace,
            wall_ms,
            final_checkpoint,
            config: *config,
        },
    ))
}

/// Training log: `iteration,loss`, one row per logged iteration.
pub fn write_train_log<W: Write>(report: &TrainReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,loss")?;
    for e in &report.trace {
        writeln!(w, "{},{}", e.iteration, fmt17(e.loss))?;
    }
    Ok(())
}

/// Wall-clock timings: `iteration,wall_ms`, one row per iteration. Kept out
/// of the training log so that the log is reproducible byte for byte.
pub fn write_timing_log<W: Write>(report: &TrainReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,wall_ms")?;
    for (i, ms) in report.wall_ms.iter().enumerate() {
        writeln!(w, "{i},{ms:.3}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Squared distance between the net's quantizer and `J_eval` fresh
    /// conditional draws.
    pub loss: f64,
}

/// Quantizes each condition in `xs` and scores it against fresh conditional
/// samples drawn from substream `(seed, EVAL, index)`.
pub fn evaluate(
    net: &QuantizerNet,
    sampler: &dyn ConditionalSampler,
    p: &KernelParams,
    xs: &[Vec<f64>],
    samples_per_condition: usize,
    seed: u64,
) -> Result<Vec<Evaluation>> {
    check_sampler_dims(net.architecture(), sampler)?;
    if samples_per_condition == 0 {
        return Err(Error::InvalidParameter {
            field: "samples_per_condition",
            reason: "must be >= 1".into(),
        });
    }
    let n_y = net.architecture().n_y();
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let flat = net.forward_flat(x)?;
            let mut rng = StreamRng::substream(seed, &[tag::EVAL, i as u64]);
            let draws = sampler.sample_y_given_x(&mut rng, x, samples_per_condition)?;
            let samples = DiscreteMeasure::uniform_flat(n_y, draws.into_iter().flatten().collect())?;
            let points = DiscreteMeasure::uniform_flat(n_y, flat.clone())?;
            let loss = crate::measures::distance_squared(p, &points, &samples)?;
            Ok(Evaluation {
                x: x.clone(),
                points: flat.chunks_exact(n_y).map(<[f64]>::to_vec).collect(),
                loss,
            })
        })
        .collect()
}
