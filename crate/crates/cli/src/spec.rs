//! Experiment spec files (TOML) and their resolution into trainer inputs.
//!
//! ```toml
//! name = "additive-2d"
//! sampler = "additive"        # additive | multiplicative | dataset
//! n_x = 2
//! n_y = 2
//! q = 10
//! seed = 1                    # optional
//! out_dir = "runs/additive"   # optional, relative to the working directory
//!
//! [dataset]                   # only with sampler = "dataset"
//! path = "pairs.csv"          # relative to the spec file
//! knn_k = 20
//!
//! [train]                     # all keys optional
//! batch_size = 128
//! samples_per_condition = 64
//! max_iterations = 2000
//! a = 1e-6
//! r = 1.0
//! learning_rate = 1e-3
//!
//! [net]                       # all keys optional
//! hidden_layers = 5
//! width = 20
//! activation = "leaky_relu(0.01)"
//! ```

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use condquant::samplers::{additive_gaussian, multiplicative_gaussian, EmpiricalJoint};
use condquant::{
    Activation, AdamConfig, ConditionalSampler, Error as CoreError, KernelParams, NetArchitecture, TrainConfig,
};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Additive,
    Multiplicative,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    pub knn_k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub samples_per_condition: Option<usize>,
    pub max_iterations: Option<usize>,
    pub log_every: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub a: Option<f64>,
    pub r: Option<f64>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden_layers: Option<usize>,
    pub width: Option<usize>,
    pub activation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub sampler: SamplerKind,
    pub n_x: usize,
    pub n_y: usize,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSection>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub net: NetSection,
}

/// Everything needed to run one training job.
pub struct Resolved {
    /// The spec with every default filled in and the final seed recorded.
    pub spec: ExperimentSpec,
    pub config: TrainConfig,
    pub arch: NetArchitecture,
    pub sampler: Box<dyn ConditionalSampler>,
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("invalid spec field `{field}`: {reason}"))
}

/// Prefixes the field named by a core validation error with its section.
fn in_section(section: &str, err: CoreError) -> CliError {
    match err {
        CoreError::InvalidParameter { field, reason } => invalid(&format!("{section}{field}"), reason),
        other => CliError::Invalid(format!("invalid spec: {other}")),
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Invalid(format!("invalid spec: {}", e.message())))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read spec {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validates the spec and fills in defaults. Relative dataset paths are
    /// taken relative to `base_dir`.
    pub fn resolve(&self, seed: u64, base_dir: &Path) -> Result<Resolved, CliError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        for (field, v) in [("n_x", self.n_x), ("n_y", self.n_y), ("q", self.q)] {
            if v == 0 {
                return Err(invalid(field, "must be >= 1"));
            }
        }

        let t = &self.train;
        let defaults = TrainConfig::default();
        let adam_defaults = AdamConfig::default();
        let kernel = KernelParams::new(t.a.unwrap_or(defaults.kernel.a()), t.r.unwrap_or(defaults.kernel.r()))
            .map_err(|e| in_section("train.", e))?;
        let adam = AdamConfig {
            learning_rate: t.learning_rate.unwrap_or(adam_defaults.learning_rate),
            beta1: t.beta1.unwrap_or(adam_defaults.beta1),
            beta2: t.beta2.unwrap_or(adam_defaults.beta2),
            epsilon: t.epsilon.unwrap_or(adam_defaults.epsilon),
            clip_norm: t.clip_norm.or(adam_defaults.clip_norm),
        };
        let config = TrainConfig {
            batch_size: t.batch_size.unwrap_or(defaults.batch_size),
            samples_per_condition: t.samples_per_condition.unwrap_or(defaults.samples_per_condition),
            kernel,
            max_iterations: t.max_iterations.unwrap_or(defaults.max_iterations),
            seed,
            adam,
            checkpoint_every: t.checkpoint_every.unwrap_or(defaults.checkpoint_every),
            log_every: t.log_every.unwrap_or(defaults.log_every),
        };
        config.validate().map_err(|e| in_section("train.", e))?;

        let n = &self.net;
        let activation = match &n.activation {
            Some(s) => Activation::parse(s).map_err(|e| in_section("net.", e))?,
            None => Activation::default(),
        };
        let default_arch = NetArchitecture::new(self.n_x, self.n_y, self.q).map_err(|e| in_section("", e))?;
        let arch = NetArchitecture::with_layers(
            self.n_x,
            self.n_y,
            self.q,
            n.hidden_layers.unwrap_or(default_arch.hidden_layers()),
            n.width.unwrap_or(default_arch.width()),
            activation,
        )
        .map_err(|e| in_section("net.", e))?;

        let sampler = self.build_sampler(base_dir)?;
        let (sx, sy) = sampler.dims();
        if sx != self.n_x {
            return Err(invalid(
                "n_x",
                format!("sampler produces conditions of dimension {sx}, spec says {}", self.n_x),
            ));
        }
        if sy != self.n_y {
            return Err(invalid(
                "n_y",
                format!("sampler produces samples of dimension {sy}, spec says {}", self.n_y),
            ));
        }

        let spec = ExperimentSpec {
            seed: Some(seed),
            train: TrainSection {
                batch_size: Some(config.batch_size),
                samples_per_condition: Some(config.samples_per_condition),
                max_iterations: Some(config.max_iterations),
                log_every: Some(config.log_every),
                checkpoint_every: Some(config.checkpoint_every),
                a: Some(kernel.a()),
                r: Some(kernel.r()),
                learning_rate: Some(adam.learning_rate),
                beta1: Some(adam.beta1),
                beta2: Some(adam.beta2),
                epsilon: Some(adam.epsilon),
                clip_norm: adam.clip_norm,
            },
            net: NetSection {
                hidden_layers: Some(arch.hidden_layers()),
                width: Some(arch.width()),
                activation: Some(arch.activation().name()),
            },
            ..self.clone()
        };
        Ok(Resolved {
            spec,
            config,
            arch,
            sampler,
        })
    }

    fn build_sampler(&self, base_dir: &Path) -> Result<Box<dyn ConditionalSampler>, CliError> {
        match self.sampler {
            SamplerKind::Additive | SamplerKind::Multiplicative => {
                if self.dataset.is_some() {
                    return Err(invalid("dataset", "only allowed with sampler = \"dataset\""));
                }
                if self.n_x != self.n_y {
                    return Err(invalid("n_y", "the Gaussian samplers need n_x = n_y"));
                }
                let s: Box<dyn ConditionalSampler> = if self.sampler == SamplerKind::Additive {
                    Box::new(additive_gaussian(self.n_x).map_err(|e| in_section("", e))?)
                } else {
                    Box::new(multiplicative_gaussian(self.n_x).map_err(|e| in_section("", e))?)
                };
                Ok(s)
            }
            SamplerKind::Dataset => {
                let ds = self
                    .dataset
                    .as_ref()
                    .ok_or_else(|| invalid("dataset", "required with sampler = \"dataset\""))?;
                let path = self.dataset_path(base_dir).expect("dataset section present");
                let file = File::open(&path)
                    .map_err(|e| CliError::Io(format!("cannot read dataset {}: {e}", path.display())))?;
                let joint = EmpiricalJoint::from_csv(file, ds.knn_k).map_err(|e| match e {
                    CoreError::InvalidParameter { field: "knn_k", reason } => invalid("dataset.knn_k", reason),
                    other => invalid("dataset.path", other),
                })?;
                Ok(Box::new(joint))
            }
        }
    }

    pub fn dataset_path(&self, base_dir: &Path) -> Option<PathBuf> {
        self.dataset.as_ref().map(|d| base_dir.join(&d.path))
    }
}

/// `--seed`, then the spec's `seed`, then `CONDQUANT_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, spec: Option<u64>, env: Option<&str>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(spec) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("CONDQUANT_SEED must be an unsigned integer, got {v:?}"))),
        None => Ok(0),
    }
}
