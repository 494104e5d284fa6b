//! Checkpoint documents.
//!
//! A checkpoint is a TOML document:
//!
//! ```toml
//! format_version = 1
//! seed = "42"                 # optional, decimal string (full u64 range)
//! iterations_trained = 3000   # optional
//! params = [
//!   -1.2345678901234567e-1,
//!   ...
//! ]
//!
//! [arch]
//! input_dim = 1
//! hidden = 5
//! width = 5
//! activation = "leaky_relu(0.01)"
//! n_y = 1
//! q = 5
//!
//! [optimizer]                 # optional, written by the trainer
//! t = 3000
//! m = [...]
//! v = [...]
//! ```
//!
//! Floats are written with 17 significant digits so that every `f64`
//! survives a save/load cycle exactly, and saving a loaded document
//! reproduces it byte for byte.

use std::fmt::Write as _;

use toml::{Table, Value};

use super::{Activation, NetArchitecture};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: i64 = 1;

/// Adam moments stored alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSnapshot {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointDocument {
    pub arch: NetArchitecture,
    pub params: Vec<f64>,
    pub seed: Option<u64>,
    pub iterations_trained: Option<u64>,
    pub optimizer: Option<OptimizerSnapshot>,
}

fn write_floats(out: &mut String, key: &str, values: &[f64]) {
    let _ = writeln!(out, "{key} = [");
    for v in values {
        let _ = writeln!(out, "  {v:.16e},");
    }
    out.push_str("]\n");
}

impl CheckpointDocument {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {FORMAT_VERSION}");
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = \"{seed}\"");
        }
        if let Some(it) = self.iterations_trained {
            let _ = writeln!(out, "iterations_trained = {it}");
        }
        write_floats(&mut out, "params", &self.params);
        let a = &self.arch;
        let _ = write!(
            out,
            "\n[arch]\ninput_dim = {}\nhidden = {}\nwidth = {}\nactivation = \"{}\"\nn_y = {}\nq = {}\n",
            a.input_dim,
            a.hidden_layers,
            a.width,
            a.activation.name(),
            a.n_y,
            a.q
        );
        if let Some(opt) = &self.optimizer {
            let _ = write!(out, "\n[optimizer]\nt = {}\n", opt.t);
            write_floats(&mut out, "m", &opt.m);
            write_floats(&mut out, "v", &opt.v);
        }
        out
    }

    /// Parses and validates a checkpoint.
    ///
    /// Fails with [`Error::VersionMismatch`], [`Error::ShapeMismatch`] or
    /// [`Error::NonFiniteParameter`] for the corresponding defects, and with
    /// [`Error::Parse`] for anything else malformed.
    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for key in table.keys() {
            if !matches!(
                key.as_str(),
                "format_version" | "seed" | "iterations_trained" | "params" | "arch" | "optimizer"
            ) {
                return Err(Error::Parse(format!("unknown key `{key}`")));
            }
        }
        let version = get_int(&table, "format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let arch = parse_arch(
            table
                .get("arch")
                .and_then(Value::as_table)
                .ok_or_else(|| Error::Parse("missing [arch] table".into()))?,
        )?;
        let seed = match table.get("seed") {
            None => None,
            Some(Value::String(s)) => Some(s.parse::<u64>().map_err(|_| Error::Parse(format!("bad seed `{s}`")))?),
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(_) => return Err(Error::Parse("`seed` must be a decimal string".into())),
        };
        let iterations_trained = match table.get("iterations_trained") {
            None => None,
            Some(_) => Some(get_count(&table, "iterations_trained")? as u64),
        };
        let params = get_floats(&table, "params")?;
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "architecture needs {} parameters, document has {}",
                arch.param_count(),
                params.len()
            )));
        }
        ensure_finite(&params)?;
        let optimizer = match table.get("optimizer") {
            None => None,
            Some(Value::Table(t)) => {
                let m = get_floats(t, "m")?;
                let v = get_floats(t, "v")?;
                if m.len() != params.len() || v.len() != params.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "optimizer moments have lengths {}/{}, expected {}",
                        m.len(),
                        v.len(),
                        params.len()
                    )));
                }
                ensure_finite(&m)?;
                ensure_finite(&v)?;
                Some(OptimizerSnapshot {
                    t: get_count(t, "t")? as u64,
                    m,
                    v,
                })
            }
            Some(_) => return Err(Error::Parse("`optimizer` must be a table".into())),
        };
        Ok(Self {
            arch,
            params,
            seed,
            iterations_trained,
            optimizer,
        })
    }
}

fn ensure_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteParameter { index }),
        None => Ok(()),
    }
}

fn get_int(t: &Table, key: &str) -> Result<i64> {
    t.get(key)
        .ok_or_else(|| Error::Parse(format!("missing `{key}`")))?
        .as_integer()
        .ok_or_else(|| Error::Parse(format!("`{key}` must be an integer")))
}

fn get_count(t: &Table, key: &str) -> Result<usize> {
    let v = get_int(t, key)?;
    usize::try_from(v).map_err(|_| Error::Parse(format!("`{key}` must be non-negative")))
}

fn get_floats(t: &Table, key: &str) -> Result<Vec<f64>> {
    t.get(key)
        .ok_or_else(|| Error::Parse(format!("missing `{key}`")))?
        .as_array()
        .ok_or_else(|| Error::Parse(format!("`{key}` must be an array")))?
        .iter()
        .map(|v| match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(Error::Parse(format!("`{key}` must contain numbers"))),
        })
        .collect()
}

fn parse_arch(t: &Table) -> Result<NetArchitecture> {
    for key in t.keys() {
        if !matches!(
            key.as_str(),
            "input_dim" | "hidden" | "width" | "activation" | "n_y" | "q"
        ) {
            return Err(Error::Parse(format!("unknown key `arch.{key}`")));
        }
    }
    let activation = t
        .get("activation")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse("missing `arch.activation`".into()))
        .and_then(Activation::parse)?;
    NetArchitecture::with_layers(
        get_count(t, "input_dim")?,
        get_count(t, "n_y")?,
        get_count(t, "q")?,
        get_count(t, "hidden")?,
        get_count(t, "width")?,
        activation,
    )
    .map_err(|e| Error::ShapeMismatch(e.to_string()))
}
