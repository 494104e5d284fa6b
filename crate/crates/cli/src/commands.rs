use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use condquant::net::FORMAT_VERSION;
use condquant::oracle::{quantile_quantizer, QuantileFunction};
use condquant::trainer::{self, write_timing_log, write_train_log, FINAL_CHECKPOINT};
use condquant::{fmt17, QuantizerNet};

use crate::error::CliError;
use crate::spec::{resolve_seed, ExperimentSpec};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TIMING_LOG: &str = "timing.csv";
pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Manifest<'a> {
    manifest_format_version: u32,
    code_version: String,
    checkpoint_format_version: i64,
    name: &'a str,
    seed: u64,
    spec: &'a ExperimentSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_sha256: Option<String>,
    checkpoint: &'static str,
    train_log: &'static str,
    timing_log: &'static str,
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read dataset {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("cannot write {}: {e}", path.display()))
}

/// CSV destination: a file when given, stdout otherwise.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => Ok(Box::new(create_file(p)?)),
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub struct TrainArgs<'a> {
    pub spec_path: &'a Path,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub env_seed: Option<String>,
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let spec = ExperimentSpec::from_file(args.spec_path)?;
    let seed = resolve_seed(args.seed, spec.seed, args.env_seed.as_deref())?;
    let base_dir = args.spec_path.parent().unwrap_or(Path::new("."));
    let resolved = spec.resolve(seed, base_dir)?;

    let out_dir: PathBuf = match (args.out, &spec.out_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => Path::new("runs").join(&spec.name),
    };
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;

    let (_, report) = trainer::train(
        &resolved.config,
        resolved.arch,
        resolved.sampler.as_ref(),
        Some(&out_dir),
    )?;

    let log_path = out_dir.join(TRAIN_LOG);
    let mut w = create_file(&log_path)?;
    write_train_log(&report, &mut w)
        .and_then(|()| w.flush())
        .map_err(io_at(&log_path))?;
    let timing_path = out_dir.join(TIMING_LOG);
    let mut w = create_file(&timing_path)?;
    write_timing_log(&report, &mut w)
        .and_then(|()| w.flush())
        .map_err(io_at(&timing_path))?;

    // the output location is not part of the experiment
    let echoed = ExperimentSpec {
        out_dir: None,
        ..resolved.spec.clone()
    };
    let manifest = Manifest {
        manifest_format_version: MANIFEST_FORMAT_VERSION,
        code_version: format!("condquant {}", env!("CARGO_PKG_VERSION")),
        checkpoint_format_version: FORMAT_VERSION,
        name: &spec.name,
        seed,
        spec: &echoed,
        dataset_sha256: spec.dataset_path(base_dir).map(|p| sha256_file(&p)).transpose()?,
        checkpoint: FINAL_CHECKPOINT,
        train_log: TRAIN_LOG,
        timing_log: TIMING_LOG,
    };
    let manifest_path = out_dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_at(&manifest_path))?;

    let last = report.trace.last().expect("at least one iteration is logged");
    println!(
        "{}: {} iterations, seed {seed}, final batch loss {}, outputs in {}",
        spec.name,
        resolved.config.max_iterations,
        fmt17(last.loss),
        out_dir.display()
    );
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<QuantizerNet, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read checkpoint {}: {e}", path.display())))?;
    QuantizerNet::load(&text).map_err(|e| CliError::Io(format!("cannot load checkpoint {}: {e}", path.display())))
}

fn parse_vector(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| CliError::Invalid(format!("--x: cannot parse {t:?} as a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Invalid(format!("--x: {t:?} is not finite")))
            }
        })
        .collect()
}

pub fn quantize(checkpoint: &Path, xs: &[String], out: Option<&Path>) -> Result<(), CliError> {
    let net = load_checkpoint(checkpoint)?;
    let arch = *net.architecture();
    let xs = xs.iter().map(|s| parse_vector(s)).collect::<Result<Vec<_>, _>>()?;
    for x in &xs {
        if x.len() != arch.input_dim() {
            return Err(CliError::Invalid(format!(
                "--x has {} values but the model expects {}",
                x.len(),
                arch.input_dim()
            )));
        }
    }
    let mut w = output(out)?;
    let mut header: Vec<String> = (1..=arch.input_dim()).map(|i| format!("x_{i}")).collect();
    header.push("q_index".into());
    header.extend((1..=arch.n_y()).map(|i| format!("y_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for x in &xs {
        let xcols: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
        for (q, point) in net.forward(x)?.iter().enumerate() {
            let ycols: Vec<String> = point.iter().map(|v| fmt17(*v)).collect();
            writeln!(w, "{},{q},{}", xcols.join(","), ycols.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evenly spaced values from `min:max:count`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Invalid(format!("--grid expects min:max:count, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() || lo > hi || n == 0 {
        return Err(CliError::Invalid(format!(
            "--grid {s:?}: need finite min <= max and count >= 1"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Law {
    Normal,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Relation {
    /// `Y = x + Z`
    Additive,
    /// `Y = x · Z`
    Multiplicative,
}

fn build_law(law: Law, params: Option<&str>) -> Result<QuantileFunction, CliError> {
    let values = match params {
        Some(p) => parse_vector(p).map_err(|e| CliError::Invalid(e.to_string().replace("--x", "--law-params")))?,
        None => vec![0.0, 1.0],
    };
    let [u, v] = values.as_slice() else {
        return Err(CliError::Invalid(format!(
            "--law-params expects two values, got {}",
            values.len()
        )));
    };
    let qf = match law {
        Law::Normal => QuantileFunction::normal(*u, *v),
        Law::Uniform => QuantileFunction::uniform(*u, *v),
    };
    qf.map_err(|e| CliError::Invalid(format!("--law-params: {e}")))
}

pub struct EvalOracleArgs<'a> {
    pub checkpoint: &'a Path,
    pub law: Law,
    pub law_params: Option<&'a str>,
    pub grid: &'a str,
    pub relation: Relation,
    pub out: Option<&'a Path>,
}

/// Summary of an oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSummary {
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
}

pub fn eval_oracle(args: &EvalOracleArgs) -> Result<OracleSummary, CliError> {
    let net = load_checkpoint(args.checkpoint)?;
    let arch = *net.architecture();
    if arch.input_dim() != 1 || arch.n_y() != 1 {
        return Err(CliError::Invalid(format!(
            "eval-oracle needs a model with n_x = n_y = 1, this one has n_x = {}, n_y = {}",
            arch.input_dim(),
            arch.n_y()
        )));
    }
    let base = build_law(args.law, args.law_params)?;
    let grid = parse_grid(args.grid)?;
    let base_points = quantile_quantizer(&base, arch.q())?;

    let mut w = output(args.out)?;
    writeln!(w, "x,q_index,y_net,y_oracle,abs_err")?;
    let (mut max_err, mut sum_err, mut count) = (0.0f64, 0.0, 0usize);
    for &x in &grid {
        let mut y_net: Vec<f64> = net.forward_flat(&[x])?;
        y_net.sort_by(f64::total_cmp);
        let y_oracle = match args.relation {
            Relation::Additive => quantile_quantizer(&base.shifted(x), arch.q())?,
            Relation::Multiplicative => {
                let mut v: Vec<f64> = base_points.iter().map(|z| x * z).collect();
                v.sort_by(f64::total_cmp);
                v
            }
        };
        for (q, (yn, yo)) in y_net.iter().zip(&y_oracle).enumerate() {
            let err = (yn - yo).abs();
            max_err = max_err.max(err);
            sum_err += err;
            count += 1;
            writeln!(w, "{},{q},{},{},{}", fmt17(x), fmt17(*yn), fmt17(*yo), fmt17(err))?;
        }
    }
    w.flush()?;
    Ok(OracleSummary {
        max_abs_err: max_err,
        mean_abs_err: sum_err / count as f64,
    })
}

pub fn surface(checkpoint: &Path, grids: &[String], out: Option<&Path>) -> Result<(), CliError> {
    let net = load_checkpoint(checkpoint)?;
    let arch = *net.architecture();
    if arch.input_dim() != 2 {
        return Err(CliError::Invalid(format!(
            "surface needs a model with n_x = 2, this one has n_x = {}",
            arch.input_dim()
        )));
    }
    let [g1, g2] = grids else {
        return Err(CliError::Invalid(format!(
            "surface needs exactly two --grid ranges, got {}",
            grids.len()
        )));
    };
    let (g1, g2) = (parse_grid(g1)?, parse_grid(g2)?);
    let mut w = output(out)?;
    writeln!(w, "x_1,x_2,q_index,dim_index,value")?;
    for &x1 in &g1 {
        for &x2 in &g2 {
            let (s1, s2) = (fmt17(x1), fmt17(x2));
            for (q, point) in net.forward(&[x1, x2])?.iter().enumerate() {
                for (k, v) in point.iter().enumerate() {
                    writeln!(w, "{s1},{s2},{q},{k},{}", fmt17(*v))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("-1:1:3").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(parse_grid("0.5:2:1").unwrap(), vec![0.5]);
        let g = parse_grid("-1:1:21").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[20], 1.0);
        assert!((g[15] - 0.5).abs() < 1e-15);
        for bad in ["1:0:3", "0:1:0", "0:1", "a:1:2", "0:1:2:3", "0:inf:2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn vectors() {
        assert_eq!(parse_vector("1, -2.5").unwrap(), vec![1.0, -2.5]);
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("nan").is_err());
    }

    #[test]
    fn law_parameters() {
        assert!(build_law(Law::Normal, Some("0,-1")).is_err());
        assert!(build_law(Law::Uniform, Some("0")).is_err());
        assert_eq!(build_law(Law::Normal, None).unwrap().eval(0.5), 0.0);
    }
}
