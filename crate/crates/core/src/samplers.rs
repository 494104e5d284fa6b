//! Joint laws on `(X, Y)`: marginal draws of `X` and conditional draws of
//! `Y | X = x`.

use std::io::Read;

use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

/// A source of condition draws and conditional draws.
///
/// Implementations are immutable; all randomness comes from the caller's
/// [`StreamRng`], so a draw is fully determined by the substream key.
pub trait ConditionalSampler: Send + Sync {
    /// `(n_x, n_y)`.
    fn dims(&self) -> (usize, usize);

    fn sample_x(&self, rng: &mut StreamRng, count: usize) -> Vec<Vec<f64>>;

    /// `count` i.i.d. draws from the conditional law at `x`.
    fn sample_y_given_x(&self, rng: &mut StreamRng, x: &[f64], count: usize) -> Result<Vec<Vec<f64>>>;
}

fn standard_normal_points(rng: &mut StreamRng, n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..n).map(|_| rng.standard_normal()).collect())
        .collect()
}

/// `X ~ N(0, I_n)`, `Y = X + Z` with `Z ~ N(0, I_n)` independent, so that
/// `Y | X = x ~ N(x, I_n)`.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveGaussian {
    n: usize,
}

pub fn additive_gaussian(n: usize) -> Result<AdditiveGaussian> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            field: "n",
            reason: "dimension must be >= 1".into(),
        });
    }
    Ok(AdditiveGaussian { n })
}

impl ConditionalSampler for AdditiveGaussian {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn sample_x(&self, rng: &mut StreamRng, count: usize) -> Vec<Vec<f64>> {
        standard_normal_points(rng, self.n, count)
    }

    fn sample_y_given_x(&self, rng: &mut StreamRng, x: &[f64], count: usize) -> Result<Vec<Vec<f64>>> {
        check_dim(self.n, x.len())?;
        Ok((0..count)
            .map(|_| x.iter().map(|xi| xi + rng.standard_normal()).collect())
            .collect())
    }
}

/// `X ~ N(0, I_n)`, `Y = X ⊙ Z` componentwise with `Z ~ N(0, I_n)`, so that
/// component `k` of `Y | X = x` is `N(0, x_k²)`.
#[derive(Debug, Clone, Copy)]
pub struct MultiplicativeGaussian {
    n: usize,
}

pub fn multiplicative_gaussian(n: usize) -> Result<MultiplicativeGaussian> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            field: "n",
            reason: "dimension must be >= 1".into(),
        });
    }
    Ok(MultiplicativeGaussian { n })
}

impl ConditionalSampler for MultiplicativeGaussian {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn sample_x(&self, rng: &mut StreamRng, count: usize) -> Vec<Vec<f64>> {
        standard_normal_points(rng, self.n, count)
    }

    fn sample_y_given_x(&self, rng: &mut StreamRng, x: &[f64], count: usize) -> Result<Vec<Vec<f64>>> {
        check_dim(self.n, x.len())?;
        Ok((0..count)
            .map(|_| x.iter().map(|xi| xi * rng.standard_normal()).collect())
            .collect())
    }
}

/// Resampling sampler over a recorded dataset of `(x, y)` pairs.
///
/// `sample_x` picks stored conditions uniformly; `sample_y_given_x` picks
/// uniformly among the `y`s of the `knn_k` stored conditions nearest to the
/// query (Euclidean, ties broken by lowest index).
#[derive(Debug, Clone)]
pub struct EmpiricalJoint {
    n_x: usize,
    n_y: usize,
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    knn_k: usize,
}

pub fn empirical_joint(dataset: Vec<(Vec<f64>, Vec<f64>)>, knn_k: usize) -> Result<EmpiricalJoint> {
    let (first_x, first_y) = match dataset.first() {
        Some((x, y)) => (x.len(), y.len()),
        None => return Err(Error::EmptyInput("dataset has no rows")),
    };
    if first_x == 0 || first_y == 0 {
        return Err(Error::InvalidParameter {
            field: "dataset",
            reason: "x and y need at least one column each".into(),
        });
    }
    if knn_k == 0 || knn_k > dataset.len() {
        return Err(Error::InvalidParameter {
            field: "knn_k",
            reason: format!("must be in 1..={}, got {knn_k}", dataset.len()),
        });
    }
    let mut xs = Vec::with_capacity(dataset.len());
    let mut ys = Vec::with_capacity(dataset.len());
    for (x, y) in dataset {
        check_dim(first_x, x.len())?;
        check_dim(first_y, y.len())?;
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "dataset",
                reason: "values must be finite".into(),
            });
        }
        xs.push(x);
        ys.push(y);
    }
    Ok(EmpiricalJoint {
        n_x: first_x,
        n_y: first_y,
        xs,
        ys,
        knn_k,
    })
}

impl EmpiricalJoint {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Reads a delimited text dataset with a header row. Columns whose names
    /// start with `x` are conditions, columns starting with `y` are
    /// responses, e.g. `x_1,x_2,y_1`.
    pub fn from_csv<R: Read>(reader: R, knn_k: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let mut x_cols = Vec::new();
        let mut y_cols = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            match h.chars().next().map(|c| c.to_ascii_lowercase()) {
                Some('x') => x_cols.push(i),
                Some('y') => y_cols.push(i),
                _ => return Err(Error::Parse(format!("column `{h}` is neither an x_ nor a y_ column"))),
            }
        }
        if x_cols.is_empty() || y_cols.is_empty() {
            return Err(Error::Parse(
                "header needs at least one x column and one y column".into(),
            ));
        }
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let parse = |cols: &[usize]| -> Result<Vec<f64>> {
                cols.iter()
                    .map(|&c| {
                        let field = record.get(c).unwrap_or("");
                        field
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("row {}: bad number `{field}`", line + 2)))
                    })
                    .collect()
            };
            rows.push((parse(&x_cols)?, parse(&y_cols)?));
        }
        empirical_joint(rows, knn_k)
    }

    /// Indices of the `knn_k` stored conditions nearest to `x`.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .xs
            .iter()
            .enumerate()
            .map(|(i, xi)| (crate::kernel::sq_dist(xi, x), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.truncate(self.knn_k);
        order.into_iter().map(|(_, i)| i).collect()
    }
}

impl ConditionalSampler for EmpiricalJoint {
    fn dims(&self) -> (usize, usize) {
        (self.n_x, self.n_y)
    }

    fn sample_x(&self, rng: &mut StreamRng, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.xs[rng.index(self.xs.len())].clone()).collect()
    }

    fn sample_y_given_x(&self, rng: &mut StreamRng, x: &[f64], count: usize) -> Result<Vec<Vec<f64>>> {
        check_dim(self.n_x, x.len())?;
        let nbrs = self.neighbors(x);
        Ok((0..count)
            .map(|_| self.ys[nbrs[rng.index(nbrs.len())]].clone())
            .collect())
    }
}
