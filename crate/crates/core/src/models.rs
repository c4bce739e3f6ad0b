//! Evaluation learners: k-nearest-neighbour classification and ordinary
//! least squares regression.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {n} training points")]
    KTooLarge { k: usize, n: usize },
    #[error("expected {expected} features per row, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0} rows but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in the input")]
    NonFinite,
    #[error("least-squares solve failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn check_dims(rows: &[Vec<f64>], d: usize) -> Result<()> {
    match rows.iter().find(|r| r.len() != d) {
        Some(r) => Err(ModelError::DimensionMismatch {
            expected: d,
            found: r.len(),
        }),
        None => Ok(()),
    }
}

/// Unweighted Euclidean KNN classifier.
#[derive(Debug, Clone)]
pub struct KnnModel {
    points: Vec<Vec<f64>>,
    labels: Vec<String>,
    k: usize,
    dim: usize,
}

impl KnnModel {
    pub const DEFAULT_K: usize = 3;

    pub fn new(points: Vec<Vec<f64>>, labels: Vec<String>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(ModelError::Empty);
        }
        if points.len() != labels.len() {
            return Err(ModelError::LengthMismatch(points.len(), labels.len()));
        }
        if k == 0 {
            return Err(ModelError::ZeroK);
        }
        if k > points.len() {
            return Err(ModelError::KTooLarge { k, n: points.len() });
        }
        let dim = points[0].len();
        check_dims(&points, dim)?;
        Ok(KnnModel {
            points,
            labels,
            k,
            dim,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Predicts one label per query, in query order.
    ///
    /// Neighbours are the `k` smallest by (distance, training index). The
    /// majority label wins; vote ties go to the class with the smaller mean
    /// neighbour distance, then to the lexicographically smaller label.
    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<Vec<String>> {
        check_dims(queries, self.dim)?;
        Ok(queries.par_iter().map(|q| self.predict_one(q)).collect())
    }

    fn predict_one(&self, query: &[f64]) -> String {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (euclidean(p, query), i))
            .collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_key);
            dist.truncate(self.k);
        }
        let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for &(d, i) in &dist {
            let e = votes.entry(self.labels[i].as_str()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        // BTreeMap iterates labels in ascending order, so `min_by` keeps the
        // smallest label among exact ties.
        votes
            .into_iter()
            .min_by(|(_, (ca, sa)), (_, (cb, sb))| {
                cb.cmp(ca).then_with(|| {
                    let ma = sa / *ca as f64;
                    let mb = sb / *cb as f64;
                    ma.partial_cmp(&mb).unwrap_or(Ordering::Equal)
                })
            })
            .map(|(label, _)| label.to_string())
            .expect("k >= 1 neighbours")
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Least-squares fit of `y ≈ Xβ + b`.
///
/// Columns and target are centred, the centred system is solved through a
/// thin SVD, and the intercept is recovered from the means. Rank-deficient
/// systems get the minimum-norm `β` (the intercept is not penalised), so a
/// constant column yields `β = 0` and `b = mean(y)`.
pub fn ols_fit(x: &[Vec<f64>], y: &[f64]) -> Result<OlsModel> {
    let n = x.len();
    if n == 0 {
        return Err(ModelError::Empty);
    }
    if y.len() != n {
        return Err(ModelError::LengthMismatch(n, y.len()));
    }
    let d = x[0].len();
    check_dims(x, d)?;
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }

    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let x_mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    if d == 0 {
        return Ok(OlsModel {
            coefficients: Vec::new(),
            intercept: y_mean,
        });
    }

    let a = DMatrix::from_fn(n, d, |i, j| x[i][j] - x_mean[j]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = f64::EPSILON * n.max(d) as f64 * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < d {
        warn!("design matrix has rank {rank} < {d}; using the minimum-norm solution");
    }
    let beta = if sigma_max == 0.0 {
        DVector::zeros(d)
    } else {
        svd.solve(&b, tol)
            .map_err(|e| ModelError::Solver(e.to_string()))?
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(ModelError::Solver("non-finite coefficients".into()));
    }
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    Ok(OlsModel {
        coefficients,
        intercept,
    })
}

impl OlsModel {
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dims(x, self.coefficients.len())?;
        Ok(x.iter()
            .map(|row| {
                row.iter()
                    .zip(&self.coefficients)
                    .map(|(v, c)| v * c)
                    .sum::<f64>()
                    + self.intercept
            })
            .collect())
    }
}
