//! Ordinary least squares with cluster-robust (sandwich) standard errors.
//!
//! Coefficients come from the normal equations; the covariance is the
//! CR1-scaled sandwich estimator
//!
//! ```text
//! V = c * (X'X)^-1 [ sum_g X_g' u_g u_g' X_g ] (X'X)^-1,
//! c = G/(G-1) * (n-1)/(n-k)
//! ```
//!
//! with `G` clusters, `n` rows, and `k` columns. Tests use a Student-t
//! reference with `G - 1` degrees of freedom.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::stats::StatsError;

/// One fitted coefficient with its cluster-robust inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

/// A fitted regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub clusters: usize,
    pub r_squared: f64,
}

impl RegressionResult {
    /// Look up a coefficient by name.
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Two-sided p-value for a t statistic with `df` degrees of freedom.
fn t_test_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1 by construction");
    2.0 * dist.cdf(-t.abs())
}

/// Fit `y ~ X` by least squares and attach cluster-robust standard errors,
/// clustering rows by `clusters[i]`. Cluster ids are arbitrary labels.
pub fn ols_cluster_robust(
    names: &[&str],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    clusters: &[usize],
) -> Result<RegressionResult, StatsError> {
    let n = x.nrows();
    let k = x.ncols();
    if names.len() != k {
        return Err(StatsError::BadData {
            detail: format!("{} names for {} columns", names.len(), k),
        });
    }
    if y.len() != n || clusters.len() != n {
        return Err(StatsError::BadData {
            detail: format!(
                "row mismatch: {} design rows, {} outcomes, {} cluster labels",
                n,
                y.len(),
                clusters.len()
            ),
        });
    }
    if n <= k {
        return Err(StatsError::InsufficientData {
            detail: format!("{n} rows cannot identify {k} coefficients with a residual df"),
        });
    }

    let xtx = x.transpose() * x;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| StatsError::RankDeficient {
            detail: "design matrix columns are linearly dependent".into(),
        })?;
    let beta = chol.solve(&(x.transpose() * y));
    let residuals = y - x * &beta;

    // Score sums per cluster: s_g = X_g' u_g.
    let mut scores: HashMap<usize, DVector<f64>> = HashMap::new();
    for (i, &g) in clusters.iter().enumerate() {
        let entry = scores
            .entry(g)
            .or_insert_with(|| DVector::zeros(k));
        for j in 0..k {
            entry[j] += x[(i, j)] * residuals[i];
        }
    }
    let g = scores.len();
    if g < 2 {
        return Err(StatsError::SingleCluster);
    }

    let mut meat = DMatrix::zeros(k, k);
    for s in scores.values() {
        meat += s * s.transpose();
    }
    let correction =
        (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let bread = chol.inverse();
    let cov = correction * &bread * meat * &bread;

    let df = g as f64 - 1.0;
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = beta[j];
            let se = cov[(j, j)].max(0.0).sqrt();
            let (t, p) = if se == 0.0 {
                if estimate == 0.0 {
                    (0.0, 1.0)
                } else {
                    (estimate.signum() * f64::INFINITY, 0.0)
                }
            } else {
                let t = estimate / se;
                (t, t_test_p(t, df))
            };
            Coefficient {
                name: name.to_string(),
                estimate,
                se,
                t,
                p,
            }
        })
        .collect();

    let y_mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let ssr: f64 = residuals.iter().map(|u| u * u).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    Ok(RegressionResult {
        coefficients,
        n,
        clusters: g,
        r_squared,
    })
}
