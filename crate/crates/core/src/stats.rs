//! Shared numerical pieces: compensated sums, least squares, and
//! heteroskedasticity/cluster/HAC-robust covariance estimators.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Neumaier-compensated sum; the result is insensitive to input order at
/// the 1e-12 level for the sizes used here.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(compensated_sum(values.iter().copied()) / values.len() as f64)
    }
}

/// Unbiased sample variance (denominator n - 1).
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    Some(compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() - 1) as f64)
}

/// Two-sided p-value under a standard normal reference.
pub fn normal_p_value(t: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    erfc(t.abs() / std::f64::consts::SQRT_2)
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Rejects a design whose column `j` lies in the span of columns `0..j`,
/// naming the first such column.
pub fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut r = col;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r -= q * proj;
            }
        }
        let norm = r.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
            return Err(Error::numerical(format!("collinear regressor dropped: {name}")));
        }
        basis.push(r / norm);
    }
    Ok(())
}

/// Least-squares pieces shared by every linear estimator.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
}

pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    if x.nrows() != y.len() {
        return Err(Error::validation("design", "row count does not match outcome length"));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::numerical(format!(
            "{} observations for {} regressors",
            x.nrows(),
            x.ncols()
        )));
    }
    check_full_rank(x, names)?;
    let xt = x.transpose();
    let chol = (&xt * x)
        .cholesky()
        .ok_or_else(|| Error::numerical("design matrix is not positive definite"))?;
    let beta = chol.solve(&(&xt * y));
    let xtx_inv = chol.inverse();
    let fitted = x * &beta;
    let residuals = y - &fitted;
    Ok(LeastSquares { beta, xtx_inv, residuals, fitted })
}

/// Heteroskedasticity-robust (HC0) sandwich.
pub fn robust_covariance(x: &DMatrix<f64>, residuals: &DVector<f64>, xtx_inv: &DMatrix<f64>) -> DMatrix<f64> {
    hac_covariance(x, residuals, xtx_inv, 0)
}

/// Newey-West sandwich with Bartlett weights `1 - l/(L+1)`; `lag = 0`
/// reduces to HC0.
pub fn hac_covariance(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
    lag: usize,
) -> DMatrix<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    // Scores u_t = x_t e_t.
    let mut scores = DMatrix::<f64>::zeros(n, p);
    for t in 0..n {
        for j in 0..p {
            scores[(t, j)] = x[(t, j)] * residuals[t];
        }
    }
    let mut meat = scores.transpose() * &scores;
    for l in 1..=lag.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let lead = scores.rows(l, n - l);
        let lagged = scores.rows(0, n - l);
        let gamma = lead.transpose() * lagged;
        meat += (&gamma + gamma.transpose()) * w;
    }
    let cov = xtx_inv * meat * xtx_inv;
    symmetrize(cov)
}

/// Plug-in lag `floor(4 (T/100)^(2/9))`.
pub fn newey_west_lag(nobs: usize) -> usize {
    (4.0 * (nobs as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Cluster-robust sandwich with the finite-sample factor
/// `G/(G-1) * (N-1)/(N-K)`.
pub fn cluster_covariance(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
    clusters: &[usize],
) -> Result<(DMatrix<f64>, usize)> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut sums: HashMap<usize, DVector<f64>> = HashMap::new();
    for i in 0..n {
        let s = sums.entry(clusters[i]).or_insert_with(|| DVector::zeros(p));
        for j in 0..p {
            s[j] += x[(i, j)] * residuals[i];
        }
    }
    let g = sums.len();
    if g < 2 {
        return Err(Error::numerical("clustered covariance requires ≥2 clusters"));
    }
    // Accumulate in cluster-id order so results do not depend on hashing.
    let mut keys: Vec<_> = sums.keys().copied().collect();
    keys.sort_unstable();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for k in keys {
        let s = &sums[&k];
        meat += s * s.transpose();
    }
    let factor = cluster_factor(g, n, p);
    let cov = xtx_inv * meat * xtx_inv * factor;
    Ok((symmetrize(cov), g))
}

pub fn cluster_factor(clusters: usize, nobs: usize, k: usize) -> f64 {
    let (g, n, k) = (clusters as f64, nobs as f64, k as f64);
    g / (g - 1.0) * (n - 1.0) / (n - k)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
