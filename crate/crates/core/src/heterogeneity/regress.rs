use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{check_full_rank, cluster_covariance, least_squares, normal_p_value, stars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    PanelFe,
    PooledOls,
    Logit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitSummary {
    pub r2: Option<f64>,
    pub r2_adj: Option<f64>,
    pub r2_within: Option<f64>,
    pub r2_between: Option<f64>,
    pub r2_overall: Option<f64>,
    pub pseudo_r2: Option<f64>,
    pub log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub model: Model,
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    #[serde(skip)]
    pub cov: DMatrix<f64>,
    pub se: Vec<f64>,
    pub clusters: usize,
    pub nobs: usize,
    pub summary: FitSummary,
    /// Entities with a single observation removed before fitting.
    pub dropped_singletons: usize,
    pub iterations: Option<usize>,
    pub warnings: Vec<String>,
}

impl RegressionFit {
    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coef(&self, term: &str) -> Option<f64> {
        self.index(term).map(|j| self.beta[j])
    }

    pub fn se_of(&self, term: &str) -> Option<f64> {
        self.index(term).map(|j| self.se[j])
    }

    pub fn t(&self, j: usize) -> f64 {
        self.beta[j] / self.se[j]
    }

    pub fn p(&self, j: usize) -> f64 {
        normal_p_value(self.t(j))
    }

    fn new(model: Model, terms: Vec<String>, beta: Vec<f64>, cov: DMatrix<f64>, clusters: usize, nobs: usize) -> Self {
        let se = (0..beta.len()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
        RegressionFit {
            model,
            terms,
            beta,
            cov,
            se,
            clusters,
            nobs,
            summary: FitSummary::default(),
            dropped_singletons: 0,
            iterations: None,
            warnings: Vec::new(),
        }
    }
}

/// Dense group labels `0..G` in order of first appearance.
fn relabel(groups: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let labels = groups
        .iter()
        .map(|g| {
            let n = map.len();
            *map.entry(*g).or_insert(n)
        })
        .collect();
    (labels, map.len())
}

pub const FE_TOLERANCE: f64 = 1e-10;
const FE_MAX_SWEEPS: usize = 100_000;

/// Removes entity and time means from `v` by alternating projections until
/// the largest mean removed in a sweep is below `FE_TOLERANCE`.
pub fn demean_two_way(v: &mut [f64], entity: &[usize], n_entity: usize, time: &[usize], n_time: usize) -> Result<usize> {
    let mut ent_n = vec![0usize; n_entity];
    let mut time_n = vec![0usize; n_time];
    for i in 0..v.len() {
        ent_n[entity[i]] += 1;
        time_n[time[i]] += 1;
    }
    let mut sums_e = vec![0.0; n_entity];
    let mut sums_t = vec![0.0; n_time];
    for sweep in 1..=FE_MAX_SWEEPS {
        let mut largest = 0.0f64;
        for (groups, sums, counts) in [(entity, &mut sums_e, &ent_n), (time, &mut sums_t, &time_n)] {
            sums.iter_mut().for_each(|s| *s = 0.0);
            for (x, g) in v.iter().zip(groups) {
                sums[*g] += x;
            }
            for (s, n) in sums.iter_mut().zip(counts.iter()) {
                *s /= (*n).max(1) as f64;
                largest = largest.max(s.abs());
            }
            for (x, g) in v.iter_mut().zip(groups) {
                *x -= sums[*g];
            }
        }
        if largest < FE_TOLERANCE {
            return Ok(sweep);
        }
    }
    Err(Error::numerical("fixed-effect demeaning did not converge"))
}

fn corr2(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab * sab / (saa * sbb))
}

/// `1 - SSR/TSS` of `y` around its mean against `xb` shifted to the same
/// mean; negative when the slope fits worse than the mean.
fn r2_centered(y: &[f64], xb: &[f64]) -> Option<f64> {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mx = xb.iter().sum::<f64>() / n;
    let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ssr: f64 = y.iter().zip(xb).map(|(v, f)| (v - my - (f - mx)).powi(2)).sum();
    (tss > 0.0).then(|| 1.0 - ssr / tss)
}

/// Two-way within estimator with entity and time effects, clustered by
/// `cluster`. Columns of `x` carry only the regressors of interest.
pub fn fit_two_way_fe(
    y: &[f64],
    x: &DMatrix<f64>,
    names: &[String],
    entity: &[usize],
    time: &[usize],
    cluster: &[usize],
) -> Result<RegressionFit> {
    let n0 = y.len();
    if x.nrows() != n0 || entity.len() != n0 || time.len() != n0 || cluster.len() != n0 {
        return Err(Error::validation("panel", "column lengths differ"));
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for e in entity {
        *counts.entry(*e).or_default() += 1;
    }
    let keep: Vec<usize> = (0..n0).filter(|&i| counts[&entity[i]] >= 2).collect();
    let dropped_singletons = counts.values().filter(|&&c| c < 2).count();
    let n = keep.len();
    let (ent, n_ent) = relabel(&keep.iter().map(|&i| entity[i]).collect::<Vec<_>>());
    let (tim, n_tim) = relabel(&keep.iter().map(|&i| time[i]).collect::<Vec<_>>());
    let k = x.ncols();
    if n <= k {
        return Err(Error::numerical(format!("{n} observations for {k} regressors after dropping singletons")));
    }
    let raw_y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    let mut yd = raw_y.clone();
    demean_two_way(&mut yd, &ent, n_ent, &tim, n_tim)?;
    let mut xd = DMatrix::<f64>::zeros(n, k);
    let mut raw_x = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let mut col: Vec<f64> = keep.iter().map(|&i| x[(i, j)]).collect();
        for (r, v) in col.iter().enumerate() {
            raw_x[(r, j)] = *v;
        }
        demean_two_way(&mut col, &ent, n_ent, &tim, n_tim)?;
        for (r, v) in col.into_iter().enumerate() {
            xd[(r, j)] = v;
        }
    }
    check_full_rank(&xd, names)?;
    let ls = least_squares(&xd, &DVector::from_vec(yd.clone()), names)?;
    let clusters: Vec<usize> = keep.iter().map(|&i| cluster[i]).collect();
    let (cov, g) = cluster_covariance(&xd, &ls.residuals, &ls.xtx_inv, &clusters)?;
    let beta: Vec<f64> = ls.beta.iter().copied().collect();
    let mut fit = RegressionFit::new(Model::PanelFe, names.to_vec(), beta, cov, g, n);
    fit.dropped_singletons = dropped_singletons;

    let xb_raw: Vec<f64> = (&raw_x * &ls.beta).iter().copied().collect();
    let fitted_d: Vec<f64> = ls.fitted.iter().copied().collect();
    // Entity means for the between fit.
    let mut ey = vec![0.0; n_ent];
    let mut ex = vec![0.0; n_ent];
    let mut en = vec![0.0; n_ent];
    for r in 0..n {
        ey[ent[r]] += raw_y[r];
        ex[ent[r]] += xb_raw[r];
        en[ent[r]] += 1.0;
    }
    for e in 0..n_ent {
        ey[e] /= en[e];
        ex[e] /= en[e];
    }
    fit.summary = FitSummary {
        r2_within: Some(corr2(&fitted_d, &yd).unwrap_or(0.0)),
        r2_between: r2_centered(&ey, &ex),
        r2_overall: r2_centered(&raw_y, &xb_raw),
        ..FitSummary::default()
    };
    Ok(fit)
}

/// OLS of `y` on the given columns with clustered errors.
pub fn fit_ols_clustered(y: &[f64], x: &DMatrix<f64>, names: &[String], cluster: &[usize]) -> Result<RegressionFit> {
    let n = y.len();
    let k = x.ncols();
    let yv = DVector::from_column_slice(y);
    let ls = least_squares(x, &yv, names)?;
    let (cov, g) = cluster_covariance(x, &ls.residuals, &ls.xtx_inv, cluster)?;
    let mut fit = RegressionFit::new(Model::PooledOls, names.to_vec(), ls.beta.iter().copied().collect(), cov, g, n);
    let my = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ssr = ls.residuals.norm_squared();
    let (r2, r2_adj) = if tss > 0.0 {
        let r2 = 1.0 - ssr / tss;
        (r2, 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k as f64))
    } else {
        (0.0, 0.0)
    };
    fit.summary = FitSummary { r2: Some(r2), r2_adj: Some(r2_adj), ..FitSummary::default() };
    Ok(fit)
}

/// A trader whose exposure changes sign, or moves to or from exactly zero.
pub fn detect_flips(pre: f64, post: f64) -> bool {
    (pre > 0.0 && post < 0.0) || (pre < 0.0 && post > 0.0) || ((pre == 0.0) != (post == 0.0))
}

pub const LOGIT_SCORE_TOLERANCE: f64 = 1e-8;
pub const LOGIT_MAX_ITER: usize = 100;
pub const SEPARATION_BOUND: f64 = 30.0;
pub const NEAR_SEPARATION_WARNING: f64 = 10.0;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(y: &[f64], eta: &[f64]) -> f64 {
    // log p = -log(1 + e^-eta), log(1-p) = -log(1 + e^eta), computed stably.
    let softplus = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    y.iter().zip(eta).map(|(yi, e)| -yi * softplus(-e) - (1.0 - yi) * softplus(*e)).sum()
}

/// Binomial-logit MLE by Newton/IRLS, with a cluster sandwich covariance.
pub fn fit_logit_raw(y: &[f64], x: &DMatrix<f64>, names: &[String], cluster: &[usize]) -> Result<RegressionFit> {
    let n = y.len();
    let k = x.ncols();
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::validation("outcome", "logit outcome must be 0 or 1"));
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::numerical("no variation in outcome"));
    }
    check_full_rank(x, names)?;
    let mut beta = DVector::<f64>::zeros(k);
    let mut iterations = 0;
    let mut converged = false;
    let mut hess_inv = DMatrix::<f64>::zeros(k, k);
    for it in 0..=LOGIT_MAX_ITER {
        let eta = x * &beta;
        let p: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let resid = DVector::from_iterator(n, y.iter().zip(&p).map(|(yi, pi)| yi - pi));
        let score = x.transpose() * &resid;
        let mut info = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let w = p[i] * (1.0 - p[i]);
            let row = x.row(i);
            info += row.transpose() * row * w;
        }
        let chol = info.clone().cholesky().ok_or_else(|| Error::numerical("separation"))?;
        hess_inv = chol.inverse();
        iterations = it;
        if score.amax() < LOGIT_SCORE_TOLERANCE {
            converged = true;
            break;
        }
        if it == LOGIT_MAX_ITER {
            break;
        }
        beta += chol.solve(&score);
        if beta.amax() > SEPARATION_BOUND {
            return Err(Error::numerical("separation"));
        }
    }
    let eta: Vec<f64> = (x * &beta).iter().copied().collect();
    let p: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
    let resid = DVector::from_iterator(n, y.iter().zip(&p).map(|(yi, pi)| yi - pi));
    let (cov, g) = cluster_covariance(x, &resid, &hess_inv, cluster)?;
    let mut fit = RegressionFit::new(Model::Logit, names.to_vec(), beta.iter().copied().collect(), cov, g, n);
    let ll = log_likelihood(y, &eta);
    let pbar = ones as f64 / n as f64;
    let ll0 = n as f64 * (pbar * pbar.ln() + (1.0 - pbar) * (1.0 - pbar).ln());
    fit.summary = FitSummary { pseudo_r2: Some(1.0 - ll / ll0), log_likelihood: Some(ll), ..FitSummary::default() };
    fit.iterations = Some(iterations);
    if !converged {
        fit.warnings.push(format!("logit did not converge in {LOGIT_MAX_ITER} iterations"));
    }
    for (name, b) in names.iter().zip(&fit.beta) {
        if b.abs() > NEAR_SEPARATION_WARNING {
            fit.warnings.push(format!("near-separation: |{name}| = {:.2}", b.abs()));
        }
    }
    Ok(fit)
}

/// CSV: `term,estimate,se,t,p,stars`.
pub fn write_regression_csv<W: Write>(sink: W, fit: &RegressionFit) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["term", "estimate", "se", "t", "p", "stars"])?;
    for (j, term) in fit.terms.iter().enumerate() {
        let p = fit.p(j);
        w.write_record([
            term.as_str(),
            &fit.beta[j].to_string(),
            &fit.se[j].to_string(),
            &fit.t(j).to_string(),
            &p.to_string(),
            stars(p),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<regression csv>", e))?;
    Ok(())
}

/// Side-by-side coefficient table: estimates with stars, standard errors in
/// parentheses, then fit statistics.
pub fn render_regression_table(columns: &[(String, &RegressionFit)], terms: &[String]) -> String {
    let width = 16;
    let mut out = format!("{:<28}", "");
    for (title, _) in columns {
        out.push_str(&format!("{:>width$}", title));
    }
    out.push('\n');
    for term in terms {
        if columns.iter().all(|(_, f)| f.index(term).is_none()) {
            continue;
        }
        let mut est = format!("{:<28}", term);
        let mut se = format!("{:<28}", "");
        for (_, f) in columns {
            match f.index(term) {
                Some(j) => {
                    est.push_str(&format!("{:>width$}", format!("{:.4}{}", f.beta[j], stars(f.p(j)))));
                    se.push_str(&format!("{:>width$}", format!("({:.4})", f.se[j])));
                }
                None => {
                    est.push_str(&format!("{:>width$}", ""));
                    se.push_str(&format!("{:>width$}", ""));
                }
            }
        }
        out.push_str(&est);
        out.push('\n');
        out.push_str(&se);
        out.push('\n');
    }
    let stat_rows: [(&str, fn(&RegressionFit) -> Option<String>); 8] = [
        ("Observations", |f| Some(f.nobs.to_string())),
        ("Clusters", |f| Some(f.clusters.to_string())),
        ("R2", |f| f.summary.r2.map(|v| format!("{v:.4}"))),
        ("Adj. R2", |f| f.summary.r2_adj.map(|v| format!("{v:.4}"))),
        ("Within R2", |f| f.summary.r2_within.map(|v| format!("{v:.4}"))),
        ("Between R2", |f| f.summary.r2_between.map(|v| format!("{v:.4}"))),
        ("Overall R2", |f| f.summary.r2_overall.map(|v| format!("{v:.4}"))),
        ("Pseudo R2", |f| f.summary.pseudo_r2.map(|v| format!("{v:.4}"))),
    ];
    for (label, get) in stat_rows {
        let cells: Vec<Option<String>> = columns.iter().map(|(_, f)| get(f)).collect();
        if cells.iter().all(Option::is_none) {
            continue;
        }
        out.push_str(&format!("{:<28}", label));
        for c in cells {
            out.push_str(&format!("{:>width$}", c.unwrap_or_default()));
        }
        out.push('\n');
    }
    out.push_str("* p<0.1, ** p<0.05, *** p<0.01\n");
    out
}
