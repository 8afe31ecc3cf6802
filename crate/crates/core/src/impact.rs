//! Price-impact regressions on log-odds prices: Kyle's lambda and the
//! Glosten-Harris permanent/transitory split, with Newey-West errors.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::BinSeries;
use crate::stats::{hac_covariance, least_squares, newey_west_lag};

/// Prices are clamped into `[CLAMP, 1 - CLAMP]` before the transform.
pub const CLAMP: f64 = 1e-6;

/// `ln(p / (1 - p))` after clamping; `clamped` is incremented when the
/// clamp binds.
pub fn to_log_odds_counted(p: f64, clamped: &mut usize) -> f64 {
    let q = p.clamp(CLAMP, 1.0 - CLAMP);
    if q != p {
        *clamped += 1;
    }
    (q / (1.0 - q)).ln()
}

pub fn to_log_odds(p: f64) -> f64 {
    to_log_odds_counted(p, &mut 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogOddsPoint {
    pub k: i64,
    pub theta: f64,
    pub d_theta: Option<f64>,
    /// Net flow, millions of USDC.
    pub q: f64,
    pub d_q: Option<f64>,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsSeries {
    pub event: String,
    pub points: Vec<LogOddsPoint>,
    pub clamped: usize,
}

impl LogOddsSeries {
    /// Bins without a price are skipped; differences start at the second
    /// priced bin.
    pub fn from_bins(series: &BinSeries) -> Self {
        let mut clamped = 0;
        let mut points: Vec<LogOddsPoint> = Vec::with_capacity(series.bins.len());
        for b in &series.bins {
            let Some(p) = b.vwap else { continue };
            let theta = to_log_odds_counted(p, &mut clamped);
            let prev = points.last();
            points.push(LogOddsPoint {
                k: b.k,
                theta,
                d_theta: prev.map(|pp| theta - pp.theta),
                q: b.net_flow,
                d_q: prev.map(|pp| b.net_flow - pp.q),
                stale: b.stale,
            });
        }
        LogOddsSeries { event: series.event.clone(), points, clamped }
    }

    /// Builds directly from `(k, price, flow)` triples.
    pub fn from_prices(event: &str, rows: &[(i64, f64, f64)]) -> Self {
        let bins = rows
            .iter()
            .map(|&(k, p, q)| crate::series::Bin {
                k,
                vwap: Some(p),
                stale: false,
                volume_usdc: q.abs() * 1e6,
                buy_volume: q.max(0.0) * 1e6,
                sell_volume: (-q).max(0.0) * 1e6,
                net_flow: q,
                trade_count: 1,
            })
            .collect();
        LogOddsSeries::from_bins(&BinSeries { token: crate::ingest::Token::trump_yes(), event: event.into(), bins })
    }

    /// Multiplies every flow by `factor` (unit changes).
    pub fn rescale_flow(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.q *= factor;
            p.d_q = p.d_q.map(|d| d * factor);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Kyle,
    GlostenHarris,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Kyle => "kyle",
            Estimator::GlostenHarris => "glosten_harris",
        }
    }

    pub fn fit(self, points: &[LogOddsPoint]) -> Result<ImpactEstimate> {
        self.fit_with(points, HacLag::Auto)
    }

    pub fn fit_with(self, points: &[LogOddsPoint], lag: HacLag) -> Result<ImpactEstimate> {
        match self {
            Estimator::Kyle => fit_kyle_with(points, lag),
            Estimator::GlostenHarris => fit_glosten_harris_with(points, lag),
        }
    }
}

/// Bartlett lag for the HAC covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HacLag {
    /// `floor(4 (T/100)^(2/9))`.
    #[default]
    Auto,
    Fixed(usize),
}

impl HacLag {
    pub fn resolve(self, nobs: usize) -> usize {
        match self {
            HacLag::Auto => newey_west_lag(nobs),
            HacLag::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub name: &'static str,
    pub estimate: f64,
    pub se: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl ParamEstimate {
    fn new(name: &'static str, estimate: f64, se: f64) -> Self {
        ParamEstimate { name, estimate, se, lo95: estimate - 1.96 * se, hi95: estimate + 1.96 * se }
    }

    pub fn t_stat(&self) -> f64 {
        self.estimate / self.se
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lo95 <= value && value <= self.hi95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactEstimate {
    pub estimator: Estimator,
    pub window_start_k: i64,
    pub window_end_k: i64,
    pub params: Vec<ParamEstimate>,
    pub nobs: usize,
    pub hac_lag: usize,
}

impl ImpactEstimate {
    pub fn param(&self, name: &str) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub const KYLE_MIN_OBS: usize = 8;
pub const GH_MIN_OBS: usize = 10;

fn window_bounds(points: &[LogOddsPoint]) -> (i64, i64) {
    (points.first().map_or(0, |p| p.k), points.last().map_or(0, |p| p.k))
}

/// `dtheta = lambda * Q + e`, no intercept.
pub fn fit_kyle(points: &[LogOddsPoint]) -> Result<ImpactEstimate> {
    fit_kyle_with(points, HacLag::Auto)
}

pub fn fit_kyle_with(points: &[LogOddsPoint], hac: HacLag) -> Result<ImpactEstimate> {
    let usable: Vec<(f64, f64)> = points.iter().filter_map(|p| p.d_theta.map(|d| (p.q, d))).collect();
    if usable.len() < KYLE_MIN_OBS {
        return Err(Error::numerical(format!(
            "kyle: {} usable bins, need {KYLE_MIN_OBS}",
            usable.len()
        )));
    }
    let sqq: f64 = usable.iter().map(|(q, _)| q * q).sum();
    if sqq == 0.0 {
        return Err(Error::numerical("no flow variation"));
    }
    let sqd: f64 = usable.iter().map(|(q, d)| q * d).sum();
    let lambda = sqd / sqq;
    let n = usable.len();
    let x = DMatrix::from_iterator(n, 1, usable.iter().map(|(q, _)| *q));
    let resid = DVector::from_iterator(n, usable.iter().map(|(q, d)| d - lambda * q));
    let inv = DMatrix::from_element(1, 1, 1.0 / sqq);
    let lag = hac.resolve(n);
    let cov = hac_covariance(&x, &resid, &inv, lag);
    let (start, end) = window_bounds(points);
    Ok(ImpactEstimate {
        estimator: Estimator::Kyle,
        window_start_k: start,
        window_end_k: end,
        params: vec![ParamEstimate::new("lambda", lambda, cov[(0, 0)].max(0.0).sqrt())],
        nobs: n,
        hac_lag: lag,
    })
}

/// `dtheta = alpha + lambda_perm * Q + lambda_trans * dQ + e`.
pub fn fit_glosten_harris(points: &[LogOddsPoint]) -> Result<ImpactEstimate> {
    fit_glosten_harris_with(points, HacLag::Auto)
}

pub fn fit_glosten_harris_with(points: &[LogOddsPoint], hac: HacLag) -> Result<ImpactEstimate> {
    let usable: Vec<[f64; 4]> = points
        .iter()
        .filter_map(|p| Some([1.0, p.q, p.d_q?, p.d_theta?]))
        .collect();
    if usable.len() < GH_MIN_OBS {
        return Err(Error::numerical(format!(
            "glosten_harris: {} usable bins, need {GH_MIN_OBS}",
            usable.len()
        )));
    }
    let n = usable.len();
    let x = DMatrix::from_fn(n, 3, |i, j| usable[i][j]);
    let y = DVector::from_iterator(n, usable.iter().map(|r| r[3]));
    let names = ["alpha".to_string(), "lambda_perm".to_string(), "lambda_trans".to_string()];
    let ls = least_squares(&x, &y, &names)?;
    let lag = hac.resolve(n);
    let cov = hac_covariance(&x, &ls.residuals, &ls.xtx_inv, lag);
    let se = |j: usize| cov[(j, j)].max(0.0).sqrt();
    let (start, end) = window_bounds(points);
    Ok(ImpactEstimate {
        estimator: Estimator::GlostenHarris,
        window_start_k: start,
        window_end_k: end,
        params: vec![
            ParamEstimate::new("alpha", ls.beta[0], se(0)),
            ParamEstimate::new("lambda_perm", ls.beta[1], se(1)),
            ParamEstimate::new("lambda_trans", ls.beta[2], se(2)),
        ],
        nobs: n,
        hac_lag: lag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Window ends at the anchor bin.
    Trailing,
    /// Anchor bin sits in the middle of the window.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub window_len: usize,
    pub step: usize,
    pub alignment: Alignment,
    pub hac_lag: HacLag,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig { window_len: 24, step: 1, alignment: Alignment::Trailing, hac_lag: HacLag::Auto }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingPoint {
    /// Bin the estimate is reported at.
    pub anchor_k: i64,
    pub estimate: ImpactEstimate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RollingEstimates {
    pub points: Vec<RollingPoint>,
    /// Windows whose preconditions failed: `(anchor_k, reason)`.
    pub gaps: Vec<(i64, String)>,
}

/// Applies `estimator` to every contiguous run of `window_len` priced bins.
pub fn rolling_estimates(series: &LogOddsSeries, config: RollingConfig, estimator: Estimator) -> RollingEstimates {
    let pts = &series.points;
    let len = config.window_len.max(1);
    let mut out = RollingEstimates::default();
    if pts.len() < len {
        return out;
    }
    let mut start = 0;
    while start + len <= pts.len() {
        let window = &pts[start..start + len];
        let anchor_k = match config.alignment {
            Alignment::Trailing => window[len - 1].k,
            Alignment::Centered => window[len / 2].k,
        };
        match estimator.fit_with(window, config.hac_lag) {
            Ok(estimate) => out.points.push(RollingPoint { anchor_k, estimate }),
            Err(e) => out.gaps.push((anchor_k, e.to_string())),
        }
        start += config.step.max(1);
    }
    out
}

/// CSV: `event,window_start_k,estimator,param,estimate,se,lo95,hi95,nobs`.
pub fn write_estimates_csv<W: Write>(sink: W, event: &str, estimates: &[ImpactEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["event", "window_start_k", "estimator", "param", "estimate", "se", "lo95", "hi95", "nobs"])?;
    for e in estimates {
        for p in &e.params {
            w.write_record([
                event,
                &e.window_start_k.to_string(),
                e.estimator.as_str(),
                p.name,
                &p.estimate.to_string(),
                &p.se.to_string(),
                &p.lo95.to_string(),
                &p.hi95.to_string(),
                &e.nobs.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<estimates csv>", e))?;
    Ok(())
}
