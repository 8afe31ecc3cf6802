//! Price-efficiency diagnostics: rolling variance ratios of log-odds
//! returns and the two-sidedness index of order flow.

use std::io::Write;
use std::ops::RangeInclusive;

use chrono::TimeDelta;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::{fit_kyle, LogOddsSeries};
use crate::series::{BinSeries, EventSpec};
use crate::stats::{mean, sample_variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VrConfig {
    pub horizon: usize,
    /// Number of single-bin returns per rolling window.
    pub window: usize,
    /// Drop zero returns produced by carried-forward prices.
    pub drop_stale_returns: bool,
}

impl Default for VrConfig {
    fn default() -> Self {
        VrConfig { horizon: 6, window: 36, drop_stale_returns: false }
    }
}

/// Log-odds returns `(k, dtheta)` of a series.
pub fn returns_from(series: &LogOddsSeries, drop_stale: bool) -> Vec<(i64, f64)> {
    series
        .points
        .iter()
        .filter(|p| !(drop_stale && p.stale))
        .filter_map(|p| p.d_theta.map(|d| (p.k, d)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VrEstimate {
    pub vr: f64,
    pub var_single: f64,
    pub var_multi: f64,
    pub n: usize,
}

impl VrEstimate {
    /// Homoskedastic i.i.d. standard error `sqrt(2(2q-1)(q-1) / (3qn))`.
    pub fn se(&self, q: usize) -> f64 {
        let q = q as f64;
        (2.0 * (2.0 * q - 1.0) * (q - 1.0) / (3.0 * q * self.n as f64)).sqrt()
    }
}

/// Variance of overlapping `q`-sums over `q` times the single-return
/// variance. `None` when the single-return variance is zero or there are
/// too few sums.
pub fn variance_ratio_window(returns: &[f64], q: usize) -> Option<VrEstimate> {
    if q == 0 || returns.len() < q + 1 {
        return None;
    }
    let var_single = sample_variance(returns)?;
    if var_single <= 0.0 {
        return None;
    }
    let mut sums = Vec::with_capacity(returns.len() - q + 1);
    let mut acc: f64 = returns[..q].iter().sum();
    sums.push(acc);
    for i in q..returns.len() {
        acc += returns[i] - returns[i - q];
        sums.push(acc);
    }
    if q == 1 {
        sums.copy_from_slice(returns);
    }
    let var_multi = sample_variance(&sums)?;
    Some(VrEstimate { vr: var_multi / (q as f64 * var_single), var_single, var_multi, n: returns.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VrPoint {
    pub k: i64,
    pub estimate: VrEstimate,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VrSeries {
    pub points: Vec<VrPoint>,
    /// Windows with flat prices.
    pub gaps: Vec<i64>,
}

impl VrSeries {
    pub fn get(&self, k: i64) -> Option<&VrPoint> {
        self.points.iter().find(|p| p.k == k)
    }
}

/// Trailing rolling VR: the value at `k` uses the `window` returns ending at
/// `k`.
pub fn variance_ratio(returns: &[(i64, f64)], config: VrConfig) -> VrSeries {
    let mut out = VrSeries::default();
    let w = config.window.max(config.horizon + 1);
    if returns.len() < w {
        return out;
    }
    let values: Vec<f64> = returns.iter().map(|r| r.1).collect();
    for end in w..=values.len() {
        let k = returns[end - 1].0;
        match variance_ratio_window(&values[end - w..end], config.horizon) {
            Some(estimate) => {
                let half = 1.96 * estimate.se(config.horizon);
                out.points.push(VrPoint { k, estimate, lo95: estimate.vr - half, hi95: estimate.vr + half });
            }
            None => out.gaps.push(k),
        }
    }
    out
}

/// `1 - |B - S| / (B + S)`; `None` for empty bins.
pub fn two_sided_index(buy: f64, sell: f64) -> Option<f64> {
    let total = buy + sell;
    if total > 0.0 {
        Some(1.0 - (buy - sell).abs() / total)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSidedPoint {
    pub k: i64,
    pub value: Option<f64>,
    /// Mean of the defined values over bins `k-2..=k`.
    pub rolling: Option<f64>,
    pub buy: f64,
    pub sell: f64,
}

pub const TWO_SIDED_SMOOTHING: usize = 3;

pub fn two_sidedness(series: &BinSeries) -> Vec<TwoSidedPoint> {
    let raw: Vec<Option<f64>> = series.bins.iter().map(|b| two_sided_index(b.buy_volume, b.sell_volume)).collect();
    series
        .bins
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let from = (i + 1).saturating_sub(TWO_SIDED_SMOOTHING);
            let defined: Vec<f64> = raw[from..=i].iter().flatten().copied().collect();
            TwoSidedPoint { k: b.k, value: raw[i], rolling: mean(&defined), buy: b.buy_volume, sell: b.sell_volume }
        })
        .collect()
}

/// Bin ranges for the scalar post-event statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatWindows {
    /// Bins `1..=post_hour` form the first post-event hour.
    pub post_hour: i64,
    /// Bins per side for the impact change.
    pub impact_bins: i64,
}

impl Default for StatWindows {
    fn default() -> Self {
        StatWindows { post_hour: 12, impact_bins: 24 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostEventStats {
    /// Maximum VR over the first post-event hour.
    pub vr_post_max: Option<f64>,
    /// Mean raw two-sidedness over the first post-event hour.
    pub two_sided_post: Option<f64>,
    /// Mean raw two-sidedness over the hour ending at bin 0.
    pub two_sided_pre: Option<f64>,
    pub two_sided_change: Option<f64>,
    /// Kyle lambda over bins `1..=impact_bins` minus over `1-impact_bins..=0`.
    pub lambda_change: Option<f64>,
}

pub fn max_vr_post(vr: &VrSeries, post_hour: i64) -> Option<f64> {
    vr.points
        .iter()
        .filter(|p| (1..=post_hour).contains(&p.k))
        .map(|p| p.estimate.vr)
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

pub fn mean_two_sided(points: &[TwoSidedPoint], from: i64, to: i64) -> Option<f64> {
    let v: Vec<f64> = points.iter().filter(|p| (from..=to).contains(&p.k)).filter_map(|p| p.value).collect();
    mean(&v)
}

pub fn lambda_change(log_odds: &LogOddsSeries, impact_bins: i64) -> Result<f64> {
    let pick = |lo: i64, hi: i64| -> Vec<_> {
        log_odds.points.iter().filter(|p| (lo..=hi).contains(&p.k)).copied().collect()
    };
    let pre = fit_kyle(&pick(1 - impact_bins, 0))?.params[0].estimate;
    let post = fit_kyle(&pick(1, impact_bins))?.params[0].estimate;
    Ok(post - pre)
}

/// Bin range for the post-event statistics: the price window, extended back
/// far enough that the first post-event bins have a full trailing VR window.
pub fn stats_bin_range(event: &EventSpec, width: TimeDelta, config: VrConfig) -> RangeInclusive<i64> {
    let price = event.price_window.bins(width);
    (*price.start() - config.window as i64 - 1)..=*price.end()
}

/// Scalar summaries of one token's diagnostics around an event.
pub fn post_event_stats(series: &BinSeries, config: VrConfig, windows: StatWindows) -> Result<PostEventStats> {
    let lo = LogOddsSeries::from_bins(series);
    let vr = variance_ratio(&returns_from(&lo, config.drop_stale_returns), config);
    let ts = two_sidedness(series);
    let h = windows.post_hour;
    let two_sided_post = mean_two_sided(&ts, 1, h);
    let two_sided_pre = mean_two_sided(&ts, 1 - h, 0);
    let stats = PostEventStats {
        vr_post_max: max_vr_post(&vr, h),
        two_sided_post,
        two_sided_pre,
        two_sided_change: two_sided_post.zip(two_sided_pre).map(|(a, b)| a - b),
        lambda_change: lambda_change(&lo, windows.impact_bins).ok(),
    };
    if stats.vr_post_max.is_none() && stats.two_sided_post.is_none() {
        return Err(Error::numerical(format!("{} {}: all post-event diagnostics are gaps", series.event, series.token)));
    }
    Ok(stats)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV: `event,k,value,lo95,hi95`.
pub fn write_vr_csv<W: Write>(sink: W, event: &str, vr: &VrSeries) -> Result<()> {
    let rows: Vec<_> = vr.points.iter().map(|p| (p.k, Some(p.estimate.vr), Some(p.lo95), Some(p.hi95))).collect();
    write_series_csv(sink, event, &rows)
}

/// Same layout as the VR file; `value` is the raw index or its rolling
/// mean, bands are empty.
pub fn write_two_sided_csv<W: Write>(sink: W, event: &str, points: &[TwoSidedPoint], smoothed: bool) -> Result<()> {
    let rows: Vec<_> = points
        .iter()
        .map(|p| (p.k, if smoothed { p.rolling } else { p.value }, None, None))
        .collect();
    write_series_csv(sink, event, &rows)
}

fn write_series_csv<W: Write>(sink: W, event: &str, rows: &[(i64, Option<f64>, Option<f64>, Option<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["event", "k", "value", "lo95", "hi95"])?;
    for (k, v, lo, hi) in rows {
        w.write_record([event, &k.to_string(), &opt(*v), &opt(*lo), &opt(*hi)])?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics csv>", e))?;
    Ok(())
}
