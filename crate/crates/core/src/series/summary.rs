use serde::Serialize;

use super::BinSeries;
use crate::error::{Error, Result};

/// Pre / peak / trough / end prices around an event and their changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceResponse {
    pub pre: f64,
    pub peak: f64,
    pub trough: f64,
    pub end: f64,
    pub peak_delta: f64,
    pub trough_delta: f64,
    pub total_delta: f64,
}

/// `pre` is the price of bin -1 (the last bin strictly before the event
/// bin); peak and trough range over bins `k >= 1`; `end` is the last bin.
pub fn price_response_summary(series: &BinSeries) -> Result<PriceResponse> {
    let pre = series
        .get(-1)
        .and_then(|b| b.vwap)
        .ok_or_else(|| Error::data(format!("{} {}: no pre-event price", series.event, series.token)))?;
    let post: Vec<f64> = series.bins.iter().filter(|b| b.k >= 1).filter_map(|b| b.vwap).collect();
    if post.is_empty() {
        return Err(Error::data(format!("{} {}: no post-event price", series.event, series.token)));
    }
    let peak = post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trough = post.iter().copied().fold(f64::INFINITY, f64::min);
    let end = *post.last().unwrap();
    Ok(PriceResponse {
        pre,
        peak,
        trough,
        end,
        peak_delta: peak - pre,
        trough_delta: trough - pre,
        total_delta: end - pre,
    })
}

/// Four-decimal table of event price responses.
pub fn render_price_table(rows: &[(String, PriceResponse)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<32}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}\n",
        "Event", "Pre", "Peak", "Trough", "End", "PeakD", "TroughD", "TotalD"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<32}{:>9.4}{:>9.4}{:>9.4}{:>9.4}{:>9.4}{:>9.4}{:>9.4}\n",
            name, r.pre, r.peak, r.trough, r.end, r.peak_delta, r.trough_delta, r.total_delta
        ));
    }
    out
}
