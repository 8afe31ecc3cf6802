use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Address, Market, Token, TradeRecord};
use crate::series::{bin_index, EventSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Characteristic {
    TradVolHigh,
    TradFreqHigh,
    TradIntMulti,
    NegTrumpWin,
    SingleMarket,
    Contrarian,
    Momentum,
}

impl Characteristic {
    pub const ALL: [Characteristic; 7] = [
        Characteristic::TradVolHigh,
        Characteristic::TradFreqHigh,
        Characteristic::TradIntMulti,
        Characteristic::NegTrumpWin,
        Characteristic::SingleMarket,
        Characteristic::Contrarian,
        Characteristic::Momentum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Characteristic::TradVolHigh => "trad_vol_high",
            Characteristic::TradFreqHigh => "trad_freq_high",
            Characteristic::TradIntMulti => "trad_int_multi",
            Characteristic::NegTrumpWin => "neg_trump_win",
            Characteristic::SingleMarket => "single_market",
            Characteristic::Contrarian => "contrarian",
            Characteristic::Momentum => "momentum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Characteristic::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::validation("characteristic", format!("unknown characteristic {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacteristicsConfig {
    /// Length of the trailing price trend used for the style flags.
    pub trend_minutes: i64,
    /// |correlation| above which a trader is contrarian or momentum.
    pub style_threshold: f64,
    pub style_min_trades: usize,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        CharacteristicsConfig { trend_minutes: 60, style_threshold: 0.2, style_min_trades: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraderCharacteristics {
    pub trader: Address,
    pub event: String,
    pub trad_vol_high: bool,
    pub trad_freq_high: bool,
    pub trad_int_multi: bool,
    pub neg_trump_win: bool,
    pub single_market: bool,
    pub contrarian: bool,
    pub momentum: bool,
    /// Net exposure at the event instant.
    pub net_trump_win: f64,
}

impl TraderCharacteristics {
    pub fn get(&self, c: Characteristic) -> bool {
        match c {
            Characteristic::TradVolHigh => self.trad_vol_high,
            Characteristic::TradFreqHigh => self.trad_freq_high,
            Characteristic::TradIntMulti => self.trad_int_multi,
            Characteristic::NegTrumpWin => self.neg_trump_win,
            Characteristic::SingleMarket => self.single_market,
            Characteristic::Contrarian => self.contrarian,
            Characteristic::Momentum => self.momentum,
        }
    }
}

/// Per-token trade prices for as-of lookups.
#[derive(Debug, Clone, Default)]
pub struct PriceIndex {
    series: HashMap<Token, (Vec<DateTime<Utc>>, Vec<f64>)>,
}

impl PriceIndex {
    pub fn build(trades: &[TradeRecord]) -> Self {
        let mut series: HashMap<Token, (Vec<DateTime<Utc>>, Vec<f64>)> = HashMap::new();
        for t in trades {
            let e = series.entry(t.token()).or_default();
            e.0.push(t.timestamp);
            e.1.push(t.price);
        }
        PriceIndex { series }
    }

    /// Last trade price at or before `at`.
    pub fn price_asof(&self, token: &Token, at: DateTime<Utc>) -> Option<f64> {
        let (ts, px) = self.series.get(token)?;
        let n = ts.partition_point(|t| *t <= at);
        (n > 0).then(|| px[n - 1])
    }

    /// Price change over the `minutes` ending at the last `width`-grid point
    /// strictly before `at` (grid aligned to the Unix epoch).
    pub fn trailing_trend(&self, token: &Token, at: DateTime<Utc>, width: TimeDelta, minutes: i64) -> Option<f64> {
        let w = width.num_nanoseconds()?;
        let t = at.timestamp_nanos_opt()?;
        let grid = DateTime::from_timestamp_nanos((t - 1).div_euclid(w) * w);
        let now = self.price_asof(token, grid)?;
        let then = self.price_asof(token, grid - TimeDelta::minutes(minutes))?;
        Some(now - then)
    }
}

/// Number of distinct markets each address traded over the whole sample.
pub fn market_counts(trades: &[TradeRecord]) -> HashMap<Address, usize> {
    let mut sets: HashMap<&Address, BTreeSet<&Market>> = HashMap::new();
    for t in trades {
        sets.entry(&t.maker).or_default().insert(&t.market);
        sets.entry(&t.taker).or_default().insert(&t.market);
    }
    sets.into_iter().map(|(a, s)| (a.clone(), s.len())).collect()
}

/// Net exposure of each of `traders` at each of `times` (trades with
/// timestamp at or before the time included), in one pass.
pub fn exposure_snapshots(trades: &[TradeRecord], traders: &[Address], times: &[DateTime<Utc>]) -> Vec<Vec<f64>> {
    let index: HashMap<&Address, usize> = traders.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut legs: Vec<HashMap<Token, f64>> = vec![HashMap::new(); traders.len()];
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&i| times[i]);
    let mut out = vec![Vec::new(); times.len()];
    let mut cursor = 0;
    for &ti in &order {
        while cursor < trades.len() && trades[cursor].timestamp <= times[ti] {
            let t = &trades[cursor];
            cursor += 1;
            if t.token().trump_win_sign().is_none() {
                continue;
            }
            let q = t.taker_direction.sign() as f64 * t.quantity;
            for (party, delta) in [(&t.taker, q), (&t.maker, -q)] {
                if let Some(&i) = index.get(party) {
                    *legs[i].entry(t.token()).or_default() += delta;
                }
            }
        }
        out[ti] = legs.iter().map(crate::ingest::net_trump_win).collect();
    }
    out
}

/// Values strictly above the median (mean of the middle pair for even
/// counts); ties at the median are not high.
pub fn above_median(values: &[f64]) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    values.iter().map(|v| *v > median).collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Default)]
struct Activity {
    volume: f64,
    trades: usize,
    bins: BTreeSet<i64>,
    signed: Vec<f64>,
    trend: Vec<f64>,
}

/// Characteristics of each incumbent over the window before the event.
/// `exposure` is aligned with `incumbents`.
#[allow(clippy::too_many_arguments)]
pub fn build_characteristics(
    trades: &[TradeRecord],
    prices: &PriceIndex,
    markets: &HashMap<Address, usize>,
    incumbents: &[Address],
    exposure: &[f64],
    event: &EventSpec,
    width: TimeDelta,
    config: &CharacteristicsConfig,
) -> Vec<TraderCharacteristics> {
    let index: HashMap<&Address, usize> = incumbents.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut acts: Vec<Activity> = (0..incumbents.len()).map(|_| Activity::default()).collect();
    let start = event.event_time - event.characteristics_window;
    let lo = trades.partition_point(|t| t.timestamp < start);
    let hi = trades.partition_point(|t| t.timestamp < event.event_time);
    for t in &trades[lo..hi] {
        let dir = t.taker_direction.sign() as f64;
        let mut trend = None;
        for (party, sign) in [(&t.taker, dir), (&t.maker, -dir)] {
            let Some(&i) = index.get(party) else { continue };
            let a = &mut acts[i];
            a.volume += t.value;
            a.trades += 1;
            a.bins.insert(bin_index(event.event_time, t.timestamp, width));
            let tr = *trend.get_or_insert_with(|| prices.trailing_trend(&t.token(), t.timestamp, width, config.trend_minutes));
            if let Some(tr) = tr {
                a.signed.push(sign * t.value);
                a.trend.push(tr);
            }
        }
    }
    let vol_high = above_median(&acts.iter().map(|a| a.volume).collect::<Vec<_>>());
    let freq_high = above_median(&acts.iter().map(|a| a.trades as f64).collect::<Vec<_>>());
    incumbents
        .iter()
        .zip(acts)
        .enumerate()
        .filter(|(_, (_, a))| a.trades > 0)
        .map(|(i, (addr, a))| {
            let corr = if a.signed.len() >= config.style_min_trades { pearson(&a.signed, &a.trend) } else { None };
            TraderCharacteristics {
                trader: addr.clone(),
                event: event.name.clone(),
                trad_vol_high: vol_high[i],
                trad_freq_high: freq_high[i],
                trad_int_multi: a.bins.len() >= 2,
                neg_trump_win: exposure[i] < 0.0,
                single_market: markets.get(addr).copied() == Some(1),
                contrarian: corr.is_some_and(|c| c < -config.style_threshold),
                momentum: corr.is_some_and(|c| c > config.style_threshold),
                net_trump_win: exposure[i],
            }
        })
        .collect()
}

/// CSV: `event,trader,<characteristics...>,net_trump_win`.
pub fn write_characteristics_csv<W: Write>(sink: W, rows: &[TraderCharacteristics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["event", "trader"];
    header.extend(Characteristic::ALL.iter().map(|c| c.as_str()));
    header.push("net_trump_win");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.event.clone(), r.trader.to_string()];
        rec.extend(Characteristic::ALL.iter().map(|c| (r.get(*c) as u8).to_string()));
        rec.push(r.net_trump_win.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<characteristics csv>", e))?;
    Ok(())
}

/// Share of traders with each flag set, one column per event.
pub fn render_characteristics_table(rows: &[TraderCharacteristics]) -> String {
    let mut events: Vec<&str> = Vec::new();
    for r in rows {
        if !events.contains(&r.event.as_str()) {
            events.push(&r.event);
        }
    }
    let mut out = format!("{:<18}", "Variable");
    for e in &events {
        out.push_str(&format!("{:>16}", truncate(e, 15)));
    }
    out.push('\n');
    for c in Characteristic::ALL {
        out.push_str(&format!("{:<18}", c.as_str()));
        for e in &events {
            let sub: Vec<_> = rows.iter().filter(|r| r.event == *e).collect();
            let share = sub.iter().filter(|r| r.get(c)).count() as f64 / sub.len().max(1) as f64;
            out.push_str(&format!("{:>16.4}", share));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<18}", "N"));
    for e in &events {
        out.push_str(&format!("{:>16}", rows.iter().filter(|r| r.event == *e).count()));
    }
    out.push('\n');
    out
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
