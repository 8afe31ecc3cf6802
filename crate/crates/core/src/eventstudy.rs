//! Trader-level abnormal activity around events: baselines, abnormal
//! volume/frequency/participation, cumulative paths with bands, and entry
//! of first-time addresses.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::ops::RangeInclusive;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Address, AddressProfile, TradeRecord};
use crate::series::{bin_index, EventSpec};
use crate::stats::compensated_sum;

pub fn asinh(x: f64) -> f64 {
    x.asinh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Volume,
    Frequency,
    Participation,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Volume, Outcome::Frequency, Outcome::Participation];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Volume => "volume",
            Outcome::Frequency => "frequency",
            Outcome::Participation => "participation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventStudyConfig {
    /// Leave flagged addresses out of newcomer counts.
    pub exclude_operators_from_newcomers: bool,
    /// Also set AF = 0 where F = 0.
    pub frequency_zero_override: bool,
}

impl Default for EventStudyConfig {
    fn default() -> Self {
        EventStudyConfig { exclude_operators_from_newcomers: true, frequency_zero_override: false }
    }
}

/// Unflagged addresses with at least one trade in
/// `[event - characteristics_window, event)`, sorted.
pub fn incumbents(
    trades: &[TradeRecord],
    profiles: &BTreeMap<Address, AddressProfile>,
    event: &EventSpec,
) -> Vec<Address> {
    let start = event.event_time - event.characteristics_window;
    let lo = trades.partition_point(|t| t.timestamp < start);
    let hi = trades.partition_point(|t| t.timestamp < event.event_time);
    let mut seen: HashSet<&Address> = HashSet::new();
    for t in &trades[lo..hi] {
        seen.insert(&t.maker);
        seen.insert(&t.taker);
    }
    let mut out: Vec<Address> = seen
        .into_iter()
        .filter(|a| !profiles.get(*a).is_some_and(|p| p.is_advanced_operator))
        .cloned()
        .collect();
    out.sort();
    out
}

/// Dense trader × bin grid of volume and trade counts; absent trades are
/// explicit zeros. A trade counts for both of its counterparties.
#[derive(Debug, Clone, PartialEq)]
pub struct TraderBinGrid {
    pub traders: Vec<Address>,
    pub bins: RangeInclusive<i64>,
    volume: Vec<f64>,
    frequency: Vec<u32>,
}

impl TraderBinGrid {
    pub fn build(
        trades: &[TradeRecord],
        traders: Vec<Address>,
        event: &EventSpec,
        bins: RangeInclusive<i64>,
        width: TimeDelta,
    ) -> Self {
        let n_bins = bins.clone().count();
        let index: HashMap<&Address, usize> = traders.iter().enumerate().map(|(i, a)| (a, i)).collect();
        let mut volume = vec![0.0; traders.len() * n_bins];
        let mut frequency = vec![0u32; traders.len() * n_bins];
        let (start, end) = event.span(&bins, width);
        let lo = trades.partition_point(|t| t.timestamp <= start);
        let hi = trades.partition_point(|t| t.timestamp <= end);
        for t in &trades[lo..hi] {
            let col = (bin_index(event.event_time, t.timestamp, width) - bins.start()) as usize;
            for party in [&t.maker, &t.taker] {
                if let Some(&row) = index.get(party) {
                    volume[row * n_bins + col] += t.value;
                    frequency[row * n_bins + col] += 1;
                }
            }
        }
        drop(index);
        TraderBinGrid { traders, bins, volume, frequency }
    }

    pub fn n_bins(&self) -> usize {
        self.bins.clone().count()
    }

    fn col(&self, k: i64) -> usize {
        assert!(self.bins.contains(&k), "bin {k} outside grid");
        (k - self.bins.start()) as usize
    }

    pub fn volume(&self, trader: usize, k: i64) -> f64 {
        self.volume[trader * self.n_bins() + self.col(k)]
    }

    pub fn frequency(&self, trader: usize, k: i64) -> u32 {
        self.frequency[trader * self.n_bins() + self.col(k)]
    }

    pub fn participation(&self, trader: usize, k: i64) -> f64 {
        (self.volume(trader, k) > 0.0) as u8 as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Baseline {
    pub volume: f64,
    pub frequency: f64,
    pub participation: f64,
}

/// Within-trader means over every estimation bin, zeros included.
pub fn compute_baselines(grid: &TraderBinGrid, estimation: RangeInclusive<i64>) -> Result<Vec<Baseline>> {
    if estimation.is_empty() {
        return Err(Error::validation("estimation_window", "estimation window is empty"));
    }
    if !grid.bins.contains(estimation.start()) || !grid.bins.contains(estimation.end()) {
        return Err(Error::validation("estimation_window", "estimation bins fall outside the trader grid"));
    }
    let n = estimation.clone().count() as f64;
    Ok((0..grid.traders.len())
        .map(|i| Baseline {
            volume: compensated_sum(estimation.clone().map(|k| grid.volume(i, k))) / n,
            frequency: compensated_sum(estimation.clone().map(|k| grid.frequency(i, k) as f64)) / n,
            participation: compensated_sum(estimation.clone().map(|k| grid.participation(i, k))) / n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinMoments {
    pub k: i64,
    pub mean: f64,
    /// Cross-sectional sample standard deviation; 0 for a single trader.
    pub sd: f64,
    pub n: usize,
}

pub fn bin_moments(k: i64, values: &[f64]) -> BinMoments {
    let n = values.len();
    if n == 0 {
        return BinMoments { k, mean: f64::NAN, sd: f64::NAN, n };
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let sd = if n > 1 {
        (compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    BinMoments { k, mean, sd, n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbnormalSeries {
    pub outcome: Outcome,
    pub bins: RangeInclusive<i64>,
    /// Trader-major abnormal outcomes.
    pub values: Vec<f64>,
    pub moments: Vec<BinMoments>,
}

impl AbnormalSeries {
    pub fn value(&self, trader: usize, k: i64) -> f64 {
        let n = self.bins.clone().count();
        self.values[trader * n + (k - self.bins.start()) as usize]
    }
}

/// One trader-bin abnormal outcome.
pub fn abnormal_value(outcome: Outcome, grid: &TraderBinGrid, base: &Baseline, i: usize, k: i64, config: &EventStudyConfig) -> f64 {
    match outcome {
        Outcome::Volume => {
            let v = grid.volume(i, k);
            if v == 0.0 {
                0.0
            } else {
                asinh(v) - asinh(base.volume)
            }
        }
        Outcome::Frequency => {
            let f = grid.frequency(i, k) as f64;
            if f == 0.0 && config.frequency_zero_override {
                0.0
            } else {
                asinh(f) - asinh(base.frequency)
            }
        }
        Outcome::Participation => grid.participation(i, k) - base.participation,
    }
}

pub fn abnormal_activity(
    grid: &TraderBinGrid,
    baselines: &[Baseline],
    event_bins: RangeInclusive<i64>,
    outcome: Outcome,
    config: &EventStudyConfig,
) -> AbnormalSeries {
    let n_bins = event_bins.clone().count();
    let n = grid.traders.len();
    let mut values = vec![0.0; n * n_bins];
    for (i, base) in baselines.iter().enumerate() {
        for (j, k) in event_bins.clone().enumerate() {
            values[i * n_bins + j] = abnormal_value(outcome, grid, base, i, k, config);
        }
    }
    let moments = event_bins
        .clone()
        .enumerate()
        .map(|(j, k)| {
            let col: Vec<f64> = (0..n).map(|i| values[i * n_bins + j]).collect();
            bin_moments(k, &col)
        })
        .collect();
    AbnormalSeries { outcome, bins: event_bins, values, moments }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaaPoint {
    pub k: i64,
    pub caa: f64,
    pub se: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub n: usize,
}

impl CaaPoint {
    pub fn band_contains(&self, v: f64) -> bool {
        self.lo95 <= v && v <= self.hi95
    }
}

/// Running sum of bin means with `se = sqrt(sum (sd/sqrt(N))^2)`, treating
/// bins as independent.
pub fn cumulative_abnormal(moments: &[BinMoments]) -> Result<Vec<CaaPoint>> {
    let mut caa = 0.0;
    let mut var = 0.0;
    let mut out = Vec::with_capacity(moments.len());
    for m in moments {
        if m.n == 0 {
            return Err(Error::numerical(format!("empty cross-section at bin {}", m.k)));
        }
        caa += m.mean;
        var += m.sd * m.sd / m.n as f64;
        let se = var.sqrt();
        out.push(CaaPoint { k: m.k, caa, se, lo95: caa - 1.96 * se, hi95: caa + 1.96 * se, n: m.n });
    }
    Ok(out)
}

/// Per-bin count of addresses whose first trade in the whole sample falls in
/// that bin.
pub fn newcomer_counts(
    profiles: &BTreeMap<Address, AddressProfile>,
    event: &EventSpec,
    bins: RangeInclusive<i64>,
    width: TimeDelta,
    exclude_operators: bool,
) -> Vec<(i64, usize)> {
    let (start, end) = event.span(&bins, width);
    let mut counts: BTreeMap<i64, usize> = bins.clone().map(|k| (k, 0)).collect();
    for p in profiles.values() {
        if exclude_operators && p.is_advanced_operator {
            continue;
        }
        if let Some(t) = p.first_trade_time {
            if t > start && t <= end {
                *counts.get_mut(&bin_index(event.event_time, t, width)).unwrap() += 1;
            }
        }
    }
    counts.into_iter().collect()
}

/// Everything the event study produces for one event.
#[derive(Debug, Clone)]
pub struct EventStudy {
    pub event: String,
    pub grid: TraderBinGrid,
    pub baselines: Vec<Baseline>,
    pub abnormal: Vec<AbnormalSeries>,
    pub caa: Vec<(Outcome, Vec<CaaPoint>)>,
    pub newcomers: Vec<(i64, usize)>,
}

impl EventStudy {
    pub fn caa(&self, outcome: Outcome) -> &[CaaPoint] {
        &self.caa.iter().find(|(o, _)| *o == outcome).expect("all outcomes computed").1
    }

    pub fn abnormal(&self, outcome: Outcome) -> &AbnormalSeries {
        self.abnormal.iter().find(|a| a.outcome == outcome).expect("all outcomes computed")
    }
}

pub fn run_event_study(
    trades: &[TradeRecord],
    profiles: &BTreeMap<Address, AddressProfile>,
    event: &EventSpec,
    width: TimeDelta,
    config: &EventStudyConfig,
) -> Result<EventStudy> {
    let event_bins = event.trading_window.bins(width);
    let est = event.estimation_bins(width);
    let lo = (*est.start()).min(*event_bins.start());
    let hi = (*est.end()).max(*event_bins.end());
    let traders = incumbents(trades, profiles, event);
    if traders.is_empty() {
        return Err(Error::data(format!("{}: no incumbent traders", event.name)));
    }
    let grid = TraderBinGrid::build(trades, traders, event, lo..=hi, width);
    let baselines = compute_baselines(&grid, est)?;
    let mut abnormal = Vec::new();
    let mut caa = Vec::new();
    for outcome in Outcome::ALL {
        let a = abnormal_activity(&grid, &baselines, event_bins.clone(), outcome, config);
        caa.push((outcome, cumulative_abnormal(&a.moments)?));
        abnormal.push(a);
    }
    let newcomers = newcomer_counts(profiles, event, event_bins, width, config.exclude_operators_from_newcomers);
    Ok(EventStudy { event: event.name.clone(), grid, baselines, abnormal, caa, newcomers })
}

/// CSV: `event,outcome,k,caa,se,lo95,hi95,n`.
pub fn write_caa_csv<W: Write>(sink: W, event: &str, caa: &[(Outcome, Vec<CaaPoint>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["event", "outcome", "k", "caa", "se", "lo95", "hi95", "n"])?;
    for (outcome, path) in caa {
        for p in path {
            w.write_record([
                event,
                outcome.as_str(),
                &p.k.to_string(),
                &p.caa.to_string(),
                &p.se.to_string(),
                &p.lo95.to_string(),
                &p.hi95.to_string(),
                &p.n.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<caa csv>", e))?;
    Ok(())
}

/// CSV: `event,k,newcomers`.
pub fn write_newcomers_csv<W: Write>(sink: W, event: &str, counts: &[(i64, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["event", "k", "newcomers"])?;
    for (k, n) in counts {
        w.write_record([event, &k.to_string(), &n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<newcomers csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{flag_addresses, AuxiliarySets, Direction, Market, Side};
    use chrono::{DateTime, TimeZone, Utc};
    use proptest::prelude::*;

    fn event() -> EventSpec {
        EventSpec::new("e", Utc.with_ymd_and_hms(2024, 7, 21, 17, 45, 0).unwrap())
    }

    fn w() -> TimeDelta {
        TimeDelta::minutes(5)
    }

    fn at(secs: i64) -> DateTime<Utc> {
        event().event_time + TimeDelta::seconds(secs)
    }

    fn trade(id: usize, secs: i64, maker: &str, taker: &str, value: f64) -> TradeRecord {
        TradeRecord {
            trade_id: format!("{id:05}"),
            timestamp: at(secs),
            market: Market::Trump,
            side_token: Side::Yes,
            price: 0.5,
            quantity: value / 0.5,
            value,
            maker: maker.into(),
            taker: taker.into(),
            taker_direction: Direction::Buy,
        }
    }

    #[test]
    fn asinh_anchors() {
        assert_eq!(asinh(0.0), 0.0);
        assert!((asinh(1e6) - (2e6f64).ln()).abs() < 1e-12);
        assert!((asinh(3.0f64.sinh()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_hand_means() {
        // A trades 60 USDC once in the estimation window; B trades 10 in every
        // estimation bin; C only traded days earlier.
        let mut trades = vec![trade(0, -86_400 * 3, "C", "M", 5.0), trade(1, -600, "A", "M", 60.0)];
        for (i, k) in (-35..=0).enumerate() {
            trades.push(trade(10 + i, k * 300 - 1, "B", "M2", 10.0));
        }
        trades.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.trade_id.cmp(&b.trade_id)));
        let traders: Vec<Address> = ["A", "B", "C"].iter().map(|s| Address::from(*s)).collect();
        let grid = TraderBinGrid::build(&trades, traders, &event(), -35..=6, w());
        let b = compute_baselines(&grid, event().estimation_bins(w())).unwrap();
        assert!((b[0].volume - 60.0 / 36.0).abs() < 1e-12);
        assert_eq!(b[1].volume, 10.0);
        assert_eq!((b[2].volume, b[2].frequency, b[2].participation), (0.0, 0.0, 0.0));
    }

    #[test]
    fn abnormal_override_and_participation() {
        let grid = TraderBinGrid {
            traders: vec!["A".into()],
            bins: 0..=1,
            volume: vec![0.0, 5.0],
            frequency: vec![0, 1],
        };
        let base = Baseline { volume: 5.0, frequency: 0.25, participation: 0.25 };
        let cfg = EventStudyConfig::default();
        assert_eq!(abnormal_value(Outcome::Volume, &grid, &base, 0, 0, &cfg), 0.0);
        assert_eq!(abnormal_value(Outcome::Volume, &grid, &base, 0, 1, &cfg), 0.0);
        assert_eq!(abnormal_value(Outcome::Participation, &grid, &base, 0, 0, &cfg), -0.25);
        assert_eq!(abnormal_value(Outcome::Participation, &grid, &base, 0, 1, &cfg), 0.75);
        assert!(abnormal_value(Outcome::Frequency, &grid, &base, 0, 0, &cfg) < 0.0);
        let cfg = EventStudyConfig { frequency_zero_override: true, ..cfg };
        assert_eq!(abnormal_value(Outcome::Frequency, &grid, &base, 0, 0, &cfg), 0.0);
    }

    #[test]
    fn caa_hand_arithmetic() {
        let m = [
            BinMoments { k: 0, mean: 0.1, sd: 0.01, n: 1 },
            BinMoments { k: 1, mean: 0.2, sd: 0.02, n: 1 },
        ];
        let c = cumulative_abnormal(&m).unwrap();
        assert!((c[0].caa - 0.1).abs() < 1e-15 && (c[0].se - 0.01).abs() < 1e-15);
        assert!((c[1].caa - 0.3).abs() < 1e-15);
        assert!((c[1].se - 0.0005f64.sqrt()).abs() < 1e-15);
        let zero = [BinMoments { k: 0, mean: 0.0, sd: 0.0, n: 0 }];
        assert!(cumulative_abnormal(&zero).unwrap_err().to_string().contains("empty cross-section"));
    }

    #[test]
    fn null_path_is_zero() {
        let m: Vec<_> = (0..5).map(|k| BinMoments { k, mean: 0.0, sd: 0.3, n: 10 }).collect();
        let c = cumulative_abnormal(&m).unwrap();
        assert!(c.iter().all(|p| p.caa == 0.0 && (p.hi95 + p.lo95).abs() < 1e-15));
        assert!(c.windows(2).all(|w| w[1].se >= w[0].se));
    }

    #[test]
    fn incumbents_and_newcomers() {
        let trades = vec![
            // Takers buy from M, whose holdings go negative.
            trade(0, -86_400 * 3, "M", "OLD", 5.0),
            trade(1, 120, "M", "NEW", 5.0),
            trade(2, 200, "M", "OP1", 5.0),
            trade(3, 250, "M", "OP2", 5.0),
        ];
        let aux = AuxiliarySets {
            offexchange_transfers: vec![("OP1".into(), "OP2".into())],
            ..Default::default()
        };
        let profiles = flag_addresses(&trades, &aux);
        let inc = incumbents(&trades, &profiles, &event());
        assert_eq!(inc, vec![Address::from("OLD")]);
        let bins = event().trading_window.bins(w());
        let excl = newcomer_counts(&profiles, &event(), bins.clone(), w(), true);
        let incl = newcomer_counts(&profiles, &event(), bins, w(), false);
        let at1 = |v: &[(i64, usize)]| v.iter().find(|(k, _)| *k == 1).unwrap().1;
        assert_eq!(at1(&excl), 1);
        assert_eq!(at1(&incl), 3);
        assert_eq!(excl.iter().map(|c| c.1).sum::<usize>(), 1);
    }

    proptest! {
        #[test]
        fn volume_scaling_bounded(v in 1e-3f64..1e7, vbar in 1e-3f64..1e7) {
            let av = asinh(v) - asinh(vbar);
            let av10 = asinh(10.0 * v) - asinh(10.0 * vbar);
            prop_assert!(av10.abs() <= 10f64.ln() + av.abs() + 1e-12);
        }

        #[test]
        fn participation_bounds(d in prop::collection::vec(prop::collection::vec(any::<bool>(), 8), 1..20), dbar in prop::collection::vec(0.0f64..=1.0, 20)) {
            let n = d.len();
            let mut caa = 0.0;
            for k in 0..8 {
                let col: Vec<f64> = (0..n).map(|i| d[i][k] as u8 as f64 - dbar[i]).collect();
                prop_assert!(col.iter().all(|v| (-1.0..=1.0).contains(v)));
                caa += bin_moments(k as i64, &col).mean;
                prop_assert!(caa.abs() <= (k + 1) as f64 + 1e-12);
            }
        }
    }
}
