//! Matched weekday × clock-time randomization tests: pseudo-events drawn
//! from the same weekday and time of day, the full statistic recomputed at
//! each, and a +1-adjusted two-sided p-value.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{post_event_stats, stats_bin_range, StatWindows, VrConfig};
use crate::error::{Error, Result};
use crate::eventstudy::{run_event_study, EventStudyConfig, Outcome};
use crate::ingest::{Address, AddressProfile, Token, TradeRecord};
use crate::series::{build_bin_series, classify_ticks, EventSpec, SignedTrade, TickConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Kyle λ over the post-event impact window minus the pre-event one.
    LambdaChange,
    /// Largest VR(6) in the first post-event hour.
    VrPostMax,
    /// Mean two-sidedness in the first post-event hour minus the hour before.
    TwoSidedChange,
    /// Cumulative abnormal participation at the end of the trading window.
    AbnormalJump,
}

impl Statistic {
    pub const ALL: [Statistic; 4] =
        [Statistic::LambdaChange, Statistic::VrPostMax, Statistic::TwoSidedChange, Statistic::AbnormalJump];

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::LambdaChange => "lambda_change",
            Statistic::VrPostMax => "vr_post_max",
            Statistic::TwoSidedChange => "two_sided_change",
            Statistic::AbnormalJump => "abnormal_jump",
        }
    }

    pub fn parse(s: &str) -> Option<Statistic> {
        Statistic::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

/// Which trades make a 5-minute grid point eligible for the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolScope {
    #[default]
    AnalyzedToken,
    AnyToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboSpec {
    pub statistic: Statistic,
    pub draws: usize,
    /// No pseudo-event within this distance of any real event.
    #[serde(with = "crate::series::secs")]
    pub exclusion: TimeDelta,
    pub seed: u64,
    pub pool: PoolScope,
}

impl PlaceboSpec {
    pub fn new(statistic: Statistic, seed: u64) -> Self {
        PlaceboSpec { statistic, draws: 500, exclusion: TimeDelta::hours(24), seed, pool: PoolScope::AnalyzedToken }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::validation("placebo.draws", "must be positive"));
        }
        if self.exclusion < TimeDelta::zero() {
            return Err(Error::validation("placebo.exclusion", "must be non-negative"));
        }
        Ok(())
    }

    /// Substream seed for one (statistic, event) pair.
    pub fn stream_seed(&self, event: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.statistic.as_str().as_bytes());
        h.update([0]);
        h.update(event.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }
}

/// Eligible pseudo-event times: same weekday and clock time as the event,
/// inside `span`, at least `exclusion` away from every real event, and
/// with a trade time in the bin ending there. `trade_times` is sorted.
pub fn placebo_pool(
    trade_times: &[DateTime<Utc>],
    span: (DateTime<Utc>, DateTime<Utc>),
    real_events: &[DateTime<Utc>],
    event_time: DateTime<Utc>,
    width: TimeDelta,
    exclusion: TimeDelta,
) -> Vec<DateTime<Utc>> {
    let week = TimeDelta::weeks(1);
    let (start, end) = span;
    let back = (event_time - start).num_seconds().div_euclid(week.num_seconds());
    let mut t = event_time - week * back as i32;
    let mut pool = Vec::new();
    while t <= end {
        let excluded = real_events.iter().any(|e| (t - *e).abs() < exclusion);
        if t >= start && !excluded {
            let i = trade_times.partition_point(|x| *x <= t - width);
            if i < trade_times.len() && trade_times[i] <= t {
                pool.push(t);
            }
        }
        t += week;
    }
    pool
}

/// `draws` pool elements, uniformly with replacement.
pub fn draw_pseudo_events(pool: &[DateTime<Utc>], draws: usize, seed: u64) -> Result<Vec<DateTime<Utc>>> {
    if pool.is_empty() {
        return Err(Error::data("no matched placebo times"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..draws).map(|_| pool[rng.random_range(0..pool.len())]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PValue {
    pub p: f64,
    pub usable: usize,
    pub dropped: usize,
}

/// `(1 + #{|placebo| >= |real|}) / (1 + M)` over the finite draws.
pub fn randomization_p(real: f64, placebo: &[f64]) -> PValue {
    let usable: Vec<f64> = placebo.iter().copied().filter(|x| x.is_finite()).collect();
    let extreme = usable.iter().filter(|x| x.abs() >= real.abs()).count();
    PValue {
        p: (1 + extreme) as f64 / (1 + usable.len()) as f64,
        usable: usable.len(),
        dropped: placebo.len() - usable.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboResult {
    pub event: String,
    pub statistic: Statistic,
    pub real: f64,
    /// Usable placebo statistics in draw order.
    pub placebo: Vec<f64>,
    pub draws: Vec<DateTime<Utc>>,
    pub dropped: usize,
    pub pool_size: usize,
    pub p_value: f64,
    pub seed: u64,
    pub warning: Option<String>,
}

impl PlaceboResult {
    pub fn usable(&self) -> usize {
        self.placebo.len()
    }
}

/// Everything a statistic needs to be recomputed at an arbitrary instant.
pub struct StatContext<'a> {
    pub trades: &'a [TradeRecord],
    pub profiles: &'a BTreeMap<Address, AddressProfile>,
    pub token: Token,
    /// The analyzed token's trades, tick-signed over the whole sample.
    pub signed: Vec<SignedTrade<'a>>,
    pub width: TimeDelta,
    pub vr: VrConfig,
    pub windows: StatWindows,
    pub eventstudy: EventStudyConfig,
}

impl<'a> StatContext<'a> {
    /// `trades` must be time-sorted.
    pub fn new(
        trades: &'a [TradeRecord],
        profiles: &'a BTreeMap<Address, AddressProfile>,
        token: Token,
        width: TimeDelta,
        tick: TickConfig,
    ) -> Self {
        let signed = classify_ticks(trades.iter().filter(|t| t.is_token(&token)), tick);
        StatContext {
            trades,
            profiles,
            token,
            signed,
            width,
            vr: VrConfig::default(),
            windows: StatWindows::default(),
            eventstudy: EventStudyConfig::default(),
        }
    }

    pub fn span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        Some((self.trades.first()?.timestamp, self.trades.last()?.timestamp))
    }

    /// The statistic with `event`'s windows placed at its event time.
    pub fn evaluate(&self, statistic: Statistic, event: &EventSpec) -> Result<f64> {
        let value = match statistic {
            Statistic::AbnormalJump => {
                let study = run_event_study(self.trades, self.profiles, event, self.width, &self.eventstudy)?;
                let end = *event.trading_window.bins(self.width).end();
                study
                    .caa(Outcome::Participation)
                    .iter()
                    .find(|p| p.k == end)
                    .map(|p| p.caa)
                    .ok_or_else(|| Error::data(format!("{}: no CAA at bin {end}", event.name)))?
            }
            _ => {
                let range = stats_bin_range(event, self.width, self.vr);
                let series = build_bin_series(&self.signed, event, range, self.width)?;
                let stats = post_event_stats(&series, self.vr, self.windows)?;
                let v = match statistic {
                    Statistic::LambdaChange => stats.lambda_change,
                    Statistic::VrPostMax => stats.vr_post_max,
                    _ => stats.two_sided_change,
                };
                v.ok_or_else(|| Error::numerical(format!("{}: {} undefined", event.name, statistic.as_str())))?
            }
        };
        if !value.is_finite() {
            return Err(Error::numerical(format!("{}: {} is not finite", event.name, statistic.as_str())));
        }
        Ok(value)
    }

    pub fn pool_times(&self, scope: PoolScope) -> Vec<DateTime<Utc>> {
        match scope {
            PoolScope::AnalyzedToken => self.signed.iter().map(|s| s.trade.timestamp).collect(),
            PoolScope::AnyToken => self.trades.iter().map(|t| t.timestamp).collect(),
        }
    }
}

/// Share of usable draws below which a result carries a warning.
pub const MIN_USABLE_SHARE: f64 = 0.5;

/// The test for `spec.statistic` at one event; `real_events` are all events
/// of the study, each excluded from the pool. Failures at pseudo-times are
/// dropped draws; a failure at the real event is an error.
pub fn placebo_for_event(
    ctx: &StatContext<'_>,
    event: &EventSpec,
    real_events: &[DateTime<Utc>],
    spec: &PlaceboSpec,
) -> Result<PlaceboResult> {
    spec.validate()?;
    let ctx_err = |e: Error| e.context("placebo", format!("{} {}", event.name, spec.statistic.as_str()));
    let span = ctx.span().ok_or_else(|| ctx_err(Error::data("no trades")))?;
    let real = ctx.evaluate(spec.statistic, event).map_err(ctx_err)?;
    let pool = placebo_pool(&ctx.pool_times(spec.pool), span, real_events, event.event_time, ctx.width, spec.exclusion);
    let seed = spec.stream_seed(&event.name);
    let draws = draw_pseudo_events(&pool, spec.draws, seed).map_err(ctx_err)?;
    for d in &draws {
        assert!(real_events.iter().all(|e| (*d - *e).abs() >= spec.exclusion), "draw inside an exclusion window");
    }
    // Each distinct instant is computed once.
    let unique: Vec<DateTime<Utc>> = draws.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let values: BTreeMap<DateTime<Utc>, Option<f64>> = unique
        .par_iter()
        .map(|t| (*t, ctx.evaluate(spec.statistic, &event.at(*t)).ok()))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let all: Vec<f64> = draws.iter().map(|t| values[t].unwrap_or(f64::NAN)).collect();
    let p = randomization_p(real, &all);
    let warning = (p.usable < (MIN_USABLE_SHARE * spec.draws as f64).ceil() as usize)
        .then(|| format!("{} {}: only {} of {} placebo draws usable", event.name, spec.statistic.as_str(), p.usable, spec.draws));
    Ok(PlaceboResult {
        event: event.name.clone(),
        statistic: spec.statistic,
        real,
        placebo: all.into_iter().filter(|x| x.is_finite()).collect(),
        draws,
        dropped: p.dropped,
        pool_size: pool.len(),
        p_value: p.p,
        seed,
        warning,
    })
}

/// [`placebo_for_event`] at every event, each excluding all of them.
pub fn run_placebo_suite(ctx: &StatContext<'_>, events: &[EventSpec], spec: &PlaceboSpec) -> Result<Vec<PlaceboResult>> {
    let real_times: Vec<DateTime<Utc>> = events.iter().map(|e| e.event_time).collect();
    events.iter().map(|e| placebo_for_event(ctx, e, &real_times, spec)).collect()
}

/// CSV: `event,statistic,real_value,p_value,usable_draws,seed`.
pub fn write_placebo_csv<W: Write>(sink: W, results: &[PlaceboResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["event", "statistic", "real_value", "p_value", "usable_draws", "seed"])?;
    for r in results {
        w.write_record([
            r.event.clone(),
            r.statistic.as_str().to_string(),
            r.real.to_string(),
            r.p_value.to_string(),
            r.usable().to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("placebo.csv", e))?;
    Ok(())
}

/// Per-draw dump of usable placebo values: `event,statistic,value`.
pub fn write_placebo_draws_csv<W: Write>(sink: W, results: &[PlaceboResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["event", "statistic", "value"])?;
    for r in results {
        for v in &r.placebo {
            w.write_record([r.event.as_str(), r.statistic.as_str(), &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("placebo_draws.csv", e))?;
    Ok(())
}
