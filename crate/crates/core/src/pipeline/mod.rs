//! End-to-end runs from a [`RunConfig`]: loads the inputs once, runs the
//! requested stages over every event and token, and writes the artifact
//! tree with its manifest.

mod config;
pub mod figures;
mod output;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, TimeDelta, Utc};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    DiagnosticsConfig, EventEntry, ImpactConfig, PlaceboConfig, RegressConfig, RunConfig, WindowsConfig,
};
pub use output::{read_manifest, sha256_file, FileEntry, Incomplete, Manifest, Outputs, MANIFEST};

use crate::diagnostics::{post_event_stats, returns_from, stats_bin_range, two_sidedness, variance_ratio, write_two_sided_csv, write_vr_csv};
use crate::error::{Error, Result};
use crate::eventstudy::{run_event_study, write_caa_csv, write_newcomers_csv, EventStudy};
use crate::heterogeneity::{
    build_characteristics, build_panel, drop_perfect_predictors, exposure_snapshots, fit_logit, fit_panel_fe, fit_pooled_ols,
    interaction_name,
    market_counts, render_characteristics_table, render_regression_table, write_characteristics_csv, write_regression_csv,
    Characteristic, FlipData, PanelOutcome, PriceIndex, RegressionFit, TraderCharacteristics,
};
use crate::impact::{rolling_estimates, Estimator, ImpactEstimate, LogOddsSeries};
use crate::ingest::{
    flag_addresses, parse_trades_path, read_address_list, read_transfer_pairs, Address, AddressProfile, AuxiliarySets,
    TradeRecord, Token,
};
use crate::placebo::{placebo_for_event, write_placebo_csv, write_placebo_draws_csv, PlaceboResult, PlaceboSpec, StatContext};
use crate::series::{build_bin_series, classify_ticks, price_response_summary, render_price_table, write_bins_csv, EventSpec, SignedTrade};
use figures::{event_chart, histogram, Line, Panel};

/// Pipeline stages in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Series,
    EventStudy,
    Regress,
    Impact,
    Diagnostics,
    Placebo,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Series, Stage::EventStudy, Stage::Regress, Stage::Impact, Stage::Diagnostics, Stage::Placebo];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Series => "series",
            Stage::EventStudy => "eventstudy",
            Stage::Regress => "regress",
            Stage::Impact => "impact",
            Stage::Diagnostics => "diagnostics",
            Stage::Placebo => "placebo",
        }
    }
}

/// Parsed inputs shared by all stages.
#[derive(Debug)]
pub struct Session {
    pub config: RunConfig,
    pub trades: Vec<TradeRecord>,
    pub rejected: Vec<crate::error::RowError>,
    pub profiles: BTreeMap<Address, AddressProfile>,
    pub events: Vec<EventSpec>,
    pub tokens: Vec<Token>,
    /// Input label to SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
}

impl Session {
    /// Validates the config, parses the trade log (malformed rows are kept
    /// aside), reads the side inputs and flags addresses.
    pub fn load(config: &RunConfig) -> Result<Session> {
        config.validate()?;
        let parsed = parse_trades_path(&config.trades)?;
        if parsed.trades.is_empty() {
            return Err(Error::data(format!("{}: no valid trades", config.trades.display())));
        }
        let mut aux = AuxiliarySets::default();
        let mut inputs = BTreeMap::new();
        inputs.insert("trades".to_string(), sha256_file(&config.trades)?);
        if let Some(p) = &config.platform_addresses {
            aux.known_platform = read_address_list(p)?;
            inputs.insert("platform_addresses".into(), sha256_file(p)?);
        }
        if let Some(p) = &config.conversion_actors {
            aux.conversion_actors = read_address_list(p)?;
            inputs.insert("conversion_actors".into(), sha256_file(p)?);
        }
        if let Some(p) = &config.transfer_pairs {
            aux.offexchange_transfers = read_transfer_pairs(p)?;
            inputs.insert("transfer_pairs".into(), sha256_file(p)?);
        }
        let profiles = flag_addresses(&parsed.trades, &aux);
        Ok(Session {
            config: config.clone(),
            events: config.event_specs()?,
            tokens: config.token_list()?,
            trades: parsed.trades,
            rejected: parsed.rejected,
            profiles,
            inputs,
        })
    }

    pub fn width(&self) -> TimeDelta {
        self.config.width()
    }

    /// Tick-signed trades of one token, over the whole sample, for prices and
    /// flow. Operator-taken trades are left out when so configured.
    pub fn signed(&self, token: &Token) -> Vec<SignedTrade<'_>> {
        let exclude = self.config.exclude_operators_from_prices;
        let iter = self.trades.iter().filter(|t| t.is_token(token)).filter(|t| {
            !exclude || !self.profiles.get(&t.taker).is_some_and(|p| p.is_advanced_operator)
        });
        classify_ticks(iter, self.config.tick())
    }

    fn signed_all(&self) -> Vec<(Token, Vec<SignedTrade<'_>>)> {
        self.tokens.par_iter().map(|t| (t.clone(), self.signed(t))).collect()
    }
}

/// Result of a run: the written manifest plus the first stage error, if
/// any, which determines the exit status.
#[derive(Debug)]
pub struct RunReport {
    pub manifest: Manifest,
    pub error: Option<Error>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, Error::exit_code)
    }
}

/// Runs `stages` (in pipeline order) and writes the manifest. Config and
/// input errors abort before anything is written; stage errors are recorded
/// as incomplete entries and the remaining work continues.
pub fn run(config: &RunConfig, stages: &[Stage]) -> Result<RunReport> {
    let session = Session::load(config)?;
    let out = Outputs::new(&config.output_dir)?;
    let stages: BTreeSet<Stage> = stages.iter().copied().collect();
    out.write("config.toml", config.to_toml().as_bytes())?;
    if !session.rejected.is_empty() {
        out.warn(format!("{} malformed trade row(s) skipped; first: {}", session.rejected.len(), session.rejected[0]));
    }
    if stages.contains(&Stage::Ingest) {
        out.guard("ingest", None, None, || ingest_stage(&session, &out));
    }
    let needs_signed = [Stage::Series, Stage::Impact, Stage::Diagnostics].iter().any(|s| stages.contains(s));
    let signed = if needs_signed { session.signed_all() } else { Vec::new() };
    if stages.contains(&Stage::Series) {
        series_stage(&session, &signed, &out);
    }
    if stages.contains(&Stage::EventStudy) || stages.contains(&Stage::Regress) {
        let studies = eventstudy_stage(&session, &out, stages.contains(&Stage::EventStudy));
        if stages.contains(&Stage::Regress) {
            out.guard("regress", None, None, || regress_stage(&session, &studies, &out));
        }
    }
    if stages.contains(&Stage::Impact) {
        impact_stage(&session, &signed, &out);
    }
    if stages.contains(&Stage::Diagnostics) {
        diagnostics_stage(&session, &signed, &out);
    }
    if stages.contains(&Stage::Placebo) {
        placebo_stage(&session, &out);
    }
    let manifest = out.finish(&config.hash(), config.seed, session.inputs.clone())?;
    Ok(RunReport { manifest, error: out.take_first_error() })
}

fn token_dir(event: &str, token: &Token) -> String {
    format!("events/{event}/{token}")
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize)]
struct IngestSummary {
    trades: usize,
    rejected: usize,
    first_trade: DateTime<Utc>,
    last_trade: DateTime<Utc>,
    addresses: usize,
    platform: usize,
    advanced_operators: usize,
    clusters: usize,
    trades_per_token: BTreeMap<String, usize>,
}

fn ingest_stage(s: &Session, out: &Outputs) -> Result<()> {
    let mut per_token: BTreeMap<String, usize> = BTreeMap::new();
    for t in &s.trades {
        *per_token.entry(t.token().to_string()).or_default() += 1;
    }
    let clusters: BTreeSet<usize> = s.profiles.values().filter_map(|p| p.cluster_id).collect();
    let summary = IngestSummary {
        trades: s.trades.len(),
        rejected: s.rejected.len(),
        first_trade: s.trades[0].timestamp,
        last_trade: s.trades[s.trades.len() - 1].timestamp,
        addresses: s.profiles.len(),
        platform: s.profiles.values().filter(|p| p.is_platform).count(),
        advanced_operators: s.profiles.values().filter(|p| p.is_advanced_operator).count(),
        clusters: clusters.len(),
        trades_per_token: per_token,
    };
    out.write("ingest/summary.json", &json(&summary))?;
    out.write_with("ingest/flagged_addresses.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["address", "platform", "advanced_operator", "cluster_id", "first_trade"])?;
        for p in s.profiles.values().filter(|p| p.is_platform || p.is_advanced_operator) {
            w.write_record([
                p.address.to_string(),
                (p.is_platform as u8).to_string(),
                (p.is_advanced_operator as u8).to_string(),
                p.cluster_id.map(|c| c.to_string()).unwrap_or_default(),
                p.first_trade_time.map(|t| t.to_rfc3339()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<flagged csv>", e))
    })?;
    if !s.rejected.is_empty() {
        out.write_with("ingest/rejected.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["line", "reason"])?;
            for r in &s.rejected {
                w.write_record([r.line.to_string(), r.message.clone()])?;
            }
            w.flush().map_err(|e| Error::io("<rejected csv>", e))
        })?;
    }
    Ok(())
}

fn series_stage(s: &Session, signed: &[(Token, Vec<SignedTrade<'_>>)], out: &Outputs) {
    let width = s.width();
    let rows: Vec<Vec<(String, crate::series::PriceResponse)>> = s
        .events
        .par_iter()
        .map(|ev| {
            let mut rows = Vec::new();
            for (token, trades) in signed {
                let tok = token.to_string();
                let done = out.guard("series", Some(&ev.name), Some(&tok), || {
                    let series = build_bin_series(trades, ev, ev.price_window.bins(width), width)?;
                    let dir = token_dir(&ev.name, token);
                    out.write_with(&format!("{dir}/bins.csv"), |b| write_bins_csv(b, std::slice::from_ref(&series)))?;
                    let price = Line {
                        label: "VWAP".into(),
                        points: series.bins.iter().filter_map(|b| b.vwap.map(|p| (b.k as f64, p))).collect(),
                        band: Vec::new(),
                    };
                    let panels = [
                        Panel { title: format!("{tok} price"), lines: vec![price], ..Panel::default() },
                        Panel {
                            title: "Volume (USDC)".into(),
                            bars: series.bins.iter().map(|b| (b.k as f64, b.volume_usdc)).collect(),
                            ..Panel::default()
                        },
                    ];
                    out.write(&format!("{dir}/price_volume.svg"), event_chart(&ev.name, "5-minute bins from event", &panels).as_bytes())?;
                    price_response_summary(&series)
                });
                if let Some(r) = done {
                    let label = if s.tokens.len() == 1 { ev.name.clone() } else { format!("{} {tok}", ev.name) };
                    rows.push((label, r));
                }
            }
            rows
        })
        .collect();
    let rows: Vec<_> = rows.into_iter().flatten().collect();
    out.guard("series", None, None, || {
        out.write("tables/price_response.txt", render_price_table(&rows).as_bytes())?;
        out.write_with("tables/price_response.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["event", "pre", "peak", "trough", "end", "peak_delta", "trough_delta", "total_delta"])?;
            for (name, r) in &rows {
                let vals = [r.pre, r.peak, r.trough, r.end, r.peak_delta, r.trough_delta, r.total_delta];
                let mut rec = vec![name.clone()];
                rec.extend(vals.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io("<price csv>", e))
        })
    });
}

/// Runs the event study at every event; writes its artifacts when `write`.
fn eventstudy_stage(s: &Session, out: &Outputs, write: bool) -> Vec<Option<EventStudy>> {
    let width = s.width();
    s.events
        .par_iter()
        .map(|ev| {
            out.guard("eventstudy", Some(&ev.name), None, || {
                let study = run_event_study(&s.trades, &s.profiles, ev, width, &s.config.eventstudy)?;
                if write {
                    let dir = format!("events/{}", ev.name);
                    out.write_with(&format!("{dir}/caa.csv"), |b| write_caa_csv(b, &ev.name, &study.caa))?;
                    out.write_with(&format!("{dir}/newcomers.csv"), |b| write_newcomers_csv(b, &ev.name, &study.newcomers))?;
                    let mut panels: Vec<Panel> = study
                        .caa
                        .iter()
                        .map(|(o, path)| Panel {
                            title: format!("CAA {}", o.as_str()),
                            lines: vec![Line {
                                label: String::new(),
                                points: path.iter().map(|p| (p.k as f64, p.caa)).collect(),
                                band: path.iter().map(|p| (p.k as f64, p.lo95, p.hi95)).collect(),
                            }],
                            reference: Some(0.0),
                            ..Panel::default()
                        })
                        .collect();
                    panels.push(Panel {
                        title: "Newcomers".into(),
                        bars: study.newcomers.iter().map(|(k, n)| (*k as f64, *n as f64)).collect(),
                        ..Panel::default()
                    });
                    out.write(&format!("{dir}/caa.svg"), event_chart(&ev.name, "5-minute bins from event", &panels).as_bytes())?;
                }
                Ok(study)
            })
        })
        .collect()
}

/// Drops characteristics that take a single value across `rows`; they are
/// collinear with the fixed effects or the intercept.
fn varying(wanted: &[Characteristic], rows: &[&TraderCharacteristics]) -> (Vec<Characteristic>, Vec<Characteristic>) {
    wanted.iter().partition(|c| {
        let mut seen = [false; 2];
        for r in rows {
            seen[r.get(**c) as usize] = true;
        }
        seen[0] && seen[1]
    })
}

fn omitted_note(omitted: &[Characteristic]) -> String {
    if omitted.is_empty() {
        String::new()
    } else {
        let names: Vec<&str> = omitted.iter().map(|c| c.as_str()).collect();
        format!("Omitted (no variation): {}\n", names.join(", "))
    }
}

fn columns(v: &[(String, RegressionFit)]) -> Vec<(String, &RegressionFit)> {
    v.iter().map(|(n, f)| (n.clone(), f)).collect()
}

fn regress_stage(s: &Session, studies: &[Option<EventStudy>], out: &Outputs) -> Result<()> {
    let width = s.width();
    let prices = PriceIndex::build(&s.trades);
    let markets = market_counts(&s.trades);
    let mut used: Vec<(&EventStudy, Vec<TraderCharacteristics>, std::ops::RangeInclusive<i64>)> = Vec::new();
    let mut flips = FlipData::default();
    for (ev, study) in s.events.iter().zip(studies) {
        let Some(study) = study else { continue };
        let traders = &study.grid.traders;
        let times = [ev.event_time, ev.event_time + ev.trading_window.post];
        let snaps = exposure_snapshots(&s.trades, traders, &times);
        let chars = build_characteristics(&s.trades, &prices, &markets, traders, &snaps[0], ev, width, &s.config.characteristics);
        let index: HashMap<&Address, usize> = traders.iter().enumerate().map(|(i, a)| (a, i)).collect();
        let post: Vec<f64> = chars.iter().map(|c| snaps[1][index[&c.trader]]).collect();
        flips.push_event(&chars, &post);
        used.push((study, chars, ev.trading_window.bins(width)));
    }
    if used.is_empty() {
        return Err(Error::data("no event has an event study to regress on"));
    }
    let all_chars: Vec<TraderCharacteristics> = used.iter().flat_map(|u| u.1.iter().cloned()).collect();
    out.write("tables/characteristics.txt", render_characteristics_table(&all_chars).as_bytes())?;
    out.write_with("tables/characteristics.csv", |b| write_characteristics_csv(b, &all_chars))?;
    let refs: Vec<&TraderCharacteristics> = all_chars.iter().collect();
    let (interactions, omitted) = varying(&s.config.interactions()?, &refs);

    let pairs: Vec<(&EventStudy, &[TraderCharacteristics])> = used.iter().map(|u| (u.0, u.1.as_slice())).collect();
    let windows: Vec<_> = used.iter().map(|u| u.2.clone()).collect();
    let mut fe: Vec<(String, RegressionFit)> = Vec::new();
    let mut ols: Vec<(String, RegressionFit)> = Vec::new();
    for outcome in PanelOutcome::ALL {
        let panel = build_panel(&pairs, &windows, outcome);
        let name = outcome.as_str();
        if let Some(f) = out.guard("regress", None, None, || fit_panel_fe(&panel, &interactions).map_err(|e| e.context("heterogeneity", format!("panel {name}")))) {
            out.write_with(&format!("regress/panel_fe_{name}.csv"), |b| write_regression_csv(b, &f))?;
            fe.push((name.to_string(), f));
        }
        if let Some(f) = out.guard("regress", None, None, || fit_pooled_ols(&panel, &interactions).map_err(|e| e.context("heterogeneity", format!("pooled {name}")))) {
            out.write_with(&format!("regress/pooled_ols_{name}.csv"), |b| write_regression_csv(b, &f))?;
            ols.push((name.to_string(), f));
        }
    }
    let note = omitted_note(&omitted);
    let fe_terms: Vec<String> = interactions.iter().map(|c| interaction_name(*c)).collect();
        out.write("tables/panel_fe.txt", format!("{}{note}", render_regression_table(&columns(&fe), &fe_terms)).as_bytes())?;
    let mut ols_terms: Vec<String> = Vec::new();
    if let Some((_, f)) = ols.first() {
        ols_terms = f.terms.clone();
    }
    out.write("tables/pooled_ols.txt", format!("{}{note}", render_regression_table(&columns(&ols), &ols_terms)).as_bytes())?;
    for (_, f) in fe.iter().chain(&ols) {
        for w in &f.warnings {
            out.warn(format!("regress: {w}"));
        }
    }

    out.write_with("regress/flips.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["event", "trader", "exposure_pre", "exposure_post", "flipped"])?;
        for r in &flips.rows {
            w.write_record([r.event.clone(), r.trader.to_string(), r.exposure_pre.to_string(), r.exposure_post.to_string(), (r.flipped as u8).to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<flips csv>", e))
    })?;
    let flip_refs: Vec<&TraderCharacteristics> = flips.chars.iter().collect();
    let (flip_chars, flip_omitted) = varying(&s.config.flip_characteristics()?, &flip_refs);
    let flipped = flips.rows.iter().filter(|r| r.flipped).count();
    if flipped == 0 || flipped == flips.rows.len() {
        return Err(Error::numerical(format!("{flipped} of {} trader-event rows flipped", flips.rows.len()))
            .context("heterogeneity", "flip logit"));
    }
    let (flips, flip_chars, perfect) = drop_perfect_predictors(&flips, &flip_chars);
    let logit = fit_logit(&flips, &flip_chars).map_err(|e| e.context("heterogeneity", "flip logit"))?;
    out.write_with("regress/logit_flips.csv", |b| write_regression_csv(b, &logit))?;
    let mut table = render_regression_table(&[("flip".to_string(), &logit)], &logit.terms);
    table.push_str(&omitted_note(&flip_omitted));
    for p in &perfect {
        table.push_str(&format!(
            "Omitted: {} = {} predicts flip = {} perfectly ({} rows dropped)\n",
            p.characteristic.as_str(),
            p.level as u8,
            p.outcome as u8,
            p.rows
        ));
    }
    out.write("tables/logit_flips.txt", table.as_bytes())?;
    for w in &logit.warnings {
        out.warn(format!("regress: flip logit {w}"));
    }
    Ok(())
}

fn impact_chart(title: &str, kyle: &[(i64, ImpactEstimate)], gh: &[(i64, ImpactEstimate)]) -> String {
    let line = |label: &str, v: &[(i64, ImpactEstimate)], param: &str| {
        let ps: Vec<(f64, &crate::impact::ParamEstimate)> =
            v.iter().filter_map(|(k, e)| e.param(param).map(|p| (*k as f64, p))).collect();
        Line {
            label: label.into(),
            points: ps.iter().map(|(k, p)| (*k, p.estimate)).collect(),
            band: ps.iter().map(|(k, p)| (*k, p.lo95, p.hi95)).collect(),
        }
    };
    let panels = [
        Panel { title: "Rolling Kyle lambda".into(), lines: vec![line("lambda", kyle, "lambda")], reference: Some(0.0), ..Panel::default() },
        Panel {
            title: "Rolling Glosten-Harris".into(),
            lines: vec![line("permanent", gh, "lambda_perm"), line("transitory", gh, "lambda_trans")],
            reference: Some(0.0),
            ..Panel::default()
        },
    ];
    event_chart(title, "window anchor bin", &panels)
}

fn impact_stage(s: &Session, signed: &[(Token, Vec<SignedTrade<'_>>)], out: &Outputs) {
    let width = s.width();
    let cfg = &s.config.impact;
    let jobs: Vec<(&EventSpec, &Token, &[SignedTrade<'_>])> =
        s.events.iter().flat_map(|e| signed.iter().map(move |(t, v)| (e, t, v.as_slice()))).collect();
    jobs.par_iter().for_each(|(ev, token, trades)| {
        let tok = token.to_string();
        out.guard("impact", Some(&ev.name), Some(&tok), || {
            let series = build_bin_series(trades, ev, ev.price_window.bins(width), width)?;
            let lo = LogOddsSeries::from_bins(&series);
            if lo.clamped > 0 {
                out.warn(format!("impact {} {tok}: {} price(s) clamped before log-odds", ev.name, lo.clamped));
            }
            let pick = |f: fn(i64) -> bool| -> Vec<_> { lo.points.iter().filter(|p| f(p.k)).copied().collect() };
            let windows = [pick(|_| true), pick(|k| k <= 0), pick(|k| k >= 1)];
            let mut estimates = Vec::new();
            for pts in &windows {
                for est in [Estimator::Kyle, Estimator::GlostenHarris] {
                    estimates.push(est.fit_with(pts, cfg.hac())?);
                }
            }
            let dir = token_dir(&ev.name, token);
            out.write_with(&format!("{dir}/impact.csv"), |b| crate::impact::write_estimates_csv(b, &ev.name, &estimates))?;
            let kyle = rolling_estimates(&lo, cfg.rolling(), Estimator::Kyle);
            let gh = rolling_estimates(&lo, cfg.rolling(), Estimator::GlostenHarris);
            let flat = |r: &crate::impact::RollingEstimates| -> Vec<(i64, ImpactEstimate)> {
                r.points.iter().map(|p| (p.anchor_k, p.estimate.clone())).collect()
            };
            let (kyle, gh) = (flat(&kyle), flat(&gh));
            let rolled: Vec<ImpactEstimate> = kyle.iter().chain(&gh).map(|(_, e)| e.clone()).collect();
            out.write_with(&format!("{dir}/rolling.csv"), |b| crate::impact::write_estimates_csv(b, &ev.name, &rolled))?;
            out.write(&format!("{dir}/impact.svg"), impact_chart(&format!("{} {tok}", ev.name), &kyle, &gh).as_bytes())?;
            Ok(())
        });
    });
}

const VR_BAND: &str = "vr +/- 1.96 * sqrt(2(2q-1)(q-1) / (3qT)), q = horizon, T = returns in the trailing window (i.i.d. homoskedastic null)";

#[derive(Serialize)]
struct DiagnosticsSummary {
    #[serde(flatten)]
    stats: crate::diagnostics::PostEventStats,
    vr_horizon: usize,
    vr_window: usize,
    vr_band: &'static str,
    two_sided_smoothing_bins: usize,
}

fn diagnostics_stage(s: &Session, signed: &[(Token, Vec<SignedTrade<'_>>)], out: &Outputs) {
    let width = s.width();
    let vr_cfg = s.config.diagnostics.vr();
    let windows = s.config.diagnostics.windows();
    let jobs: Vec<(&EventSpec, &Token, &[SignedTrade<'_>])> =
        s.events.iter().flat_map(|e| signed.iter().map(move |(t, v)| (e, t, v.as_slice()))).collect();
    jobs.par_iter().for_each(|(ev, token, trades)| {
        let tok = token.to_string();
        out.guard("diagnostics", Some(&ev.name), Some(&tok), || {
            let series = build_bin_series(trades, ev, stats_bin_range(ev, width, vr_cfg), width)?;
            let shown = ev.price_window.bins(width);
            let lo = LogOddsSeries::from_bins(&series);
            let mut vr = variance_ratio(&returns_from(&lo, vr_cfg.drop_stale_returns), vr_cfg);
            vr.points.retain(|p| shown.contains(&p.k));
            vr.gaps.retain(|k| shown.contains(k));
            let mut ts = two_sidedness(&series);
            ts.retain(|p| shown.contains(&p.k));
            let stats = post_event_stats(&series, vr_cfg, windows)?;
            let dir = token_dir(&ev.name, token);
            out.write_with(&format!("{dir}/vr.csv"), |b| write_vr_csv(b, &ev.name, &vr))?;
            out.write_with(&format!("{dir}/two_sided.csv"), |b| write_two_sided_csv(b, &ev.name, &ts, true))?;
            out.write_with(&format!("{dir}/two_sided_raw.csv"), |b| write_two_sided_csv(b, &ev.name, &ts, false))?;
            let summary = DiagnosticsSummary {
                stats,
                vr_horizon: vr_cfg.horizon,
                vr_window: vr_cfg.window,
                vr_band: VR_BAND,
                two_sided_smoothing_bins: crate::diagnostics::TWO_SIDED_SMOOTHING,
            };
            out.write(&format!("{dir}/post_event_stats.json"), &json(&summary))?;
            let panels = [
                Panel {
                    title: format!("Variance ratio VR({}), {}-bin trailing window", vr_cfg.horizon, vr_cfg.window),
                    lines: vec![Line {
                        label: String::new(),
                        points: vr.points.iter().map(|p| (p.k as f64, p.estimate.vr)).collect(),
                        band: vr.points.iter().map(|p| (p.k as f64, p.lo95, p.hi95)).collect(),
                    }],
                    reference: Some(1.0),
                    ..Panel::default()
                },
                Panel {
                    title: "Two-sidedness (3-bin trailing mean)".into(),
                    lines: vec![Line {
                        label: String::new(),
                        points: ts.iter().filter_map(|p| p.rolling.map(|v| (p.k as f64, v))).collect(),
                        band: Vec::new(),
                    }],
                    ..Panel::default()
                },
            ];
            out.write(&format!("{dir}/diagnostics.svg"), event_chart(&format!("{} {tok}", ev.name), "5-minute bins from event", &panels).as_bytes())?;
            Ok(())
        });
    });
}

fn placebo_stage(s: &Session, out: &Outputs) {
    let pc = &s.config.placebo;
    if !pc.enabled {
        return;
    }
    let token = s.tokens[0].clone();
    let mut ctx = StatContext::new(&s.trades, &s.profiles, token.clone(), s.width(), s.config.tick());
    ctx.signed = s.signed(&token);
    ctx.vr = s.config.diagnostics.vr();
    ctx.windows = s.config.diagnostics.windows();
    ctx.eventstudy = s.config.eventstudy;
    let real: Vec<DateTime<Utc>> = s.events.iter().map(|e| e.event_time).collect();
    let tok = token.to_string();
    let mut results: Vec<PlaceboResult> = Vec::new();
    for ev in &s.events {
        for stat in &pc.statistics {
            let spec = PlaceboSpec {
                statistic: *stat,
                draws: pc.draws,
                exclusion: TimeDelta::hours(pc.exclusion_hours),
                seed: s.config.seed,
                pool: pc.pool,
            };
            if let Some(r) = out.guard("placebo", Some(&ev.name), Some(&tok), || placebo_for_event(&ctx, ev, &real, &spec)) {
                if let Some(w) = &r.warning {
                    out.warn(format!("placebo: {w}"));
                }
                results.push(r);
            }
        }
    }
    out.guard("placebo", None, Some(&tok), || {
        out.write_with("placebo/placebo.csv", |b| write_placebo_csv(b, &results))?;
        out.write_with("placebo/draws.csv", |b| write_placebo_draws_csv(b, &results))?;
        for r in &results {
            let title = format!("{} {}: observed {:.4}, p = {:.4}", r.event, r.statistic.as_str(), r.real, r.p_value);
            let svg = histogram(&title, &r.placebo, r.real, 30);
            out.write(&format!("placebo/{}_{}.svg", r.event, r.statistic.as_str()), svg.as_bytes())?;
        }
        Ok(())
    });
}

/// Subcommand name to the stages it runs.
pub fn stages_for(command: &str) -> Option<Vec<Stage>> {
    Some(match command {
        "run-all" => Stage::ALL.to_vec(),
        "ingest" => vec![Stage::Ingest],
        "series" => vec![Stage::Series],
        "eventstudy" => vec![Stage::EventStudy],
        "regress" => vec![Stage::Regress],
        "impact" => vec![Stage::Impact],
        "diagnostics" => vec![Stage::Diagnostics],
        "placebo" => vec![Stage::Placebo],
        _ => return None,
    })
}
