//! Trader characteristics and the three cross-trader designs: a stacked
//! two-way fixed-effects panel, pooled OLS with event effects, and a logit
//! model of position flips.

mod characteristics;
mod regress;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use characteristics::{
    above_median, build_characteristics, exposure_snapshots, market_counts, pearson, render_characteristics_table,
    write_characteristics_csv, Characteristic, CharacteristicsConfig, PriceIndex, TraderCharacteristics,
};
pub use regress::{
    demean_two_way, detect_flips, fit_logit_raw, fit_ols_clustered, fit_two_way_fe, render_regression_table,
    write_regression_csv, FitSummary, Model, RegressionFit, FE_TOLERANCE, LOGIT_MAX_ITER, LOGIT_SCORE_TOLERANCE,
    NEAR_SEPARATION_WARNING, SEPARATION_BOUND,
};

use crate::error::{Error, Result};
use crate::eventstudy::{asinh, EventStudy};
use crate::ingest::Address;

/// Panel outcome per trader-bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelOutcome {
    AsinhVolume,
    AsinhFrequency,
    Participation,
}

impl PanelOutcome {
    pub const ALL: [PanelOutcome; 3] = [PanelOutcome::AsinhVolume, PanelOutcome::AsinhFrequency, PanelOutcome::Participation];

    pub fn as_str(self) -> &'static str {
        match self {
            PanelOutcome::AsinhVolume => "asinh_volume",
            PanelOutcome::AsinhFrequency => "asinh_frequency",
            PanelOutcome::Participation => "participation",
        }
    }
}

/// Stacked trader × event × bin cells over the trading window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelData {
    pub y: Vec<f64>,
    pub trader: Vec<usize>,
    pub event: Vec<usize>,
    pub bin: Vec<i64>,
    /// One column per characteristic, aligned with the cells.
    pub chars: BTreeMap<Characteristic, Vec<f64>>,
    pub trader_ids: Vec<Address>,
    pub event_names: Vec<String>,
}

impl PanelData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Bins at and after the event.
    pub fn post(&self, i: usize) -> f64 {
        (self.bin[i] >= 0) as u8 as f64
    }

    /// Trader-event entity label.
    pub fn entity(&self, i: usize) -> usize {
        self.trader[i] * self.event_names.len().max(1) + self.event[i]
    }
}

fn trader_index(ids: &mut Vec<Address>, map: &mut BTreeMap<Address, usize>, a: &Address) -> usize {
    *map.entry(a.clone()).or_insert_with(|| {
        ids.push(a.clone());
        ids.len() - 1
    })
}

/// Joins each event study's trader grid with that event's characteristics.
/// Traders without characteristics are left out.
pub fn build_panel(studies: &[(&EventStudy, &[TraderCharacteristics])], window: &[std::ops::RangeInclusive<i64>], outcome: PanelOutcome) -> PanelData {
    let mut p = PanelData::default();
    let mut map = BTreeMap::new();
    for c in Characteristic::ALL {
        p.chars.insert(c, Vec::new());
    }
    for (e, ((study, chars), bins)) in studies.iter().zip(window).enumerate() {
        p.event_names.push(study.event.clone());
        let by_trader: BTreeMap<&Address, &TraderCharacteristics> = chars.iter().map(|c| (&c.trader, c)).collect();
        for (i, addr) in study.grid.traders.iter().enumerate() {
            let Some(ch) = by_trader.get(addr) else { continue };
            let t = trader_index(&mut p.trader_ids, &mut map, addr);
            for k in bins.clone() {
                let y = match outcome {
                    PanelOutcome::AsinhVolume => asinh(study.grid.volume(i, k)),
                    PanelOutcome::AsinhFrequency => asinh(study.grid.frequency(i, k) as f64),
                    PanelOutcome::Participation => study.grid.participation(i, k),
                };
                p.y.push(y);
                p.trader.push(t);
                p.event.push(e);
                p.bin.push(k);
                for c in Characteristic::ALL {
                    p.chars.get_mut(&c).unwrap().push(ch.get(c) as u8 as f64);
                }
            }
        }
    }
    p
}

pub fn interaction_name(c: Characteristic) -> String {
    format!("post_x_{}", c.as_str())
}

/// `y = a_ie + g_t + sum_c b_c (post x c) + e`, clustered by trader-event.
pub fn fit_panel_fe(panel: &PanelData, interactions: &[Characteristic]) -> Result<RegressionFit> {
    if panel.is_empty() {
        return Err(Error::data("empty panel"));
    }
    let n = panel.len();
    let x = DMatrix::from_fn(n, interactions.len(), |i, j| panel.post(i) * panel.chars[&interactions[j]][i]);
    let names: Vec<String> = interactions.iter().map(|c| interaction_name(*c)).collect();
    let entity: Vec<usize> = (0..n).map(|i| panel.entity(i)).collect();
    let bins: Vec<usize> = panel.bin.iter().map(|k| (k - panel.bin.iter().min().unwrap()) as usize).collect();
    fit_two_way_fe(&panel.y, &x, &names, &entity, &bins, &entity)
}

/// Event dummies, characteristic main effects, `post`, and the
/// post interactions; clustered by trader.
pub fn fit_pooled_ols(panel: &PanelData, chars: &[Characteristic]) -> Result<RegressionFit> {
    if panel.is_empty() {
        return Err(Error::data("empty panel"));
    }
    let n = panel.len();
    let ne = panel.event_names.len();
    let mut names: Vec<String> = panel.event_names.iter().map(|e| format!("event[{e}]")).collect();
    names.extend(chars.iter().map(|c| c.as_str().to_string()));
    names.push("post".into());
    names.extend(chars.iter().map(|c| interaction_name(*c)));
    let k = names.len();
    let x = DMatrix::from_fn(n, k, |i, j| {
        if j < ne {
            (panel.event[i] == j) as u8 as f64
        } else if j < ne + chars.len() {
            panel.chars[&chars[j - ne]][i]
        } else if j == ne + chars.len() {
            panel.post(i)
        } else {
            panel.post(i) * panel.chars[&chars[j - ne - chars.len() - 1]][i]
        }
    });
    fit_ols_clustered(&panel.y, &x, &names, &panel.trader)
}

/// One row per trader-event of the flip model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipRow {
    pub trader: Address,
    pub event: String,
    pub exposure_pre: f64,
    pub exposure_post: f64,
    pub flipped: bool,
}

/// Flip outcomes with each row's characteristics.
#[derive(Debug, Clone, Default)]
pub struct FlipData {
    pub rows: Vec<FlipRow>,
    pub chars: Vec<TraderCharacteristics>,
}

impl FlipData {
    /// `chars` aligned with `post_exposure`; pre-event exposure is taken
    /// from the characteristics.
    pub fn push_event(&mut self, chars: &[TraderCharacteristics], post_exposure: &[f64]) {
        for (c, post) in chars.iter().zip(post_exposure) {
            self.rows.push(FlipRow {
                trader: c.trader.clone(),
                event: c.event.clone(),
                exposure_pre: c.net_trump_win,
                exposure_post: *post,
                flipped: detect_flips(c.net_trump_win, *post),
            });
            self.chars.push(c.clone());
        }
    }
}

/// A binary regressor one of whose levels has a constant outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfectPredictor {
    pub characteristic: Characteristic,
    pub level: bool,
    pub outcome: bool,
    pub rows: usize,
}

/// Repeatedly removes characteristics with a level whose rows all share
/// one flip outcome, together with those rows, since their logit
/// coefficient has no finite maximum. Returns the kept data and regressors.
pub fn drop_perfect_predictors(data: &FlipData, chars: &[Characteristic]) -> (FlipData, Vec<Characteristic>, Vec<PerfectPredictor>) {
    let mut data = data.clone();
    let mut kept = chars.to_vec();
    let mut dropped = Vec::new();
    loop {
        let hit = kept.iter().enumerate().find_map(|(j, c)| {
            [false, true].into_iter().find_map(|level| {
                let ys: Vec<bool> = data.rows.iter().zip(&data.chars).filter(|(_, ch)| ch.get(*c) == level).map(|(r, _)| r.flipped).collect();
                let constant = !ys.is_empty() && ys.iter().all(|y| *y == ys[0]);
                constant.then(|| (j, PerfectPredictor { characteristic: *c, level, outcome: ys[0], rows: ys.len() }))
            })
        });
        let Some((j, p)) = hit else { break };
        let keep: Vec<bool> = data.chars.iter().map(|ch| ch.get(p.characteristic) != p.level).collect();
        let mut it = keep.iter();
        data.rows.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        data.chars.retain(|_| *it.next().unwrap());
        kept.remove(j);
        dropped.push(p);
    }
    (data, kept, dropped)
}

/// Logit of the flip indicator on an intercept, characteristics and event
/// dummies (first event as reference), clustered by trader.
pub fn fit_logit(data: &FlipData, chars: &[Characteristic]) -> Result<RegressionFit> {
    let n = data.rows.len();
    if n == 0 {
        return Err(Error::data("no trader-event rows for the flip model"));
    }
    let mut events: Vec<&str> = Vec::new();
    for r in &data.rows {
        if !events.contains(&r.event.as_str()) {
            events.push(&r.event);
        }
    }
    let mut names = vec!["const".to_string()];
    names.extend(chars.iter().map(|c| c.as_str().to_string()));
    names.extend(events.iter().skip(1).map(|e| format!("event[{e}]")));
    let nc = chars.len();
    let x = DMatrix::from_fn(n, names.len(), |i, j| {
        if j == 0 {
            1.0
        } else if j <= nc {
            data.chars[i].get(chars[j - 1]) as u8 as f64
        } else {
            (data.rows[i].event == events[j - nc]) as u8 as f64
        }
    });
    let y: Vec<f64> = data.rows.iter().map(|r| r.flipped as u8 as f64).collect();
    let mut ids: BTreeMap<&Address, usize> = BTreeMap::new();
    let clusters: Vec<usize> = data
        .rows
        .iter()
        .map(|r| {
            let n = ids.len();
            *ids.entry(&r.trader).or_insert(n)
        })
        .collect();
    fit_logit_raw(&y, &x, &names, &clusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(trader: &str, event: &str, neg: bool, vol: bool, exposure: f64) -> TraderCharacteristics {
        TraderCharacteristics {
            trader: trader.into(),
            event: event.into(),
            trad_vol_high: vol,
            trad_freq_high: false,
            trad_int_multi: false,
            neg_trump_win: neg,
            single_market: false,
            contrarian: false,
            momentum: false,
            net_trump_win: exposure,
        }
    }

    #[test]
    fn flip_rows_follow_rule() {
        let mut d = FlipData::default();
        d.push_event(&[ch("a", "e", false, false, 10.0), ch("b", "e", true, false, -1.0), ch("c", "e", false, false, 3.0)], &[-2.0, -1.0, 0.0]);
        let f: Vec<bool> = d.rows.iter().map(|r| r.flipped).collect();
        assert_eq!(f, [true, false, true]);
    }

    #[test]
    fn perfect_predictor_is_dropped_with_its_rows() {
        let mut d = FlipData::default();
        let mut chars = Vec::new();
        let mut post = Vec::new();
        for i in 0..30 {
            // Rare high-volume traders never flip.
            let vol = i % 10 == 0;
            chars.push(ch(&format!("t{i}"), "e", i % 3 == 0, vol, 1.0));
            post.push(if !vol && i % 4 == 1 { -1.0 } else { 1.0 });
        }
        d.push_event(&chars, &post);
        let (kept, regs, dropped) = drop_perfect_predictors(&d, &[Characteristic::NegTrumpWin, Characteristic::TradVolHigh]);
        assert_eq!(regs, [Characteristic::NegTrumpWin]);
        assert_eq!(dropped, [PerfectPredictor { characteristic: Characteristic::TradVolHigh, level: true, outcome: false, rows: 3 }]);
        assert_eq!(kept.rows.len(), 27);
        assert!(kept.chars.iter().all(|c| !c.trad_vol_high));
        assert!(fit_logit(&kept, &regs).is_ok());
    }

    #[test]
    fn logit_design_has_reference_event() {
        let mut d = FlipData::default();
        let mut chars = Vec::new();
        let mut post = Vec::new();
        for i in 0..40 {
            let ev = if i % 2 == 0 { "e1" } else { "e2" };
            chars.push(ch(&format!("t{}", i / 2), ev, i % 3 == 0, i % 5 == 0, 1.0));
            post.push(if i % 4 == 0 || i % 7 == 0 { -1.0 } else { 1.0 });
        }
        d.push_event(&chars, &post);
        let f = fit_logit(&d, &[Characteristic::NegTrumpWin, Characteristic::TradVolHigh]).unwrap();
        assert_eq!(f.terms, ["const", "neg_trump_win", "trad_vol_high", "event[e2]"]);
        assert_eq!(f.clusters, 20);
    }
}
