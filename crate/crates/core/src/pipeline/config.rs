use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{StatWindows, VrConfig};
use crate::error::{Error, Result};
use crate::eventstudy::EventStudyConfig;
use crate::heterogeneity::{Characteristic, CharacteristicsConfig};
use crate::impact::{Alignment, HacLag, RollingConfig};
use crate::ingest::Token;
use crate::placebo::{PoolScope, Statistic};
use crate::series::{EventSpec, TickConfig, Window};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub name: String,
    /// ISO-8601 / RFC 3339 instant, e.g. `2024-06-28T01:00:00Z`.
    pub time: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsConfig {
    pub trading_pre_minutes: i64,
    pub trading_post_minutes: i64,
    pub price_pre_minutes: i64,
    pub price_post_minutes: i64,
    pub estimation_minutes: i64,
    pub characteristics_days: i64,
}

impl Default for WindowsConfig {
    fn default() -> Self {
        WindowsConfig {
            trading_pre_minutes: 30,
            trading_post_minutes: 30,
            price_pre_minutes: 120,
            price_post_minutes: 240,
            estimation_minutes: 180,
            characteristics_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactConfig {
    /// Fixed Bartlett lag; the automatic rule when absent.
    pub hac_lag: Option<usize>,
    pub rolling_window: usize,
    pub rolling_step: usize,
    pub alignment: Alignment,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        ImpactConfig { hac_lag: None, rolling_window: 24, rolling_step: 1, alignment: Alignment::Trailing }
    }
}

impl ImpactConfig {
    pub fn hac(&self) -> HacLag {
        self.hac_lag.map_or(HacLag::Auto, HacLag::Fixed)
    }

    pub fn rolling(&self) -> RollingConfig {
        RollingConfig { window_len: self.rolling_window, step: self.rolling_step, alignment: self.alignment, hac_lag: self.hac() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub vr_horizon: usize,
    pub vr_window: usize,
    pub drop_stale_returns: bool,
    /// Bins in the first post-event hour.
    pub post_hour_bins: i64,
    /// Bins per side for the impact change statistic.
    pub impact_bins: i64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { vr_horizon: 6, vr_window: 36, drop_stale_returns: false, post_hour_bins: 12, impact_bins: 24 }
    }
}

impl DiagnosticsConfig {
    pub fn vr(&self) -> VrConfig {
        VrConfig { horizon: self.vr_horizon, window: self.vr_window, drop_stale_returns: self.drop_stale_returns }
    }

    pub fn windows(&self) -> StatWindows {
        StatWindows { post_hour: self.post_hour_bins, impact_bins: self.impact_bins }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressConfig {
    /// Characteristics interacted with `post` in the panel models.
    pub interactions: Vec<String>,
    /// Characteristics in the flip logit.
    pub flip_characteristics: Vec<String>,
}

impl Default for RegressConfig {
    fn default() -> Self {
        let all: Vec<String> = Characteristic::ALL.iter().map(|c| c.as_str().to_string()).collect();
        RegressConfig { interactions: all.clone(), flip_characteristics: all }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaceboConfig {
    pub enabled: bool,
    pub draws: usize,
    pub statistics: Vec<Statistic>,
    pub exclusion_hours: i64,
    pub pool: PoolScope,
}

impl Default for PlaceboConfig {
    fn default() -> Self {
        PlaceboConfig { enabled: true, draws: 500, statistics: Statistic::ALL.to_vec(), exclusion_hours: 24, pool: PoolScope::AnalyzedToken }
    }
}

/// One analysis run: inputs, events, windows and estimator knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trades: PathBuf,
    pub platform_addresses: Option<PathBuf>,
    pub conversion_actors: Option<PathBuf>,
    pub transfer_pairs: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub events: Vec<EventEntry>,
    /// Analyzed token labels; the first one drives the placebo tests.
    pub tokens: Vec<String>,
    pub bin_secs: i64,
    pub seed: u64,
    pub tick_warmup_direction: i8,
    /// Leave trades whose taker is an advanced operator out of prices and flow.
    pub exclude_operators_from_prices: bool,
    pub windows: WindowsConfig,
    pub eventstudy: EventStudyConfig,
    pub characteristics: CharacteristicsConfig,
    pub regress: RegressConfig,
    pub impact: ImpactConfig,
    pub diagnostics: DiagnosticsConfig,
    pub placebo: PlaceboConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trades: PathBuf::from("trades.csv"),
            platform_addresses: None,
            conversion_actors: None,
            transfer_pairs: None,
            output_dir: PathBuf::from("out"),
            events: Vec::new(),
            tokens: vec!["TrumpYES".into()],
            bin_secs: 300,
            seed: 1,
            tick_warmup_direction: 1,
            exclude_operators_from_prices: false,
            windows: WindowsConfig::default(),
            eventstudy: EventStudyConfig::default(),
            characteristics: CharacteristicsConfig::default(),
            regress: RegressConfig::default(),
            impact: ImpactConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            placebo: PlaceboConfig::default(),
        }
    }
}

/// Event names become directory names.
fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !s.starts_with('.')
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::validation("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn width(&self) -> TimeDelta {
        TimeDelta::seconds(self.bin_secs)
    }

    pub fn tick(&self) -> TickConfig {
        TickConfig { warmup_direction: self.tick_warmup_direction }
    }

    /// Hex SHA-256 of the canonical config with the output location blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn event_specs(&self) -> Result<Vec<EventSpec>> {
        let w = &self.windows;
        self.events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if !valid_name(&e.name) {
                    return Err(Error::validation(format!("events[{i}].name"), format!("{:?} must be non-empty [A-Za-z0-9._-]", e.name)));
                }
                let time: DateTime<Utc> = DateTime::parse_from_rfc3339(e.time.trim())
                    .map_err(|err| Error::validation(format!("events[{i}].time"), format!("{:?}: {err}", e.time)))?
                    .with_timezone(&Utc);
                Ok(EventSpec {
                    name: e.name.clone(),
                    event_time: time,
                    trading_window: Window::minutes(w.trading_pre_minutes, w.trading_post_minutes),
                    price_window: Window::minutes(w.price_pre_minutes, w.price_post_minutes),
                    estimation_window: TimeDelta::minutes(w.estimation_minutes),
                    characteristics_window: TimeDelta::days(w.characteristics_days),
                })
            })
            .collect()
    }

    pub fn token_list(&self) -> Result<Vec<Token>> {
        if self.tokens.is_empty() {
            return Err(Error::validation("tokens", "at least one analyzed token is required"));
        }
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| Token::parse_label(t).ok_or_else(|| Error::validation(format!("tokens[{i}]"), format!("{t:?} is not a token label"))))
            .collect()
    }

    fn characteristic_list(field: &str, names: &[String]) -> Result<Vec<Characteristic>> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| Characteristic::parse(n).map_err(|_| Error::validation(format!("{field}[{i}]"), format!("unknown characteristic {n:?}"))))
            .collect()
    }

    pub fn interactions(&self) -> Result<Vec<Characteristic>> {
        Self::characteristic_list("regress.interactions", &self.regress.interactions)
    }

    pub fn flip_characteristics(&self) -> Result<Vec<Characteristic>> {
        Self::characteristic_list("regress.flip_characteristics", &self.regress.flip_characteristics)
    }

    /// A run over the files written by [`crate::synth::write_synth`] in
    /// `dir`, with one event per shock.
    pub fn for_synth(dir: &Path, synth: &SynthConfig) -> RunConfig {
        RunConfig {
            trades: dir.join("trades.csv"),
            platform_addresses: Some(dir.join("platform_addresses.txt")),
            conversion_actors: Some(dir.join("conversion_actors.txt")),
            transfer_pairs: Some(dir.join("transfer_pairs.csv")),
            output_dir: dir.join("out"),
            events: synth
                .shocks
                .iter()
                .map(|s| EventEntry { name: s.name.clone(), time: s.time.to_rfc3339_opts(SecondsFormat::Secs, true) })
                .collect(),
            bin_secs: synth.bin_secs,
            seed: synth.seed,
            ..RunConfig::default()
        }
    }

    /// Checks everything that can be checked without reading the trades.
    pub fn validate(&self) -> Result<()> {
        if self.bin_secs <= 0 {
            return Err(Error::validation("bin_secs", "must be positive"));
        }
        if self.events.is_empty() {
            return Err(Error::validation("events", "at least one event is required"));
        }
        let specs = self.event_specs()?;
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::validation(format!("events[{i}].name"), format!("duplicate event name {:?}", s.name)));
            }
            s.validate(self.width())?;
        }
        self.token_list()?;
        self.interactions()?;
        self.flip_characteristics()?;
        if !matches!(self.tick_warmup_direction, 1 | -1) {
            return Err(Error::validation("tick_warmup_direction", "must be 1 or -1"));
        }
        let d = &self.diagnostics;
        if d.vr_horizon < 2 || d.vr_window <= d.vr_horizon || d.post_hour_bins <= 0 || d.impact_bins <= 0 {
            return Err(Error::validation("diagnostics", "need 2 <= vr_horizon < vr_window and positive stat windows"));
        }
        if self.impact.rolling_window == 0 || self.impact.rolling_step == 0 {
            return Err(Error::validation("impact", "rolling window and step must be positive"));
        }
        if self.placebo.draws == 0 {
            return Err(Error::validation("placebo.draws", "must be positive"));
        }
        if self.placebo.exclusion_hours < 0 {
            return Err(Error::validation("placebo.exclusion_hours", "must be non-negative"));
        }
        let files = [
            ("trades", Some(&self.trades)),
            ("platform_addresses", self.platform_addresses.as_ref()),
            ("conversion_actors", self.conversion_actors.as_ref()),
            ("transfer_pairs", self.transfer_pairs.as_ref()),
        ];
        for (field, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::validation(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> RunConfig {
        RunConfig::from_toml_str(
            r#"
            trades = "t.csv"
            [[events]]
            name = "debate"
            time = "2024-06-28T01:00:00Z"
            [placebo]
            draws = 100
            "#,
        )
        .unwrap()
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let c = config();
        assert_eq!(c.placebo.draws, 100);
        assert!(c.placebo.enabled);
        assert_eq!(c.windows, WindowsConfig::default());
        assert_eq!(c.event_specs().unwrap()[0].price_window.bins(c.width()), -23..=48);
        let round = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn bad_timestamp_names_the_field() {
        let mut c = config();
        c.events[0].time = "28/06/2024 01:00".into();
        match c.event_specs().unwrap_err() {
            Error::Validation { field, .. } => assert_eq!(field, "events[0].time"),
            e => panic!("{e}"),
        }
        assert!(RunConfig::from_toml_str("bogus_field = 1").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = config();
        let b = RunConfig { output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.diagnostics.vr_window = 48;
        assert_ne!(a.hash(), d.hash());
    }
}
