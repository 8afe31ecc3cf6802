//! Event-time binning: ceiling-convention bin assignment, tick-rule signing,
//! per-bin VWAP and signed flow, and the event price-response summary.

mod bins;
mod summary;
mod tick;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bins::{assign_bins, bin_index, build_bin_series, write_bins_csv, Bin, BinGroup, BinSeries};
pub use summary::{price_response_summary, render_price_table, PriceResponse};
pub use tick::{classify_ticks, SignedTrade, TickConfig};

/// Default bin width, five minutes.
pub const DEFAULT_BIN_SECS: i64 = 300;

/// A `(pre, post)` pair of durations around the event instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    #[serde(with = "secs")]
    pub pre: TimeDelta,
    #[serde(with = "secs")]
    pub post: TimeDelta,
}

impl Window {
    pub fn minutes(pre: i64, post: i64) -> Self {
        Window { pre: TimeDelta::minutes(pre), post: TimeDelta::minutes(post) }
    }

    /// Bin indices covered: bin 0 spans `(-width, 0]`, so a pre-window of
    /// `n` bins starts at `1 - n`.
    pub fn bins(&self, width: TimeDelta) -> std::ops::RangeInclusive<i64> {
        let w = width.num_nanoseconds().expect("bin width in range");
        let pre = self.pre.num_nanoseconds().expect("window in range") / w;
        let post = self.post.num_nanoseconds().expect("window in range") / w;
        (1 - pre)..=post
    }
}

pub(crate) mod secs {
    use chrono::TimeDelta;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &TimeDelta, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(d.num_seconds())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TimeDelta, D::Error> {
        Ok(TimeDelta::seconds(i64::deserialize(d)?))
    }
}

/// One event and the windows used around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub name: String,
    pub event_time: DateTime<Utc>,
    /// Trader-level analyses; default 30min / 30min.
    pub trading_window: Window,
    /// Price diagnostics; default 2h / 4h.
    pub price_window: Window,
    /// Baseline window before the event-study window; default 3h.
    #[serde(with = "secs")]
    pub estimation_window: TimeDelta,
    /// Look-back for trader characteristics; default 30 days.
    #[serde(with = "secs")]
    pub characteristics_window: TimeDelta,
}

impl EventSpec {
    pub fn new(name: impl Into<String>, event_time: DateTime<Utc>) -> Self {
        EventSpec {
            name: name.into(),
            event_time,
            trading_window: Window::minutes(30, 30),
            price_window: Window::minutes(120, 240),
            estimation_window: TimeDelta::hours(3),
            characteristics_window: TimeDelta::days(30),
        }
    }

    /// Same windows, shifted to another instant (used for pseudo-events).
    pub fn at(&self, event_time: DateTime<Utc>) -> Self {
        EventSpec { event_time, ..self.clone() }
    }

    /// All durations must be positive multiples of `width`.
    pub fn validate(&self, width: TimeDelta) -> Result<()> {
        let w = width.num_nanoseconds().unwrap_or(0);
        if w <= 0 {
            return Err(Error::validation("bin_width", "must be positive"));
        }
        let checks = [
            ("trading_window.pre", self.trading_window.pre),
            ("trading_window.post", self.trading_window.post),
            ("price_window.pre", self.price_window.pre),
            ("price_window.post", self.price_window.post),
            ("estimation_window", self.estimation_window),
            ("characteristics_window", self.characteristics_window),
        ];
        for (field, d) in checks {
            let n = d.num_nanoseconds().unwrap_or(-1);
            if n <= 0 || n % w != 0 {
                return Err(Error::validation(
                    format!("{}.{}", self.name, field),
                    format!("{}s is not a positive multiple of the {}s bin width", d.num_seconds(), width.num_seconds()),
                ));
            }
        }
        Ok(())
    }

    /// Instant at which bin `k` closes.
    pub fn bin_end(&self, k: i64, width: TimeDelta) -> DateTime<Utc> {
        self.event_time + TimeDelta::nanoseconds(width.num_nanoseconds().expect("bin width in range") * k)
    }

    /// Half-open instant range `(start, end]` covered by the bin range.
    pub fn span(&self, bins: &std::ops::RangeInclusive<i64>, width: TimeDelta) -> (DateTime<Utc>, DateTime<Utc>) {
        (self.bin_end(*bins.start() - 1, width), self.bin_end(*bins.end(), width))
    }

    /// Event-study baseline bins: the estimation window ending at the event
    /// instant, i.e. the bins covering `(event - estimation_window, event]`.
    pub fn estimation_bins(&self, width: TimeDelta) -> std::ops::RangeInclusive<i64> {
        let n = self.estimation_window.num_nanoseconds().unwrap() / width.num_nanoseconds().unwrap();
        (1 - n)..=0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn default_window_bins() {
        let w = TimeDelta::minutes(5);
        assert_eq!(Window::minutes(30, 30).bins(w), -5..=6);
        assert_eq!(Window::minutes(120, 240).bins(w), -23..=48);
        let e = EventSpec::new("x", Utc.with_ymd_and_hms(2024, 7, 13, 22, 10, 0).unwrap());
        assert_eq!(e.estimation_bins(w), -35..=0);
        assert_eq!(e.estimation_bins(w).count(), 36);
    }

    #[test]
    fn validation_rejects_non_multiples() {
        let mut e = EventSpec::new("x", Utc.with_ymd_and_hms(2024, 7, 13, 22, 10, 0).unwrap());
        assert!(e.validate(TimeDelta::minutes(5)).is_ok());
        e.trading_window.pre = TimeDelta::minutes(7);
        let err = e.validate(TimeDelta::minutes(5)).unwrap_err();
        assert!(err.to_string().contains("trading_window.pre"));
    }
}
