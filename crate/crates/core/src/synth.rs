//! Seeded synthetic market with known ground truth: Poisson trader arrivals,
//! a log-odds price driven by order flow, scheduled shocks, exposure
//! responses and position flips.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_trades_csv, Address, AuxiliarySets, Direction, Market, Side, Token, TradeRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlipLogit {
    pub alpha: f64,
    pub beta_neg: f64,
    /// Flips land in post-event bins `1..=bins`.
    pub bins: usize,
}

impl Default for FlipLogit {
    fn default() -> Self {
        FlipLogit { alpha: -2.0, beta_neg: 1.0, bins: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Shock {
    pub name: String,
    pub time: DateTime<Utc>,
    /// Permanent log-odds jump in the first post-event bin.
    pub jump: f64,
    /// Log-odds move in the first post-event bin, reversed in the second.
    pub pulse: f64,
    pub arrival_multiplier: f64,
    /// Post-event bins affected by the multiplier, side target and response.
    pub response_bins: usize,
    /// Two-sidedness index targeted over the response bins.
    pub two_sided_target: Option<f64>,
    /// Extra arrival factor for traders with negative exposure.
    pub exposure_response: f64,
    /// Fresh addresses entering over the response bins.
    pub new_traders: usize,
    pub flip: Option<FlipLogit>,
}

impl Default for Shock {
    fn default() -> Self {
        Shock {
            name: "shock".into(),
            time: Utc.with_ymd_and_hms(2024, 1, 14, 12, 0, 0).unwrap(),
            jump: 0.0,
            pulse: 0.0,
            arrival_multiplier: 1.0,
            response_bins: 6,
            two_sided_target: None,
            exposure_response: 1.0,
            new_traders: 0,
            flip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub bins: usize,
    pub bin_secs: i64,
    pub traders: usize,
    /// Share of the initial population that enters at a uniform random bin.
    pub late_entry_share: f64,
    /// Expected trader visits per bin across all traders.
    pub base_rate: f64,
    /// Pareto shape of per-trader rates.
    pub rate_tail: f64,
    /// Mean of the Poisson number of extra trades per visit.
    pub extra_trades: f64,
    pub trade_size_median: f64,
    pub trade_size_sigma: f64,
    /// Probability a visit trades the Trump market; the rest splits evenly
    /// between Biden and Harris.
    pub trump_share: f64,
    pub negative_share: f64,
    pub buy_prob: f64,
    pub theta0: f64,
    pub sigma_theta: f64,
    pub lambda_perm: f64,
    pub lambda_trans: f64,
    pub other_theta0: f64,
    pub other_sigma: f64,
    pub liquidity_providers: usize,
    /// Traders linked by off-exchange transfers into one cluster.
    pub cluster_traders: usize,
    /// Largest |theta| allowed before the run is rejected.
    pub theta_bound: f64,
    pub shocks: Vec<Shock>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            start: Utc.with_ymd_and_hms(2024, 1, 7, 0, 0, 0).unwrap(),
            bins: 288 * 14,
            bin_secs: 300,
            traders: 2000,
            late_entry_share: 0.1,
            base_rate: 30.0,
            rate_tail: 1.5,
            extra_trades: 0.5,
            trade_size_median: 50.0,
            trade_size_sigma: 1.2,
            trump_share: 0.7,
            negative_share: 0.4,
            buy_prob: 0.5,
            theta0: 0.4,
            sigma_theta: 0.01,
            lambda_perm: 0.25,
            lambda_trans: 0.10,
            other_theta0: -1.5,
            other_sigma: 0.005,
            liquidity_providers: 8,
            cluster_traders: 3,
            theta_bound: 9.0,
            shocks: Vec::new(),
        }
    }
}

impl SynthConfig {
    /// A `days`-long market with three shocks near a quarter, half and three
    /// quarters of the sample, at different clock times: a jump with heavy two-sided entry, a
    /// transitory pulse, and a large repricing. Each shock triggers flips.
    pub fn demo(days: usize) -> Self {
        let base = SynthConfig { bins: 288 * days.max(1), ..SynthConfig::default() };
        let at = |num: i64, hour: i64| base.start + TimeDelta::hours(days as i64 * 24 * num / 4 + hour);
        let shocks = vec![
            Shock {
                name: "debate".into(),
                time: at(1, 1),
                jump: 0.3,
                arrival_multiplier: 4.0,
                two_sided_target: Some(0.5),
                exposure_response: 1.5,
                new_traders: 40,
                flip: Some(FlipLogit::default()),
                ..Shock::default()
            },
            Shock {
                name: "rally".into(),
                time: at(2, 14),
                pulse: 0.2,
                arrival_multiplier: 3.0,
                two_sided_target: Some(0.7),
                new_traders: 20,
                flip: Some(FlipLogit::default()),
                ..Shock::default()
            },
            Shock {
                name: "withdrawal".into(),
                time: at(3, 20),
                jump: -0.6,
                arrival_multiplier: 5.0,
                two_sided_target: Some(0.4),
                exposure_response: 2.0,
                new_traders: 60,
                flip: Some(FlipLogit { alpha: -1.5, ..FlipLogit::default() }),
                ..Shock::default()
            },
        ];
        SynthConfig { shocks, ..base }
    }

    pub fn width(&self) -> TimeDelta {
        TimeDelta::seconds(self.bin_secs)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + self.width() * self.bins as i32
    }

    /// Generator bin whose interval starts at `time`, i.e. the first bin
    /// after an event at `time`.
    pub fn bin_after(&self, time: DateTime<Utc>) -> Result<usize> {
        let off = (time - self.start).num_milliseconds();
        let w = self.bin_secs * 1000;
        if off < 0 || off % w != 0 || (off / w) as usize >= self.bins {
            return Err(Error::validation("shocks.time", format!("{time} is not a grid point inside the sample")));
        }
        Ok((off / w) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 9] = [
            ("bins", self.bins > 0),
            ("bin_secs", self.bin_secs > 0),
            ("base_rate", self.base_rate >= 0.0 && self.base_rate.is_finite()),
            ("rate_tail", self.rate_tail > 0.0),
            ("extra_trades", self.extra_trades >= 0.0),
            ("sigma_theta", self.sigma_theta >= 0.0),
            ("other_sigma", self.other_sigma >= 0.0),
            ("buy_prob", (0.0..=1.0).contains(&self.buy_prob)),
            ("liquidity_providers", self.liquidity_providers > 0),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::validation(field, "out of range"));
            }
        }
        if !(0.0..=1.0).contains(&self.negative_share) || !(0.0..=1.0).contains(&self.trump_share) {
            return Err(Error::validation("negative_share", "shares must lie in [0, 1]"));
        }
        for (i, s) in self.shocks.iter().enumerate() {
            self.bin_after(s.time)?;
            if s.arrival_multiplier < 0.0 || s.exposure_response < 0.0 {
                return Err(Error::validation(format!("shocks[{i}]"), "rates must be non-negative"));
            }
            if let Some(t) = s.two_sided_target {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::validation(format!("shocks[{i}].two_sided_target"), "must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Buy probability whose expected two-sidedness `1 - |2b - 1|` equals
/// `target`, on the buy-leaning branch.
pub fn buy_prob_for_two_sided(target: f64) -> f64 {
    1.0 - target / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBin {
    /// Generator bin index; the bin is `(end - width, end]`.
    pub index: usize,
    pub end: DateTime<Utc>,
    pub theta: f64,
    /// VWAP target of the Trump YES token, when it traded.
    pub vwap: Option<f64>,
    /// Net flow in millions by generated (true) direction.
    pub q_true: f64,
    /// Net flow in millions by tick-rule direction on the emitted prices.
    pub q_tick: f64,
    pub trade_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipTruth {
    pub shock: String,
    pub trader: usize,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SynthConfig,
    pub traders: Vec<String>,
    /// Visits per bin for each trader before multipliers.
    pub rates: Vec<f64>,
    pub entry_bin: Vec<usize>,
    /// Exposure sign group at the start.
    pub negative: Vec<bool>,
    pub liquidity_providers: Vec<String>,
    pub platform: Vec<String>,
    pub cluster: Vec<String>,
    /// Trump YES bins.
    pub bins: Vec<TruthBin>,
    /// Taker direction of every emitted trade (+1 buy, -1 sell).
    pub directions: Vec<i8>,
    /// Share of trades whose tick-rule direction equals the generated one.
    pub tick_accuracy: f64,
    /// Same, Trump YES only.
    pub tick_accuracy_trump_yes: f64,
    pub flips: Vec<FlipTruth>,
}

impl Truth {
    /// Expected per-bin participation of trader `i` when its arrival rate is
    /// scaled by `multiplier`.
    pub fn expected_participation(&self, i: usize, multiplier: f64) -> f64 {
        1.0 - (-self.rates[i] * multiplier).exp()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub trades: Vec<TradeRecord>,
    pub truth: Truth,
    pub aux: AuxiliarySets,
}

/// Fenwick tree over trader weights for proportional sampling.
struct Fenwick {
    tree: Vec<f64>,
    weights: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0.0; n + 1], weights: vec![0.0; n] }
    }

    fn set(&mut self, i: usize, w: f64) {
        let delta = w - self.weights[i];
        self.weights[i] = w;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut s = 0.0;
        let mut j = self.tree.len() - 1;
        while j > 0 {
            s += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        s
    }

    /// Index whose cumulative weight interval contains `u`.
    fn find(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        // Skip zero-weight slots left behind by rounding.
        let mut i = pos.min(n - 1);
        while self.weights[i] == 0.0 && i + 1 < n {
            i += 1;
        }
        while self.weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

const TOKENS: usize = 6;

fn token_of(slot: usize) -> Token {
    let market = match slot / 2 {
        0 => Market::Trump,
        1 => Market::Biden,
        _ => Market::Harris,
    };
    let side = if slot.is_multiple_of(2) { Side::Yes } else { Side::No };
    Token::new(market, side)
}

/// Trump-win sign of each slot: TrumpYES, TrumpNO, BidenYES, BidenNO,
/// HarrisYES, HarrisNO.
const SLOT_SIGN: [f64; TOKENS] = [1.0, -1.0, -1.0, 1.0, -1.0, 1.0];

/// Slot a trader of the given sign trades in market `m`.
fn slot_for(m: usize, negative: bool) -> usize {
    let yes_positive = m == 0;
    let want_yes = yes_positive != negative;
    2 * m + if want_yes { 0 } else { 1 }
}

fn exposure_of(holdings: &[f64; TOKENS]) -> f64 {
    holdings.iter().zip(SLOT_SIGN).map(|(h, s)| h * s).sum()
}

struct TraderState {
    holdings: [f64; TOKENS],
    negative: bool,
    traded: bool,
}

impl TraderState {
    fn exposure(&self) -> f64 {
        exposure_of(&self.holdings)
    }
}

struct Pending {
    offset_ms: i64,
    trader: usize,
    slot: usize,
    direction: i8,
    value: f64,
    maker: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smallest share of a bin's value after the correcting step.
pub const MIN_TAIL_SHARE: f64 = 0.2;

/// Largest gap between a bin's opening price and its target, relative to
/// the nearer price bound.
pub const OPEN_BAND: f64 = 0.025;

/// Prices for one token's trades in a bin: strict steps of `eps` in each
/// trade's direction, plus one correcting step on the earliest trade whose
/// direction matches the needed shift, so that the value-weighted mean is
/// `target`. The bin opens within `OPEN_BAND * min(target, 1 - target)` of
/// the target, so every price stays within about a quarter of it. Returns
/// the prices and whether the correcting step had to be placed against a
/// trade's direction.
pub fn bin_prices(prev: Option<f64>, target: f64, dirs: &[i8], values: &[f64]) -> (Vec<f64>, bool) {
    let n = dirs.len();
    if n == 0 {
        return (Vec::new(), false);
    }
    let band = OPEN_BAND * target.min(1.0 - target);
    let x0 = prev.map_or(target, |p| p.clamp(target - band, target + band));
    let eps = (target - x0).abs() / (2.0 * n as f64);
    let mut cum = 0.0;
    let mut xs: Vec<f64> = dirs
        .iter()
        .map(|d| {
            cum += *d as f64;
            x0 + eps * cum
        })
        .collect();
    let w: f64 = values.iter().sum();
    let vwap = |xs: &[f64]| {
        let r = xs[0];
        if w > 0.0 {
            r + values.iter().zip(xs).map(|(v, x)| v * (x - r)).sum::<f64>() / w
        } else {
            r + xs.iter().map(|x| x - r).sum::<f64>() / n as f64
        }
    };
    let gap = target - vwap(&xs);
    let mut against = false;
    if gap != 0.0 {
        let s = if gap > 0.0 { 1 } else { -1 };
        let total = if w > 0.0 { w } else { n as f64 };
        let tail_of = |j: usize| if w > 0.0 { values[j..].iter().sum() } else { (n - j) as f64 };
        // A step on a trade carrying little of the tail weight would have to
        // be large; the first trade absorbs it instead at the cost of its tick.
        let j = match dirs.iter().position(|d| *d == s) {
            Some(j) if tail_of(j) >= MIN_TAIL_SHARE * total => j,
            _ => {
                against = dirs[0] != s;
                0
            }
        };
        let tail: f64 = tail_of(j);
        let c = gap * total / tail;
        for x in &mut xs[j..] {
            *x += c;
        }
        // One refinement pass absorbs rounding in the shift.
        let residual = target - vwap(&xs);
        for x in &mut xs[j..] {
            *x += residual * total / tail;
        }
    }
    (xs, against)
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width_ms = config.bin_secs * 1000;

    // Population: initial traders plus shock newcomers.
    let shock_bins: Vec<usize> = config.shocks.iter().map(|s| config.bin_after(s.time)).collect::<Result<_>>()?;
    let n_new: usize = config.shocks.iter().map(|s| s.new_traders).sum();
    let n = config.traders + n_new;
    let pareto = Pareto::new(1.0, config.rate_tail).map_err(|e| Error::validation("rate_tail", e.to_string()))?;
    let raw: Vec<f64> = (0..n).map(|_| pareto.sample(&mut rng)).collect();
    let raw_sum: f64 = raw[..config.traders].iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let rates: Vec<f64> = raw.iter().map(|w| config.base_rate * w / raw_sum).collect();
    let negative: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < config.negative_share).collect();
    let needs_both = config.shocks.iter().any(|s| s.exposure_response != 1.0 || s.flip.is_some());
    let n_neg = negative.iter().filter(|b| **b).count();
    if needs_both && (n_neg == 0 || n_neg == n) {
        return Err(Error::validation("negative_share", "degenerate exposure distribution"));
    }
    let mut entry_bin: Vec<usize> = (0..config.traders)
        .map(|_| if rng.random::<f64>() < config.late_entry_share { rng.random_range(0..config.bins) } else { 0 })
        .collect();
    for (s, &b) in config.shocks.iter().zip(&shock_bins) {
        for _ in 0..s.new_traders {
            let span = s.response_bins.max(1);
            entry_bin.push((b + rng.random_range(0..span)).min(config.bins - 1));
        }
    }

    let traders: Vec<Address> = (0..n).map(|i| Address::new(&format!("0x{:040x}", 0x1000_0000u64 + i as u64))).collect();
    let lps: Vec<Address> = (0..config.liquidity_providers)
        .map(|i| Address::new(&format!("0x{:040x}", 0xffff_0000_0000u64 + i as u64)))
        .collect();
    let cluster: Vec<Address> = if config.cluster_traders >= 2 && config.cluster_traders <= config.traders {
        traders[config.traders - config.cluster_traders..config.traders].to_vec()
    } else {
        Vec::new()
    };
    let aux = AuxiliarySets {
        known_platform: lps.iter().take(1).cloned().collect(),
        conversion_actors: lps.iter().cloned().collect::<BTreeSet<_>>(),
        offexchange_transfers: cluster.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect(),
    };
    let tokens: Vec<Token> = (0..TOKENS).map(token_of).collect();

    let mut entries: Vec<(usize, usize)> = entry_bin.iter().enumerate().map(|(i, b)| (*b, i)).collect();
    entries.sort_unstable();
    let mut next_entry = 0;
    let mut trees = [Fenwick::new(n), Fenwick::new(n)];
    let mut state: Vec<TraderState> =
        negative.iter().map(|&neg| TraderState { holdings: [0.0; TOKENS], negative: neg, traded: false }).collect();

    let size = LogNormal::new(config.trade_size_median.ln(), config.trade_size_sigma)
        .map_err(|e| Error::validation("trade_size_sigma", e.to_string()))?;
    let eta = Normal::new(0.0, config.sigma_theta.max(0.0)).unwrap();
    let other = Normal::new(0.0, config.other_sigma.max(0.0)).unwrap();

    let mut theta = config.theta0;
    let mut other_theta = [config.other_theta0, config.other_theta0];
    let mut q_prev = 0.0;
    let mut last_price: [Option<f64>; TOKENS] = [None; TOKENS];
    let mut tick_last: [(Option<f64>, i8); TOKENS] = [(None, 1); TOKENS];
    let (mut tick_hits, mut tick_hits_ty, mut ty_total) = (0usize, 0usize, 0usize);

    let mut trades: Vec<TradeRecord> = Vec::new();
    let mut directions: Vec<i8> = Vec::new();
    let mut truth_bins = Vec::with_capacity(config.bins);
    let mut flips = Vec::new();
    let mut response_group: Vec<bool> = negative.clone();
    // (bin, trader, shock)
    let mut flip_schedule: Vec<(usize, usize, usize)> = Vec::new();

    for j in 0..config.bins {
        // Shock bookkeeping: the shock whose response window covers bin j.
        let active = config
            .shocks
            .iter()
            .zip(&shock_bins)
            .enumerate()
            .find(|(_, (s, &b))| j >= b && j < b + s.response_bins.max(1))
            .map(|(i, (s, &b))| (i, s, j - b + 1));
        if let Some((si, s, 1)) = active {
            // Groups are fixed at the event for the response and flips.
            for i in 0..n {
                response_group[i] = state[i].negative;
            }
            if let Some(flip) = &s.flip {
                for i in 0..n {
                    if state[i].traded && state[i].exposure() != 0.0 && entry_bin[i] <= j {
                        let neg = state[i].exposure() < 0.0;
                        let p = sigmoid(flip.alpha + flip.beta_neg * neg as u8 as f64);
                        if rng.random::<f64>() < p {
                            let at = j + rng.random_range(0..flip.bins.max(1));
                            flip_schedule.push((at.min(config.bins - 1), i, si));
                            flips.push(FlipTruth { shock: s.name.clone(), trader: i, negative: neg });
                        }
                    }
                }
            }
        }
        while next_entry < entries.len() && entries[next_entry].0 <= j {
            let i = entries[next_entry].1;
            next_entry += 1;
            trees[response_group[i] as usize].set(i, rates[i]);
        }
        if let Some((_, _, 1)) = active {
            // Rebuild trees by the event-time group.
            trees = [Fenwick::new(n), Fenwick::new(n)];
            for i in 0..n {
                if entry_bin[i] <= j {
                    trees[response_group[i] as usize].set(i, rates[i]);
                }
            }
        }
        let (mult, resp, buy_p) = match active {
            Some((_, s, _)) => (
                s.arrival_multiplier,
                s.exposure_response,
                s.two_sided_target.map(buy_prob_for_two_sided).unwrap_or(config.buy_prob),
            ),
            None => (1.0, 1.0, config.buy_prob),
        };

        // Visits.
        let w_pos = trees[0].total().max(0.0) * mult;
        let w_neg = trees[1].total().max(0.0) * mult * resp;
        let lambda = w_pos + w_neg;
        let mut visits: Vec<usize> = Vec::new();
        if lambda > 0.0 {
            let k = Poisson::new(lambda).unwrap().sample(&mut rng) as usize;
            for _ in 0..k {
                let u = rng.random::<f64>() * lambda;
                let (g, u) = if u < w_pos { (0, u / mult) } else { (1, (u - w_pos) / (mult * resp)) };
                visits.push(trees[g].find(u));
            }
        }
        // Newcomers make their first visit on entry.
        for &(b, i) in entries[..next_entry].iter().rev() {
            if b != j {
                break;
            }
            if b > 0 && !state[i].traded {
                visits.push(i);
            }
        }

        let p_prev = sigmoid(theta);
        let (jump, pulse) = match active {
            Some((_, s, 1)) => (s.jump, s.pulse),
            Some((_, s, 2)) => (0.0, -s.pulse),
            _ => (0.0, 0.0),
        };
        let p_shifted = sigmoid(theta + jump + pulse);
        other_theta[0] += other.sample(&mut rng);
        other_theta[1] += other.sample(&mut rng);
        let other_p = [sigmoid(other_theta[0]), sigmoid(other_theta[1])];
        // Reference prices for sizing sells, conservatively low.
        let ref_price = |slot: usize| -> f64 {
            match slot {
                0 => 0.8 * p_prev.min(p_shifted),
                1 => 0.8 * (1.0 - p_prev.max(p_shifted)),
                2 | 4 => 0.8 * other_p[slot / 2 - 1],
                _ => 0.8 * (1.0 - other_p[slot / 2 - 1]),
            }
        };
        // And conservatively high for crediting buys.
        let hi_price = |slot: usize| -> f64 {
            let p = match slot {
                0 => p_prev.max(p_shifted),
                1 => 1.0 - p_prev.min(p_shifted),
                2 | 4 => other_p[slot / 2 - 1],
                _ => 1.0 - other_p[slot / 2 - 1],
            };
            (1.25 * p).min(1.0)
        };

        // Sizing uses a scratch copy of each trader's book for this bin; the
        // emitted quantities are applied to the real state below.
        let mut scratch: HashMap<usize, ([f64; TOKENS], bool)> = HashMap::new();
        let mut pending: Vec<Pending> = Vec::new();
        for &(_, i, _) in flip_schedule.iter().filter(|f| f.0 == j) {
            let book = scratch.entry(i).or_insert((state[i].holdings, state[i].negative));
            let e = exposure_of(&book.0);
            if e == 0.0 {
                continue;
            }
            // Positive holders buy Trump NO, negative holders Biden NO, in a
            // size that overshoots the current exposure.
            let slot = if e > 0.0 { 1 } else { 3 };
            let q = 2.0 * e.abs() + 1.0;
            book.0[slot] += q;
            book.1 = e > 0.0;
            let value = q * hi_price(slot);
            pending.push(Pending { offset_ms: 1, trader: i, slot, direction: 1, value, maker: rng.random_range(0..lps.len()) });
        }
        for &i in &visits {
            let extra = if config.extra_trades > 0.0 { Poisson::new(config.extra_trades).unwrap().sample(&mut rng) as usize } else { 0 };
            let m = if rng.random::<f64>() < config.trump_share {
                0
            } else if rng.random::<f64>() < 0.5 {
                1
            } else {
                2
            };
            for _ in 0..=extra {
                let book = scratch.entry(i).or_insert((state[i].holdings, state[i].negative));
                let slot = slot_for(m, book.1);
                let desired = size.sample(&mut rng);
                let want_buy = rng.random::<f64>() < buy_p;
                let r = ref_price(slot);
                let cap_q = (0.5 * exposure_of(&book.0).abs()).min(book.0[slot]) * 0.5;
                let (direction, value) =
                    if want_buy || cap_q * r < 0.01 { (1i8, desired) } else { (-1i8, desired.min(cap_q * r)) };
                book.0[slot] += if direction > 0 { value / hi_price(slot) } else { -value / r };
                pending.push(Pending {
                    offset_ms: rng.random_range(2..width_ms),
                    trader: i,
                    slot,
                    direction,
                    value,
                    maker: rng.random_range(0..lps.len()),
                });
            }
        }
        // A trader's trades keep their sizing order in time.
        let mut by_trader: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, p) in pending.iter().enumerate() {
            if p.offset_ms > 1 {
                by_trader.entry(p.trader).or_default().push(k);
            }
        }
        for idx in by_trader.values().filter(|v| v.len() > 1) {
            let mut offs: Vec<i64> = idx.iter().map(|&k| pending[k].offset_ms).collect();
            offs.sort_unstable();
            for (&k, o) in idx.iter().zip(offs) {
                pending[k].offset_ms = o;
            }
        }
        for (i, (_, negative)) in &scratch {
            state[*i].negative = *negative;
            state[*i].traded = true;
        }
        pending.sort_by_key(|p| p.offset_ms);

        // Price of Trump YES from the bin's true flow.
        let q_true: f64 = pending.iter().filter(|p| p.slot == 0).map(|p| p.direction as f64 * p.value / 1e6).sum();
        theta += config.lambda_perm * q_true + config.lambda_trans * (q_true - q_prev) + eta.sample(&mut rng) + jump + pulse;
        q_prev = q_true;
        if !theta.is_finite() || theta.abs() > config.theta_bound {
            return Err(Error::numerical(format!("price escaped the clamp budget at bin {j} (theta = {theta:.3})")));
        }
        let p_t = sigmoid(theta);
        let targets = [p_t, 1.0 - p_t, other_p[0], 1.0 - other_p[0], other_p[1], 1.0 - other_p[1]];

        let mut prices = vec![0.0; pending.len()];
        for slot in 0..TOKENS {
            let idx: Vec<usize> = (0..pending.len()).filter(|&k| pending[k].slot == slot).collect();
            if idx.is_empty() {
                continue;
            }
            let dirs: Vec<i8> = idx.iter().map(|&k| pending[k].direction).collect();
            let vals: Vec<f64> = idx.iter().map(|&k| pending[k].value).collect();
            let (xs, _) = bin_prices(last_price[slot], targets[slot], &dirs, &vals);
            for (k, x) in idx.iter().zip(&xs) {
                if !(*x > 1e-6 && *x < 1.0 - 1e-6) {
                    return Err(Error::numerical(format!("trade price {x} left (0, 1) at bin {j}")));
                }
                prices[*k] = *x;
            }
            last_price[slot] = xs.last().copied();
        }

        let bin_start_ms = config.start.timestamp_millis() + j as i64 * width_ms;
        let (mut q_tick, mut ty_count) = (0.0, 0usize);
        for (p, &x) in pending.iter().zip(&prices) {
            let quantity = p.value / x;
            let st = &mut state[p.trader];
            if p.direction < 0 {
                let e = st.exposure();
                if quantity > st.holdings[p.slot] + 1e-9 || quantity > 0.5 * e.abs() + 1e-9 {
                    return Err(Error::numerical(format!("sell cap violated at bin {j}: price moved too far within the bin")));
                }
            }
            st.holdings[p.slot] += p.direction as f64 * quantity;
            // Tick rule on the emitted path, for accuracy reporting.
            let (last, dir) = &mut tick_last[p.slot];
            if let Some(l) = *last {
                if x > l {
                    *dir = 1;
                } else if x < l {
                    *dir = -1;
                }
            }
            *last = Some(x);
            let hit = *dir == p.direction;
            tick_hits += hit as usize;
            if p.slot == 0 {
                ty_total += 1;
                ty_count += 1;
                tick_hits_ty += hit as usize;
                q_tick += *dir as f64 * p.value / 1e6;
            }
            let token = &tokens[p.slot];
            trades.push(TradeRecord {
                trade_id: format!("s{:09}", trades.len()),
                timestamp: DateTime::from_timestamp_millis(bin_start_ms + p.offset_ms).unwrap(),
                market: token.market.clone(),
                side_token: token.side,
                price: x,
                quantity,
                value: p.value,
                maker: lps[p.maker].clone(),
                taker: traders[p.trader].clone(),
                taker_direction: if p.direction > 0 { Direction::Buy } else { Direction::Sell },
            });
            directions.push(p.direction);
        }
        let vwap = (ty_count > 0).then_some(p_t);
        truth_bins.push(TruthBin {
            index: j,
            end: DateTime::from_timestamp_millis(bin_start_ms + width_ms).unwrap(),
            theta,
            vwap,
            q_true,
            q_tick,
            trade_count: ty_count,
        });
    }

    let total = trades.len().max(1);
    let truth = Truth {
        config: config.clone(),
        traders: traders.iter().map(|a| a.to_string()).collect(),
        rates,
        entry_bin,
        negative,
        liquidity_providers: lps.iter().map(|a| a.to_string()).collect(),
        platform: aux.known_platform.iter().map(|a| a.to_string()).collect(),
        cluster: cluster.iter().map(|a| a.to_string()).collect(),
        bins: truth_bins,
        directions,
        tick_accuracy: tick_hits as f64 / total as f64,
        tick_accuracy_trump_yes: tick_hits_ty as f64 / ty_total.max(1) as f64,
        flips,
    };
    Ok(SynthOutput { trades, truth, aux })
}

/// Generates with every shock's negative-exposure response set to `factor`.
pub fn inject_exposure_response(config: &SynthConfig, factor: f64) -> Result<SynthOutput> {
    let mut c = config.clone();
    for s in &mut c.shocks {
        s.exposure_response = factor;
    }
    if c.negative_share <= 0.0 || c.negative_share >= 1.0 {
        return Err(Error::validation("negative_share", "degenerate exposure distribution"));
    }
    generate(&c)
}

/// Writes `trades.csv`, `truth.json` and the three auxiliary address files.
pub fn write_synth(dir: &Path, out: &SynthOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e))
    };
    write_trades_csv(create("trades.csv")?, &out.trades)?;
    let mut truth = create("truth.json")?;
    serde_json::to_writer(&mut truth, &out.truth)?;
    truth.flush().map_err(|e| Error::io(dir.join("truth.json"), e))?;
    let mut f = create("platform_addresses.txt")?;
    for a in &out.aux.known_platform {
        writeln!(f, "{a}").map_err(|e| Error::io(dir.join("platform_addresses.txt"), e))?;
    }
    let mut f = create("conversion_actors.txt")?;
    for a in &out.aux.conversion_actors {
        writeln!(f, "{a}").map_err(|e| Error::io(dir.join("conversion_actors.txt"), e))?;
    }
    let mut w = csv::Writer::from_writer(create("transfer_pairs.csv")?);
    w.write_record(["addr_a", "addr_b"])?;
    for (a, b) in &out.aux.offexchange_transfers {
        w.write_record([a.as_str(), b.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("transfer_pairs.csv"), e))?;
    Ok(())
}
