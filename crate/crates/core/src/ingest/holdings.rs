use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::{Address, Token, TradeRecord, HOLDINGS_TOLERANCE};

/// Per-address signed token balances reconstructed from matched trades.
///
/// Both counterparties update: the buyer gains `quantity`, the seller loses it.
#[derive(Debug, Clone, Default)]
pub struct HoldingsLedger {
    pub balances: HashMap<Address, HashMap<Token, f64>>,
    pub as_of: Option<DateTime<Utc>>,
}

impl HoldingsLedger {
    /// Replays every trade with `timestamp <= as_of` (all trades if `None`).
    /// `trades` must be time-sorted.
    pub fn replay(trades: &[TradeRecord], as_of: Option<DateTime<Utc>>) -> Self {
        let end = match as_of {
            Some(t) => trades.partition_point(|r| r.timestamp <= t),
            None => trades.len(),
        };
        let mut ledger = HoldingsLedger { balances: HashMap::new(), as_of };
        for trade in &trades[..end] {
            ledger.apply(trade);
        }
        ledger
    }

    pub fn apply(&mut self, trade: &TradeRecord) {
        let signed = trade.taker_direction.sign() as f64 * trade.quantity;
        let token = trade.token();
        *self.balances.entry(trade.taker.clone()).or_default().entry(token.clone()).or_default() +=
            signed;
        *self.balances.entry(trade.maker.clone()).or_default().entry(token).or_default() -= signed;
    }

    pub fn balance(&self, address: &Address, token: &Token) -> f64 {
        self.balances.get(address).and_then(|m| m.get(token)).copied().unwrap_or(0.0)
    }

    /// Sorted view for stable output.
    pub fn sorted(&self) -> BTreeMap<&Address, BTreeMap<&Token, f64>> {
        self.balances
            .iter()
            .map(|(a, m)| (a, m.iter().map(|(t, v)| (t, *v)).collect()))
            .collect()
    }
}

/// Addresses whose balance in any token drops below `-HOLDINGS_TOLERANCE`
/// at some prefix of the (time-sorted) trade history.
pub fn negative_holders(trades: &[TradeRecord]) -> HashSet<Address> {
    let mut running: HashMap<(&Address, Token), f64> = HashMap::new();
    let mut flagged = HashSet::new();
    for trade in trades {
        let signed = trade.taker_direction.sign() as f64 * trade.quantity;
        for (addr, delta) in [(&trade.taker, signed), (&trade.maker, -signed)] {
            let bal = running.entry((addr, trade.token())).or_insert(0.0);
            *bal += delta;
            if *bal < -HOLDINGS_TOLERANCE {
                flagged.insert(addr.clone());
            }
        }
    }
    flagged
}

/// State-contingent exposure to a Trump victory, in tokens.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetExposure {
    pub address: Address,
    pub net_trump_win: f64,
}

impl NetExposure {
    /// Zero exposure is grouped with the non-negative side.
    pub fn is_negative(&self) -> bool {
        self.net_trump_win < 0.0
    }
}

/// TrumpYES + BidenNO + HarrisNO - TrumpNO - BidenYES - HarrisYES.
/// Sums the six legs in token order so the result does not depend on map
/// iteration order.
pub fn net_trump_win(balances: &HashMap<Token, f64>) -> f64 {
    let mut legs: Vec<(&Token, f64)> = balances
        .iter()
        .filter_map(|(token, bal)| token.trump_win_sign().map(|s| (token, s * bal)))
        .collect();
    legs.sort_by(|a, b| a.0.cmp(b.0));
    legs.into_iter().map(|(_, v)| v).sum()
}

/// One exposure per ledger address, sorted by address.
pub fn compute_exposure(ledger: &HoldingsLedger) -> Vec<NetExposure> {
    let mut out: Vec<NetExposure> = ledger
        .balances
        .iter()
        .map(|(address, balances)| NetExposure {
            address: address.clone(),
            net_trump_win: net_trump_win(balances),
        })
        .collect();
    out.sort_by(|a, b| a.address.cmp(&b.address));
    out
}
