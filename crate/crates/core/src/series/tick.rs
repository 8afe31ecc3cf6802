use serde::{Deserialize, Serialize};

use crate::ingest::TradeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickConfig {
    /// Direction given to trades before the first price change.
    pub warmup_direction: i8,
}

impl Default for TickConfig {
    fn default() -> Self {
        TickConfig { warmup_direction: 1 }
    }
}

/// A trade with its tick-rule direction.
#[derive(Debug, Clone, Copy)]
pub struct SignedTrade<'a> {
    pub trade: &'a TradeRecord,
    /// +1 buyer-initiated, -1 seller-initiated.
    pub direction: i8,
}

impl SignedTrade<'_> {
    /// Signed flow in millions of USDC.
    pub fn signed_flow(&self) -> f64 {
        self.direction as f64 * self.trade.value / 1e6
    }
}

/// Tick rule over one token's time-sorted trades: the sign of the price
/// change, carrying the last non-zero sign through unchanged prices.
pub fn classify_ticks<'a, I>(trades: I, config: TickConfig) -> Vec<SignedTrade<'a>>
where
    I: IntoIterator<Item = &'a TradeRecord>,
{
    let mut last_price: Option<f64> = None;
    let mut last_dir = config.warmup_direction;
    trades
        .into_iter()
        .map(|trade| {
            if let Some(prev) = last_price {
                if trade.price > prev {
                    last_dir = 1;
                } else if trade.price < prev {
                    last_dir = -1;
                }
            }
            last_price = Some(trade.price);
            SignedTrade { trade, direction: last_dir }
        })
        .collect()
}
