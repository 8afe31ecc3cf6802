//! Trade-log ingestion: record types, parsing, address screening and
//! holdings reconstruction.

mod flags;
mod holdings;
mod parse;

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use flags::{
    flag_addresses, read_address_list, read_transfer_pairs, AddressProfile, AuxiliarySets,
    FlagReasons,
};
pub use holdings::{compute_exposure, negative_holders, HoldingsLedger, NetExposure, net_trump_win};
pub use parse::{parse_trades, parse_trades_path, write_trades_csv, ParseOutcome, TradeFormat};

/// Tolerance below zero before a replayed balance counts as negative.
pub const HOLDINGS_TOLERANCE: f64 = 1e-9;

/// A wallet address. Cloning is cheap; parsing interns repeated addresses.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(Arc<str>);

impl Address {
    pub fn new(s: &str) -> Self {
        Address(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address::new(s)
    }
}

impl Borrow<str> for Address {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// Candidate contract a token belongs to.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Market {
    Trump,
    Biden,
    Harris,
    Other(Arc<str>),
}

impl Market {
    pub fn parse(s: &str) -> Market {
        match s.trim() {
            t if t.eq_ignore_ascii_case("trump") => Market::Trump,
            t if t.eq_ignore_ascii_case("biden") => Market::Biden,
            t if t.eq_ignore_ascii_case("harris") => Market::Harris,
            t => Market::Other(Arc::from(t)),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Market::Trump => "Trump",
            Market::Biden => "Biden",
            Market::Harris => "Harris",
            Market::Other(name) => name,
        }
    }

    /// Whether this is one of the three analyzed candidates.
    pub fn is_analyzed(&self) -> bool {
        !matches!(self, Market::Other(_))
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Yes,
    No,
}

impl Side {
    pub fn parse(s: &str) -> Option<Side> {
        match s.trim() {
            t if t.eq_ignore_ascii_case("yes") => Some(Side::Yes),
            t if t.eq_ignore_ascii_case("no") => Some(Side::No),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Yes => "YES",
            Side::No => "NO",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Yes => Side::No,
            Side::No => Side::Yes,
        }
    }
}

/// Taker's action on the traded token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Buy,
    Sell,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Direction> {
        match s.trim() {
            t if t.eq_ignore_ascii_case("buy") => Some(Direction::Buy),
            t if t.eq_ignore_ascii_case("sell") => Some(Direction::Sell),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Buy => "Buy",
            Direction::Sell => "Sell",
        }
    }

    /// +1 for a buy, -1 for a sell.
    pub fn sign(self) -> i8 {
        match self {
            Direction::Buy => 1,
            Direction::Sell => -1,
        }
    }
}

/// A tradable outcome token, e.g. Trump YES.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    pub market: Market,
    pub side: Side,
}

impl Token {
    pub const fn new(market: Market, side: Side) -> Self {
        Token { market, side }
    }

    pub fn trump_yes() -> Self {
        Token::new(Market::Trump, Side::Yes)
    }

    /// Parses labels like `TrumpYES`, `Trump-YES` or `Trump YES`.
    pub fn parse_label(label: &str) -> Option<Token> {
        let label = label.trim();
        let upper = label.to_ascii_uppercase();
        let (name, side) = if let Some(stripped) = upper.strip_suffix("YES") {
            (&label[..stripped.len()], Side::Yes)
        } else if let Some(stripped) = upper.strip_suffix("NO") {
            (&label[..stripped.len()], Side::No)
        } else {
            return None;
        };
        let name = name.trim_end_matches(['-', '_', ' ', ':']);
        if name.is_empty() {
            return None;
        }
        Some(Token::new(Market::parse(name), side))
    }

    /// Sign of this token's payoff in the "Trump wins" state, for the three
    /// analyzed candidates; `None` otherwise.
    pub fn trump_win_sign(&self) -> Option<f64> {
        match (&self.market, self.side) {
            (Market::Trump, Side::Yes) | (Market::Biden, Side::No) | (Market::Harris, Side::No) => {
                Some(1.0)
            }
            (Market::Trump, Side::No) | (Market::Biden, Side::Yes) | (Market::Harris, Side::Yes) => {
                Some(-1.0)
            }
            (Market::Other(_), _) => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.market, self.side.as_str())
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// One matched trade.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub trade_id: String,
    pub timestamp: DateTime<Utc>,
    pub market: Market,
    pub side_token: Side,
    /// USDC per token, strictly inside (0, 1).
    pub price: f64,
    pub quantity: f64,
    /// USDC.
    pub value: f64,
    pub maker: Address,
    pub taker: Address,
    pub taker_direction: Direction,
}

impl TradeRecord {
    pub fn token(&self) -> Token {
        Token::new(self.market.clone(), self.side_token)
    }

    pub fn is_token(&self, token: &Token) -> bool {
        self.side_token == token.side && self.market == token.market
    }

    /// Signed token change for `addr` (taker's action, mirrored for the maker).
    pub fn signed_quantity_for(&self, addr: &Address) -> Option<f64> {
        let taker = self.taker_direction.sign() as f64 * self.quantity;
        if &self.taker == addr {
            Some(taker)
        } else if &self.maker == addr {
            Some(-taker)
        } else {
            None
        }
    }

    /// Checks the record-level invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.price > 0.0 && self.price < 1.0) {
            return Err(format!("price out of range: {}", self.price));
        }
        if !(self.quantity.is_finite() && self.quantity >= 0.0) {
            return Err(format!("negative quantity: {}", self.quantity));
        }
        if !(self.value.is_finite() && self.value >= 0.0) {
            return Err(format!("negative value: {}", self.value));
        }
        let tol = 1e-6 * self.value + 1e-9;
        if (self.value - self.price * self.quantity).abs() > tol {
            return Err(format!(
                "value {} inconsistent with price x quantity {}",
                self.value,
                self.price * self.quantity
            ));
        }
        if self.maker == self.taker {
            return Err(format!("maker equals taker: {}", self.maker));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_labels() {
        assert_eq!(Token::parse_label("TrumpYES"), Some(Token::trump_yes()));
        assert_eq!(Token::parse_label("harris-no"), Some(Token::new(Market::Harris, Side::No)));
        assert_eq!(Token::parse_label("YES"), None);
        assert_eq!(Token::trump_yes().to_string(), "TrumpYES");
    }

    #[test]
    fn trump_win_signs_cover_six_legs() {
        let pos: Vec<_> = [Market::Trump, Market::Biden, Market::Harris]
            .into_iter()
            .flat_map(|m| [Side::Yes, Side::No].map(|s| Token::new(m.clone(), s)))
            .filter(|t| t.trump_win_sign() == Some(1.0))
            .map(|t| t.to_string())
            .collect();
        assert_eq!(pos, ["TrumpYES", "BidenNO", "HarrisNO"]);
        assert_eq!(Token::new(Market::parse("Kennedy"), Side::Yes).trump_win_sign(), None);
    }
}
