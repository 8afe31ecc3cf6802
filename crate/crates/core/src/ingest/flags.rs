use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::holdings::negative_holders;
use super::{Address, TradeRecord};
use crate::error::{Error, Result};

/// Side inputs for address screening. Empty sets disable their filter.
#[derive(Debug, Clone, Default)]
pub struct AuxiliarySets {
    pub known_platform: BTreeSet<Address>,
    pub conversion_actors: BTreeSet<Address>,
    pub offexchange_transfers: Vec<(Address, Address)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FlagReasons {
    pub platform: bool,
    pub conversion: bool,
    pub negative_holdings: bool,
    pub cluster: bool,
}

impl FlagReasons {
    pub fn any(&self) -> bool {
        self.platform || self.conversion || self.negative_holdings || self.cluster
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddressProfile {
    pub address: Address,
    pub is_platform: bool,
    pub is_advanced_operator: bool,
    pub cluster_id: Option<usize>,
    /// `None` for addresses that appear only in auxiliary sets.
    pub first_trade_time: Option<DateTime<Utc>>,
    pub reasons: FlagReasons,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of the transfer graph, numbered in order of each
/// component's smallest address.
fn transfer_clusters(pairs: &[(Address, Address)]) -> BTreeMap<Address, usize> {
    let nodes: BTreeSet<&Address> = pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let index: HashMap<&Address, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut dsu = DisjointSet::new(nodes.len());
    for (a, b) in pairs {
        dsu.union(index[a], index[b]);
    }
    // Roots are minimal indices, and indices follow address order.
    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut out = BTreeMap::new();
    for (i, addr) in nodes.iter().enumerate() {
        let root = dsu.find(i);
        let next = label.len();
        let id = *label.entry(root).or_insert(next);
        out.insert((*addr).clone(), id);
    }
    out
}

/// Screens addresses: platform wallets, conversion actors, replayed negative
/// holdings, and members of off-exchange transfer clusters are all flagged
/// as advanced operators. `trades` must be time-sorted.
pub fn flag_addresses(trades: &[TradeRecord], aux: &AuxiliarySets) -> BTreeMap<Address, AddressProfile> {
    let mut first_seen: HashMap<&Address, DateTime<Utc>> = HashMap::new();
    for t in trades {
        for a in [&t.maker, &t.taker] {
            first_seen.entry(a).or_insert(t.timestamp);
        }
    }
    let negative = negative_holders(trades);
    let clusters = transfer_clusters(&aux.offexchange_transfers);

    let mut all: BTreeSet<&Address> = first_seen.keys().copied().collect();
    all.extend(aux.known_platform.iter());
    all.extend(aux.conversion_actors.iter());
    all.extend(clusters.keys());

    all.into_iter()
        .map(|addr| {
            let reasons = FlagReasons {
                platform: aux.known_platform.contains(addr),
                conversion: aux.conversion_actors.contains(addr),
                negative_holdings: negative.contains(addr),
                cluster: clusters.contains_key(addr),
            };
            let profile = AddressProfile {
                address: addr.clone(),
                is_platform: reasons.platform,
                is_advanced_operator: reasons.any(),
                cluster_id: clusters.get(addr).copied(),
                first_trade_time: first_seen.get(addr).copied(),
                reasons,
            };
            (addr.clone(), profile)
        })
        .collect()
}

/// One address per line; blank lines and `#` comments are skipped.
pub fn read_address_list(path: &Path) -> Result<BTreeSet<Address>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(Address::new)
        .collect())
}

/// CSV with header `addr_a,addr_b`.
pub fn read_transfer_pairs(path: &Path) -> Result<Vec<(Address, Address)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::validation(path.display().to_string(), format!("missing column {name}"))
        })
    };
    let (ia, ib) = (col("addr_a")?, col("addr_b")?);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let (a, b) = (rec.get(ia).unwrap_or("").trim(), rec.get(ib).unwrap_or("").trim());
        if a.is_empty() || b.is_empty() {
            return Err(Error::data(format!("{}: empty address in transfer pair", path.display())));
        }
        out.push((Address::new(a), Address::new(b)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Direction, Market, Side};
    use chrono::TimeZone;

    fn trade(id: &str, secs: i64, taker: &str, maker: &str, dir: Direction, qty: f64) -> TradeRecord {
        TradeRecord {
            trade_id: id.into(),
            timestamp: Utc.timestamp_opt(1_720_000_000 + secs, 0).unwrap(),
            market: Market::Trump,
            side_token: Side::Yes,
            price: 0.5,
            quantity: qty,
            value: 0.5 * qty,
            maker: maker.into(),
            taker: taker.into(),
            taker_direction: dir,
        }
    }

    #[test]
    fn overselling_flags_address() {
        let trades = vec![
            trade("1", 0, "0xa", "0xlp", Direction::Buy, 5.0),
            trade("2", 1, "0xa", "0xb", Direction::Sell, 10.0),
        ];
        let aux = AuxiliarySets {
            conversion_actors: ["0xlp".into()].into_iter().collect(),
            ..Default::default()
        };
        let p = flag_addresses(&trades, &aux);
        assert!(p["0xa"].reasons.negative_holdings && p["0xa"].is_advanced_operator);
        assert!(!p["0xb"].is_advanced_operator);
        assert!(p["0xlp"].reasons.conversion && p["0xlp"].reasons.negative_holdings);
    }

    #[test]
    fn platform_without_trades() {
        let aux = AuxiliarySets {
            known_platform: ["0xpm".into()].into_iter().collect(),
            ..Default::default()
        };
        let p = flag_addresses(&[], &aux);
        let prof = &p["0xpm"];
        assert!(prof.is_platform && prof.is_advanced_operator);
        assert_eq!(prof.first_trade_time, None);
    }

    #[test]
    fn transfer_pairs_cluster_transitively() {
        let aux = AuxiliarySets {
            offexchange_transfers: vec![("0xa".into(), "0xb".into()), ("0xb".into(), "0xc".into()), ("0xx".into(), "0xy".into())],
            ..Default::default()
        };
        let p = flag_addresses(&[], &aux);
        let ids: Vec<_> = ["0xa", "0xb", "0xc"].iter().map(|a| p[*a].cluster_id).collect();
        assert_eq!(ids, [Some(0), Some(0), Some(0)]);
        assert_eq!(p["0xx"].cluster_id, Some(1));
        assert!(p.values().all(|pr| pr.is_advanced_operator));
    }

    #[test]
    fn first_trade_time_is_minimum() {
        let trades = vec![
            trade("1", 0, "0xa", "0xlp", Direction::Buy, 5.0),
            trade("2", 60, "0xb", "0xa", Direction::Buy, 1.0),
        ];
        let p = flag_addresses(&trades, &AuxiliarySets::default());
        assert_eq!(p["0xa"].first_trade_time, Some(trades[0].timestamp));
        assert_eq!(p["0xb"].first_trade_time, Some(trades[1].timestamp));
    }
}
