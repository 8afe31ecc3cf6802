use std::collections::HashSet;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::Deserialize;

use super::{Address, Direction, Market, Side, TradeRecord};
use crate::error::{Error, Result, RowError};

pub const CSV_COLUMNS: [&str; 10] = [
    "trade_id",
    "timestamp_utc",
    "market",
    "side_token",
    "price",
    "quantity",
    "value",
    "maker",
    "taker",
    "taker_direction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeFormat {
    Csv,
    Jsonl,
}

impl TradeFormat {
    pub fn from_path(path: &Path) -> TradeFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("ndjson") => {
                TradeFormat::Jsonl
            }
            _ => TradeFormat::Csv,
        }
    }
}

/// Accepted records, sorted by `(timestamp, trade_id)`, plus every rejected row.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub trades: Vec<TradeRecord>,
    pub rejected: Vec<RowError>,
}

impl ParseOutcome {
    /// Fails if any row was rejected.
    pub fn strict(self) -> Result<Vec<TradeRecord>> {
        match self.rejected.first() {
            None => Ok(self.trades),
            Some(first) => Err(Error::Schema {
                count: self.rejected.len(),
                first: first.clone(),
                rows: self.rejected,
            }),
        }
    }
}

#[derive(Default)]
struct Interner {
    addresses: HashSet<Arc<str>>,
    markets: HashSet<Arc<str>>,
}

impl Interner {
    fn address(&mut self, s: &str) -> Address {
        let s = s.trim();
        if let Some(a) = self.addresses.get(s) {
            return Address(a.clone());
        }
        let a: Arc<str> = Arc::from(s);
        self.addresses.insert(a.clone());
        Address(a)
    }

    fn market(&mut self, s: &str) -> Market {
        match Market::parse(s) {
            Market::Other(name) => {
                if let Some(m) = self.markets.get(&*name) {
                    return Market::Other(m.clone());
                }
                self.markets.insert(name.clone());
                Market::Other(name)
            }
            m => m,
        }
    }
}

pub(crate) fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

pub(crate) fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

struct RawRow<'a> {
    trade_id: &'a str,
    timestamp: &'a str,
    market: &'a str,
    side: &'a str,
    price: &'a str,
    quantity: &'a str,
    value: &'a str,
    maker: &'a str,
    taker: &'a str,
    direction: &'a str,
}

fn parse_f64(field: &str, s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("invalid {field}: {s:?}"))
}

fn build_record(raw: &RawRow<'_>, interner: &mut Interner) -> Result<TradeRecord, String> {
    if raw.trade_id.trim().is_empty() {
        return Err("empty trade_id".into());
    }
    let timestamp = parse_timestamp(raw.timestamp)
        .ok_or_else(|| format!("invalid timestamp_utc: {:?}", raw.timestamp))?;
    let side_token =
        Side::parse(raw.side).ok_or_else(|| format!("invalid side_token: {:?}", raw.side))?;
    let taker_direction = Direction::parse(raw.direction)
        .ok_or_else(|| format!("invalid taker_direction: {:?}", raw.direction))?;
    if raw.maker.trim().is_empty() || raw.taker.trim().is_empty() {
        return Err("empty address".into());
    }
    let record = TradeRecord {
        trade_id: raw.trade_id.trim().to_string(),
        timestamp,
        market: interner.market(raw.market),
        side_token,
        price: parse_f64("price", raw.price)?,
        quantity: parse_f64("quantity", raw.quantity)?,
        value: parse_f64("value", raw.value)?,
        maker: interner.address(raw.maker),
        taker: interner.address(raw.taker),
        taker_direction,
    };
    record.validate()?;
    Ok(record)
}

fn sort_trades(trades: &mut [TradeRecord]) {
    trades.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.trade_id.cmp(&b.trade_id)));
}

fn parse_csv<R: Read>(source: R) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        // An empty stream has no header row at all.
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => return Ok(ParseOutcome::default()),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Ok(ParseOutcome::default());
    }
    let mut index = [0usize; 10];
    for (slot, name) in index.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            let first = RowError { line: 1, message: format!("missing column {name}") };
            Error::Schema { count: 1, first: first.clone(), rows: vec![first] }
        })?;
    }
    let mut interner = Interner::default();
    let mut out = ParseOutcome::default();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                out.rejected.push(RowError { line, message: e.to_string() });
                continue;
            }
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let get = |i: usize| record.get(index[i]).unwrap_or("");
        if index.iter().any(|&i| i >= record.len()) {
            out.rejected.push(RowError { line, message: "missing field".into() });
            continue;
        }
        let raw = RawRow {
            trade_id: get(0),
            timestamp: get(1),
            market: get(2),
            side: get(3),
            price: get(4),
            quantity: get(5),
            value: get(6),
            maker: get(7),
            taker: get(8),
            direction: get(9),
        };
        match build_record(&raw, &mut interner) {
            Ok(r) => out.trades.push(r),
            Err(message) => out.rejected.push(RowError { line, message }),
        }
    }
    sort_trades(&mut out.trades);
    Ok(out)
}

/// JSONL rows may carry numbers either as JSON numbers or strings.
#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

impl NumOrStr {
    fn text(&self) -> String {
        match self {
            NumOrStr::Num(v) => format!("{v}"),
            NumOrStr::Str(s) => s.clone(),
        }
    }
}

#[derive(Deserialize)]
struct JsonRow {
    trade_id: NumOrStr,
    timestamp_utc: String,
    market: String,
    side_token: String,
    price: NumOrStr,
    quantity: NumOrStr,
    value: NumOrStr,
    maker: String,
    taker: String,
    taker_direction: String,
}

fn parse_jsonl<R: Read>(source: R) -> Result<ParseOutcome> {
    let reader = std::io::BufReader::new(source);
    let mut interner = Interner::default();
    let mut out = ParseOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<trade stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.rejected.push(RowError { line: line_no, message: e.to_string() });
                continue;
            }
        };
        let (id, price, quantity, value) =
            (row.trade_id.text(), row.price.text(), row.quantity.text(), row.value.text());
        let raw = RawRow {
            trade_id: &id,
            timestamp: &row.timestamp_utc,
            market: &row.market,
            side: &row.side_token,
            price: &price,
            quantity: &quantity,
            value: &value,
            maker: &row.maker,
            taker: &row.taker,
            direction: &row.taker_direction,
        };
        match build_record(&raw, &mut interner) {
            Ok(r) => out.trades.push(r),
            Err(message) => out.rejected.push(RowError { line: line_no, message }),
        }
    }
    sort_trades(&mut out.trades);
    Ok(out)
}

/// Parses a trade log. Malformed rows are collected, not fatal; a missing
/// CSV header column is fatal.
pub fn parse_trades<R: Read>(source: R, format: TradeFormat) -> Result<ParseOutcome> {
    match format {
        TradeFormat::Csv => parse_csv(source),
        TradeFormat::Jsonl => parse_jsonl(source),
    }
}

pub fn parse_trades_path(path: &Path) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::with_capacity(1 << 20, file);
    parse_trades(reader, TradeFormat::from_path(path))
        .map_err(|e| e.context("ingest", path.display().to_string()))
}

/// Writes trades in the documented CSV schema. Floats use shortest
/// round-trip formatting, so parse(write(x)) reproduces `x` exactly.
pub fn write_trades_csv<W: Write>(sink: W, trades: &[TradeRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    w.write_record(CSV_COLUMNS)?;
    for t in trades {
        w.write_record([
            t.trade_id.as_str(),
            &format_timestamp(&t.timestamp),
            t.market.as_str(),
            t.side_token.as_str(),
            &t.price.to_string(),
            &t.quantity.to_string(),
            &t.value.to_string(),
            t.maker.as_str(),
            t.taker.as_str(),
            t.taker_direction.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trade sink>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "trade_id,timestamp_utc,market,side_token,price,quantity,value,maker,taker,taker_direction\n";

    fn csv(rows: &str) -> ParseOutcome {
        parse_trades(format!("{HEADER}{rows}").as_bytes(), TradeFormat::Csv).unwrap()
    }

    #[test]
    fn empty_input_is_empty_sequence() {
        let out = parse_trades(&b""[..], TradeFormat::Csv).unwrap();
        assert!(out.trades.is_empty() && out.rejected.is_empty());
        let out = parse_trades(HEADER.as_bytes(), TradeFormat::Csv).unwrap();
        assert!(out.trades.is_empty());
        let out = parse_trades(&b""[..], TradeFormat::Jsonl).unwrap();
        assert!(out.trades.is_empty());
    }

    #[test]
    fn single_well_formed_row() {
        let out = csv("t1,2024-06-28T01:00:00Z,Trump,YES,0.61,100,61.0,0xa,0xb,Buy\n");
        assert!(out.rejected.is_empty());
        let t = &out.trades[0];
        assert_eq!(t.price, 0.61);
        assert!((t.value - t.price * t.quantity).abs() <= 1e-6 * t.value + 1e-9);
        assert_eq!(t.token().to_string(), "TrumpYES");
    }

    #[test]
    fn price_out_of_range_rejected_with_line() {
        let out = csv(
            "t1,2024-06-28T01:00:00Z,Trump,YES,0.61,100,61.0,0xa,0xb,Buy\n\
             t2,2024-06-28T01:00:01Z,Trump,YES,1.2,100,120.0,0xa,0xb,Buy\n",
        );
        assert_eq!(out.trades.len(), 1);
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].line, 3);
        assert!(out.rejected[0].message.contains("price out of range"));
        let err = out.strict().unwrap_err();
        assert!(matches!(err, Error::Schema { count: 1, .. }));
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = parse_trades(&b"trade_id,price\n1,0.5\n"[..], TradeFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("missing column timestamp_utc"));
    }

    #[test]
    fn sorted_by_time_then_id_and_addresses_interned() {
        let out = csv(
            "b,2024-06-28T01:00:00Z,Trump,YES,0.5,2,1,0xa,0xb,Buy\n\
             c,2024-06-27T01:00:00Z,Trump,NO,0.5,2,1,0xa,0xb,Sell\n\
             a,2024-06-28T01:00:00Z,Biden,YES,0.5,2,1,0xb,0xa,Buy\n",
        );
        let ids: Vec<_> = out.trades.iter().map(|t| t.trade_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert!(Arc::ptr_eq(&out.trades[0].maker.0, &out.trades[2].maker.0));
    }

    #[test]
    fn jsonl_mirrors_csv() {
        let line = r#"{"trade_id":"t1","timestamp_utc":"2024-06-28T01:00:00Z","market":"Harris","side_token":"NO","price":0.25,"quantity":"8","value":2.0,"maker":"0xa","taker":"0xb","taker_direction":"Sell"}"#;
        let out = parse_trades(format!("{line}\nnot json\n").as_bytes(), TradeFormat::Jsonl).unwrap();
        assert_eq!(out.trades.len(), 1);
        assert_eq!(out.rejected[0].line, 2);
        assert_eq!(out.trades[0].token().to_string(), "HarrisNO");
    }

    #[test]
    fn value_inconsistency_and_self_trade_rejected() {
        let out = csv(
            "t1,2024-06-28T01:00:00Z,Trump,YES,0.5,100,60,0xa,0xb,Buy\n\
             t2,2024-06-28T01:00:00Z,Trump,YES,0.5,100,50,0xa,0xa,Buy\n",
        );
        assert_eq!(out.rejected.len(), 2);
    }

    #[test]
    fn write_then_parse_is_exact() {
        let out = csv("t1,2024-06-28T01:00:00.250Z,Trump,YES,0.6123456789,100,61.23456789,0xa,0xb,Buy\n");
        let mut buf = Vec::new();
        write_trades_csv(&mut buf, &out.trades).unwrap();
        let back = parse_trades(&buf[..], TradeFormat::Csv).unwrap().strict().unwrap();
        assert_eq!(back, out.trades);
    }
}
