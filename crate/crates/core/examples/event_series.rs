//! Bins the Trump YES tape around each shock of a synthetic market and
//! prints the price-response table.
//!
//! cargo run --release --example event_series

use shockflow::ingest::Token;
use shockflow::series::{build_bin_series, classify_ticks, price_response_summary, render_price_table, EventSpec, TickConfig};
use shockflow::synth::{generate, SynthConfig};

fn main() -> shockflow::Result<()> {
    let config = SynthConfig::demo(28);
    let synth = generate(&config)?;
    let width = config.width();
    let token = Token::trump_yes();
    let signed = classify_ticks(synth.trades.iter().filter(|t| t.is_token(&token)), TickConfig::default());

    let mut rows = Vec::new();
    for shock in &config.shocks {
        let event = EventSpec::new(shock.name.clone(), shock.time);
        let series = build_bin_series(&signed, &event, event.price_window.bins(width), width)?;
        let traded = series.bins.iter().filter(|b| b.trade_count > 0).count();
        println!("{}: {} bins, {} with trades", shock.name, series.bins.len(), traded);
        rows.push((shock.name.clone(), price_response_summary(&series)?));
    }
    print!("{}", render_price_table(&rows));
    Ok(())
}
