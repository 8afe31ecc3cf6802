//! Writes a synthetic trade log, parses it back, flags platform and
//! operator addresses and prints the largest net Trump-win exposures.
//!
//! cargo run --release --example ingest_and_flag

use shockflow::ingest::{compute_exposure, flag_addresses, parse_trades_path, HoldingsLedger};
use shockflow::synth::{generate, write_synth, SynthConfig};

fn main() -> shockflow::Result<()> {
    let dir = std::env::temp_dir().join("shockflow_ingest_example");
    let synth = generate(&SynthConfig::demo(28))?;
    write_synth(&dir, &synth)?;

    let parsed = parse_trades_path(&dir.join("trades.csv"))?;
    println!("parsed {} trades, {} rejected rows", parsed.trades.len(), parsed.rejected.len());
    let profiles = flag_addresses(&parsed.trades, &synth.aux);
    let flagged: Vec<_> = profiles.values().filter(|p| p.reasons.any()).collect();
    println!("{} addresses, {} flagged", profiles.len(), flagged.len());
    for p in flagged.iter().take(8) {
        println!("  {:<14} {:?}", p.address.as_str(), p.reasons);
    }

    let ledger = HoldingsLedger::replay(&parsed.trades, None);
    let mut exposure = compute_exposure(&ledger);
    exposure.sort_by(|a, b| b.net_trump_win.abs().total_cmp(&a.net_trump_win.abs()));
    println!("largest net Trump-win exposures:");
    for e in exposure.iter().take(5) {
        println!("  {:<14} {:>14.2}", e.address.as_str(), e.net_trump_win);
    }
    Ok(())
}
