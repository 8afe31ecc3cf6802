//! Generates a synthetic market with one news shock and writes the trade log,
//! ground truth and auxiliary address files.
//!
//! cargo run --release --example synthetic_market -- [out_dir] [days] [visits_per_bin]

use std::path::PathBuf;
use std::time::Instant;

use chrono::TimeDelta;
use shockflow::synth::{generate, write_synth, Shock, SynthConfig};

fn main() -> shockflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth_out".into()));
    let days: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(14);
    let rate: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(30.0);

    let base = SynthConfig { bins: 288 * days, base_rate: rate, ..SynthConfig::default() };
    let shock = Shock {
        name: "debate".into(),
        time: base.start + TimeDelta::days(days as i64 / 2) + TimeDelta::hours(1),
        jump: 0.3,
        arrival_multiplier: 4.0,
        two_sided_target: Some(0.5),
        exposure_response: 1.5,
        new_traders: 40,
        ..Shock::default()
    };
    let config = SynthConfig { shocks: vec![shock], ..base };

    let t0 = Instant::now();
    let synth = generate(&config)?;
    let gen_secs = t0.elapsed().as_secs_f64();
    write_synth(&out, &synth)?;
    println!("trades            {}", synth.trades.len());
    println!("traders           {}", synth.truth.traders.len());
    println!("tick accuracy     {:.4} (Trump YES {:.4})", synth.truth.tick_accuracy, synth.truth.tick_accuracy_trump_yes);
    println!("generation        {gen_secs:.2}s");
    println!("written to        {}", out.display());
    Ok(())
}
