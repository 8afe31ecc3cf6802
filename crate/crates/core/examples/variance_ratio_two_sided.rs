//! Rolling variance ratios, the two-sidedness index and the post-event
//! summary statistics around each synthetic shock.
//!
//! cargo run --release --example variance_ratio_two_sided

use shockflow::diagnostics::{post_event_stats, stats_bin_range, two_sidedness, StatWindows, VrConfig};
use shockflow::ingest::Token;
use shockflow::series::{build_bin_series, classify_ticks, EventSpec, TickConfig};
use shockflow::synth::{generate, SynthConfig};

fn main() -> shockflow::Result<()> {
    let config = SynthConfig::demo(28);
    let synth = generate(&config)?;
    let width = config.width();
    let token = Token::trump_yes();
    let signed = classify_ticks(synth.trades.iter().filter(|t| t.is_token(&token)), TickConfig::default());
    let vr = VrConfig::default();

    for shock in &config.shocks {
        let event = EventSpec::new(shock.name.clone(), shock.time);
        let series = build_bin_series(&signed, &event, stats_bin_range(&event, width, vr), width)?;
        let stats = post_event_stats(&series, vr, StatWindows::default())?;
        println!("{} (target two-sidedness {:?})", shock.name, shock.two_sided_target);
        println!("  max VR(6) in first post hour {:?}", stats.vr_post_max);
        println!("  two-sidedness pre {:?} post {:?}", stats.two_sided_pre, stats.two_sided_post);
        println!("  lambda change {:?}", stats.lambda_change);
        let ts = two_sidedness(&series);
        let around: Vec<String> = ts
            .iter()
            .filter(|p| (-3..=3).contains(&p.k))
            .map(|p| format!("{}:{}", p.k, p.value.map_or("-".into(), |v| format!("{v:.2}"))))
            .collect();
        println!("  two-sidedness by bin {}", around.join(" "));
    }
    Ok(())
}
