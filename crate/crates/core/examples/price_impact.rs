//! Kyle and Glosten-Harris impact in log-odds units before, after and
//! across a synthetic shock, plus a rolling Kyle path.
//!
//! cargo run --release --example price_impact

use shockflow::impact::{rolling_estimates, Estimator, LogOddsSeries, RollingConfig};
use shockflow::ingest::Token;
use shockflow::series::{build_bin_series, classify_ticks, EventSpec, TickConfig};
use shockflow::synth::{generate, SynthConfig};

fn main() -> shockflow::Result<()> {
    let config = SynthConfig::demo(28);
    let synth = generate(&config)?;
    let width = config.width();
    let token = Token::trump_yes();
    let signed = classify_ticks(synth.trades.iter().filter(|t| t.is_token(&token)), TickConfig::default());
    let shock = &config.shocks[0];
    let event = EventSpec::new(shock.name.clone(), shock.time);
    let series = build_bin_series(&signed, &event, event.price_window.bins(width), width)?;
    let lo = LogOddsSeries::from_bins(&series);
    println!("generator impact per million USDC: permanent {}, transitory {}", config.lambda_perm, config.lambda_trans);

    let windows: [(&str, fn(i64) -> bool); 3] = [("full", |_| true), ("pre", |k| k <= 0), ("post", |k| k >= 1)];
    for (label, keep) in windows {
        let pts: Vec<_> = lo.points.iter().filter(|p| keep(p.k)).copied().collect();
        for est in [Estimator::Kyle, Estimator::GlostenHarris] {
            let fit = est.fit(&pts)?;
            for p in &fit.params {
                println!("{label:<5} {:<14} {:<13} {:>9.4} (se {:.4})", est.as_str(), p.name, p.estimate, p.se);
            }
        }
    }

    let rolling = rolling_estimates(&lo, RollingConfig::default(), Estimator::Kyle);
    println!("rolling Kyle lambda, every sixth window:");
    for p in rolling.points.iter().step_by(6) {
        if let Some(l) = p.estimate.param("lambda") {
            println!("  k={:>4} {:>9.4}", p.anchor_k, l.estimate);
        }
    }
    Ok(())
}
