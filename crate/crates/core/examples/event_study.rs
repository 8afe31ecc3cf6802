//! Abnormal participation, volume and frequency around a synthetic shock,
//! with the cumulative paths and newcomer counts.
//!
//! cargo run --release --example event_study

use shockflow::eventstudy::{run_event_study, EventStudyConfig, Outcome};
use shockflow::ingest::flag_addresses;
use shockflow::series::EventSpec;
use shockflow::synth::{generate, SynthConfig};

fn main() -> shockflow::Result<()> {
    let config = SynthConfig::demo(28);
    let synth = generate(&config)?;
    let profiles = flag_addresses(&synth.trades, &synth.aux);
    let shock = &config.shocks[0];
    let event = EventSpec::new(shock.name.clone(), shock.time);
    let study = run_event_study(&synth.trades, &profiles, &event, config.width(), &EventStudyConfig::default())?;

    println!("{}: {} incumbent traders", event.name, study.grid.traders.len());
    println!("{:>4} {:>10} {:>10} {:>10}", "k", "CAA(AP)", "lo95", "hi95");
    for p in study.caa(Outcome::Participation) {
        println!("{:>4} {:>10.4} {:>10.4} {:>10.4}", p.k, p.caa, p.lo95, p.hi95);
    }
    for outcome in [Outcome::Volume, Outcome::Frequency] {
        if let Some(last) = study.caa(outcome).last() {
            println!("CAA({}) at k={}: {:.4} [{:.4}, {:.4}]", outcome.as_str(), last.k, last.caa, last.lo95, last.hi95);
        }
    }
    let newcomers: usize = study.newcomers.iter().map(|(_, n)| n).sum();
    println!("newcomers in the trading window: {newcomers}");
    Ok(())
}
