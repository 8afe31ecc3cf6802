//! Runs the event-study and regression stages on a synthetic market and
//! prints the characteristic, panel, pooled and flip-logit tables.
//!
//! cargo run --release --example heterogeneity_regressions

use shockflow::pipeline::{run, RunConfig, Stage};
use shockflow::synth::{generate, write_synth, SynthConfig};

fn main() -> shockflow::Result<()> {
    let dir = std::env::temp_dir().join("shockflow_regress_example");
    let synth_config = SynthConfig::demo(56);
    write_synth(&dir, &generate(&synth_config)?)?;
    let config = RunConfig::for_synth(&dir, &synth_config);
    let report = run(&config, &[Stage::Regress])?;
    for table in ["panel_fe", "pooled_ols", "logit_flips"] {
        let path = config.output_dir.join("tables").join(format!("{table}.txt"));
        let text = std::fs::read_to_string(&path).map_err(|e| shockflow::Error::io(&path, e))?;
        println!("== {table}\n{text}");
    }
    match report.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
