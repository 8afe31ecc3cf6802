//! Every stage on a synthetic market, then a summary of the manifest.
//!
//! cargo run --release --example full_pipeline -- [out_dir] [draws]

use std::path::PathBuf;

use shockflow::pipeline::{run, RunConfig, Stage};
use shockflow::synth::{generate, write_synth, SynthConfig};

fn main() -> shockflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "pipeline_out".into()));
    let draws: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let synth_config = SynthConfig::demo(56);
    write_synth(&dir, &generate(&synth_config)?)?;
    let mut config = RunConfig::for_synth(&dir, &synth_config);
    config.placebo.draws = draws;

    let report = run(&config, &Stage::ALL)?;
    let m = &report.manifest;
    println!("config hash {}", m.config_hash);
    println!("{} files, complete: {}", m.files.len(), m.complete);
    for f in m.files.iter().filter(|f| f.path.starts_with("tables/") || f.path.starts_with("placebo/placebo")) {
        println!("  {:<36} {:>8} bytes", f.path, f.bytes);
    }
    for w in &m.warnings {
        println!("warning: {w}");
    }
    println!("exit code {}", report.exit_code());
    Ok(())
}
