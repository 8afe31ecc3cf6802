use std::path::Path;
use std::process::{Command, Output};

use chrono::TimeDelta;
use shockflow::pipeline::{read_manifest, RunConfig, MANIFEST};
use shockflow::synth::{generate, write_synth, FlipLogit, Shock, SynthConfig};

fn shockflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shockflow")).args(args).output().expect("binary runs")
}

fn small_market(dir: &Path) -> RunConfig {
    let base = SynthConfig { bins: 288 * 6, traders: 300, base_rate: 6.0, ..SynthConfig::default() };
    let shock = Shock {
        name: "news".into(),
        time: base.start + TimeDelta::days(4) + TimeDelta::hours(2),
        jump: 0.2,
        arrival_multiplier: 3.0,
        new_traders: 10,
        flip: Some(FlipLogit::default()),
        ..Shock::default()
    };
    let synth = SynthConfig { shocks: vec![shock], ..base };
    write_synth(dir, &generate(&synth).unwrap()).unwrap();
    let config = RunConfig::for_synth(dir, &synth);
    std::fs::write(dir.join("run.toml"), config.to_toml()).unwrap();
    config
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_all_is_reproducible_and_fully_listed() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_market(dir.path());
    let cfg = dir.path().join("run.toml");
    let args = ["run-all", "--config", cfg.to_str().unwrap(), "--no-placebo"];
    let first = shockflow(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let a = std::fs::read(config.output_dir.join(MANIFEST)).unwrap();
    let second = shockflow(&args);
    assert_eq!(second.status.code(), Some(0), "{}", stderr(&second));
    let b = std::fs::read(config.output_dir.join(MANIFEST)).unwrap();
    assert_eq!(a, b);

    let m = read_manifest(&config.output_dir).unwrap();
    assert!(m.complete);
    for f in &m.files {
        assert!(config.output_dir.join(&f.path).is_file(), "{} listed but missing", f.path);
    }
    for required in ["ingest/summary.json", "tables/price_response.txt", "tables/panel_fe.txt", "tables/logit_flips.txt"] {
        assert!(m.files.iter().any(|f| f.path == required), "{required} not produced");
    }
    assert!(m.files.iter().any(|f| f.path.ends_with("impact.csv")));
    assert!(m.files.iter().any(|f| f.path.ends_with("vr.csv")));
}

#[test]
fn a_market_without_flips_fails_only_the_logit() {
    let dir = tempfile::tempdir().unwrap();
    let mut synth = SynthConfig { bins: 288 * 6, traders: 300, base_rate: 6.0, ..SynthConfig::default() };
    synth.shocks = vec![Shock { name: "quiet".into(), time: synth.start + TimeDelta::days(4), ..Shock::default() }];
    write_synth(dir.path(), &generate(&synth).unwrap()).unwrap();
    let config = RunConfig::for_synth(dir.path(), &synth);
    std::fs::write(dir.path().join("run.toml"), config.to_toml()).unwrap();
    let o = shockflow(&["regress", "--config", dir.path().join("run.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("0 of"), "{}", stderr(&o));
    let m = read_manifest(&config.output_dir).unwrap();
    assert!(!m.complete);
    assert!(m.files.iter().any(|f| f.path == "tables/panel_fe.txt"));
}

#[test]
fn output_dir_does_not_change_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_market(dir.path());
    let cfg = dir.path().join("run.toml");
    for out in ["a", "b"] {
        let o = shockflow(&["ingest", "--config", cfg.to_str().unwrap(), "--output-dir", dir.path().join(out).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = read_manifest(&dir.path().join("a")).unwrap();
    let b = read_manifest(&dir.path().join("b")).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.config_hash, config.hash());
}

#[test]
fn malformed_event_time_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    small_market(dir.path());
    let cfg = dir.path().join("run.toml");
    let o = shockflow(&["series", "--config", cfg.to_str().unwrap(), "--event", "debate=2024-13-40T25:00:00Z"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("events[0].time"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "trades = \"t.csv\"\nbin_seconds = 60\n").unwrap();
    let o = shockflow(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bin_seconds"), "{}", stderr(&o));
}

#[test]
fn a_log_without_valid_rows_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let trades = dir.path().join("trades.csv");
    std::fs::write(
        &trades,
        "trade_id,timestamp_utc,market,side_token,price,quantity,value,maker,taker,taker_direction\n\
         t1,yesterday,Trump,YES,0.5,10,5,0xa,0xb,BUY\n",
    )
    .unwrap();
    let o = shockflow(&[
        "ingest",
        "--trades",
        trades.to_str().unwrap(),
        "--output-dir",
        dir.path().join("out").to_str().unwrap(),
        "--event",
        "e=2024-07-01T00:00:00Z",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    assert_eq!(shockflow(&["series", "--bin-secs", "five"]).status.code(), Some(1));
    assert_eq!(shockflow(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(shockflow(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_writes_a_runnable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = shockflow(&["synth", "--out", out.to_str().unwrap(), "--days", "21", "--base-rate", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let config = RunConfig::load(&out.join("run.toml")).unwrap();
    assert_eq!(config.events.len(), 3);
    config.validate().unwrap();
}
