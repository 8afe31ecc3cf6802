use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shockflow::pipeline::{run, stages_for, EventEntry, RunConfig};
use shockflow::synth::{generate, write_synth, SynthConfig};
use shockflow::{Error, Result};

#[derive(Parser)]
#[command(name = "shockflow", version, about = "Event-time trading and price-discovery analysis for binary prediction markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and screen the trade log.
    Ingest(RunArgs),
    /// Event-time bin series and price-response table.
    Series(RunArgs),
    /// Abnormal activity, CAA paths and newcomer counts.
    Eventstudy(RunArgs),
    /// Trader characteristics, panel, pooled and flip-logit regressions.
    Regress(RunArgs),
    /// Kyle and Glosten-Harris impact estimates, full-window and rolling.
    Impact(RunArgs),
    /// Variance ratios, two-sidedness and post-event statistics.
    Diagnostics(RunArgs),
    /// Matched-time placebo p-values.
    Placebo(RunArgs),
    /// Write a synthetic market with known ground truth.
    Synth(SynthArgs),
    /// Every analysis stage in order.
    RunAll(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trades: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    platform_addresses: Option<PathBuf>,
    #[arg(long)]
    conversion_actors: Option<PathBuf>,
    #[arg(long)]
    transfer_pairs: Option<PathBuf>,
    /// NAME=TIMESTAMP (RFC 3339); repeat for several events. Replaces the
    /// configured event list.
    #[arg(long = "event", value_name = "NAME=TIME")]
    events: Vec<String>,
    /// Analyzed token label such as TrumpYES; repeatable.
    #[arg(long = "token")]
    tokens: Vec<String>,
    #[arg(long)]
    bin_secs: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    exclude_operators_from_prices: bool,
    #[arg(long)]
    drop_stale_returns: bool,
    /// Fixed Bartlett lag instead of the automatic rule.
    #[arg(long)]
    hac_lag: Option<usize>,
    #[arg(long)]
    rolling_window: Option<usize>,
    #[arg(long)]
    vr_window: Option<usize>,
    /// Placebo draws per event and statistic.
    #[arg(long)]
    draws: Option<usize>,
    /// Skip the placebo stage in run-all.
    #[arg(long)]
    no_placebo: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.trades {
            c.trades = v;
        }
        if let Some(v) = self.output_dir {
            c.output_dir = v;
        }
        if self.platform_addresses.is_some() {
            c.platform_addresses = self.platform_addresses;
        }
        if self.conversion_actors.is_some() {
            c.conversion_actors = self.conversion_actors;
        }
        if self.transfer_pairs.is_some() {
            c.transfer_pairs = self.transfer_pairs;
        }
        if !self.events.is_empty() {
            c.events = self
                .events
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let (name, time) = e
                        .split_once('=')
                        .ok_or_else(|| Error::validation(format!("--event[{i}]"), format!("{e:?} is not NAME=TIME")))?;
                    Ok(EventEntry { name: name.trim().into(), time: time.trim().into() })
                })
                .collect::<Result<_>>()?;
        }
        if !self.tokens.is_empty() {
            c.tokens = self.tokens;
        }
        if let Some(v) = self.bin_secs {
            c.bin_secs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.exclude_operators_from_prices |= self.exclude_operators_from_prices;
        c.diagnostics.drop_stale_returns |= self.drop_stale_returns;
        if self.hac_lag.is_some() {
            c.impact.hac_lag = self.hac_lag;
        }
        if let Some(v) = self.rolling_window {
            c.impact.rolling_window = v;
        }
        if let Some(v) = self.vr_window {
            c.diagnostics.vr_window = v;
        }
        if let Some(v) = self.draws {
            c.placebo.draws = v;
        }
        if self.no_placebo {
            c.placebo.enabled = false;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// TOML generator configuration; defaults to the three-shock demo.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "synth_out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample length of the demo market.
    #[arg(long, default_value_t = 56)]
    days: usize,
    /// Mean trader visits per bin.
    #[arg(long)]
    base_rate: Option<f64>,
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::validation("synth config", e.to_string()))?
        }
        None => SynthConfig::demo(args.days),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.base_rate {
        config.base_rate = r;
    }
    let out = generate(&config)?;
    write_synth(&args.out, &out)?;
    let run_config = RunConfig::for_synth(&args.out, &config);
    let path = args.out.join("run.toml");
    std::fs::write(&path, run_config.to_toml()).map_err(|e| Error::io(&path, e))?;
    println!("{} trades, {} traders, tick accuracy {:.4}", out.trades.len(), out.truth.traders.len(), out.truth.tick_accuracy);
    println!("run config: {}", path.display());
    Ok(())
}

fn analyze(name: &str, args: RunArgs) -> Result<()> {
    let mut config = args.into_config()?;
    if name == "placebo" {
        config.placebo.enabled = true;
    }
    let stages = stages_for(name).expect("known subcommand");
    let report = run(&config, &stages)?;
    let m = &report.manifest;
    println!("{} files in {}", m.files.len(), config.output_dir.display());
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    for i in &m.incomplete {
        eprintln!("incomplete: {} {} {}: {}", i.stage, i.event.as_deref().unwrap_or("-"), i.token.as_deref().unwrap_or("-"), i.error);
    }
    match report.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => analyze("ingest", a),
        Command::Series(a) => analyze("series", a),
        Command::Eventstudy(a) => analyze("eventstudy", a),
        Command::Regress(a) => analyze("regress", a),
        Command::Impact(a) => analyze("impact", a),
        Command::Diagnostics(a) => analyze("diagnostics", a),
        Command::Placebo(a) => analyze("placebo", a),
        Command::RunAll(a) => analyze("run-all", a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
