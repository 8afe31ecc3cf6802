//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. `ACCEPTANCE_ONLY=1,4` restricts the run.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, Utc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Binomial, DiscreteCDF};

use shockflow::diagnostics::{two_sided_index, variance_ratio_window};
use shockflow::eventstudy::{run_event_study, EventStudyConfig, Outcome};
use shockflow::heterogeneity::{fit_logit_raw, fit_two_way_fe};
use shockflow::impact::{fit_glosten_harris, fit_kyle, to_log_odds, LogOddsSeries};
use shockflow::ingest::{
    compute_exposure, flag_addresses, Address, Direction, HoldingsLedger, Market, Side, Token, TradeRecord,
};
use shockflow::pipeline::{read_manifest, run, sha256_file, RunConfig, Session, Stage, MANIFEST};
use shockflow::placebo::{placebo_for_event, randomization_p, PlaceboSpec, StatContext, Statistic};
use shockflow::series::{
    build_bin_series, classify_ticks, price_response_summary, render_price_table, Bin, BinSeries, EventSpec, TickConfig,
};
use shockflow::stats::{cluster_covariance, cluster_factor, robust_covariance};
use shockflow::synth::{generate, write_synth, Shock, SynthConfig};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn trump_yes_series(trades: &[TradeRecord], event: &EventSpec, bins: std::ops::RangeInclusive<i64>, width: TimeDelta) -> Result<BinSeries, String> {
    let ty = Token::trump_yes();
    let signed = classify_ticks(trades.iter().filter(|t| t.is_token(&ty)), TickConfig::default());
    build_bin_series(&signed, event, bins, width).map_err(e2s)
}

/// Glosten-Harris recovery on generated 72-bin windows, and exact Kyle fits.
fn criterion_1() -> Check {
    const SEEDS: u64 = 200;
    const T: usize = 72;
    let (perm, trans) = (0.25, 0.10);
    let mut both = 0;
    let mut slowest = Duration::ZERO;
    for seed in 0..SEEDS {
        let cfg = SynthConfig {
            seed,
            bins: T,
            traders: 400,
            late_entry_share: 0.0,
            trade_size_median: 2000.0,
            lambda_perm: perm,
            lambda_trans: trans,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).map_err(e2s)?;
        let ev = EventSpec::new("window", cfg.start);
        let series = trump_yes_series(&out.trades, &ev, 1..=T as i64, cfg.width())?;
        let lo = LogOddsSeries::from_bins(&series);
        let t0 = Instant::now();
        let est = fit_glosten_harris(&lo.points).map_err(e2s)?;
        slowest = slowest.max(t0.elapsed());
        let p = est.param("lambda_perm").unwrap();
        let t = est.param("lambda_trans").unwrap();
        if (p.estimate - perm).abs() <= 3.0 * p.se && (t.estimate - trans).abs() <= 3.0 * t.se {
            both += 1;
        }
    }
    let share = both as f64 / SEEDS as f64;

    // Exact fit: theta moves by lambda * Q with no noise.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lambda = 0.37;
    let mut theta = 0.2;
    let mut rows = Vec::new();
    for k in 0..60 {
        let q: f64 = rng.random_range(-0.5..0.5);
        if k > 0 {
            theta += lambda * q;
        }
        rows.push((k, 1.0 / (1.0 + (-theta).exp()), q));
    }
    let lo = LogOddsSeries::from_prices("exact", &rows);
    let kyle = fit_kyle(&lo.points).map_err(e2s)?;
    let lam = kyle.params[0].estimate;
    let resid = lo.points.iter().filter_map(|p| p.d_theta.map(|d| (d - lam * p.q).abs())).fold(0.0, f64::max);
    ensure(
        share >= 0.95 && slowest < Duration::from_millis(10) && (lam - lambda).abs() < 1e-10 && resid < 1e-10,
        format!(
            "GH both within 3 HAC se in {both}/{SEEDS} seeds ({:.1}%), slowest fit {:.3} ms; exact Kyle lambda error {:.1e}, max residual {:.1e}",
            100.0 * share,
            slowest.as_secs_f64() * 1e3,
            (lam - lambda).abs(),
            resid
        ),
    )
}

/// Least squares by SVD, independent of the Cholesky path in the library.
fn svd_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.clone().svd(true, true).solve(y, 1e-12).unwrap()
}

/// Two-way FE versus explicit dummies, intercept-only logit, singleton
/// clusters versus HC0.
fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut fe_err: f64 = 0.0;
    let mut max_cells = 0;
    for _ in 0..25 {
        let (ne, nt) = (rng.random_range(5..25), rng.random_range(4..10));
        let alpha: Vec<f64> = (0..ne).map(|_| normal.sample(&mut rng)).collect();
        let gamma: Vec<f64> = (0..nt).map(|_| normal.sample(&mut rng)).collect();
        let (mut y, mut e, mut t, mut xs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..ne {
            for s in 0..nt {
                if rng.random::<f64>() < 0.2 {
                    continue;
                }
                let x1 = normal.sample(&mut rng) + alpha[i];
                let x2 = (rng.random::<f64>() < 0.5) as u8 as f64;
                y.push(alpha[i] + gamma[s] + 0.7 * x1 - 0.3 * x2 + normal.sample(&mut rng));
                e.push(i);
                t.push(s);
                xs.push([x1, x2]);
            }
        }
        let n = y.len();
        if n > 200 {
            continue;
        }
        max_cells = max_cells.max(n);
        let x = DMatrix::from_fn(n, 2, |r, c| xs[r][c]);
        let names = vec!["x1".to_string(), "x2".to_string()];
        let fit = match fit_two_way_fe(&y, &x, &names, &e, &t, &e) {
            Ok(f) => f,
            Err(err) => return Err(format!("FE fit failed: {err}")),
        };
        // Keep the entities the estimator kept (singletons are dropped).
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for v in &e {
            *counts.entry(*v).or_default() += 1;
        }
        let rows: Vec<usize> = (0..n).filter(|r| counts[&e[*r]] > 1).collect();
        let ents: Vec<usize> = {
            let mut v: Vec<usize> = rows.iter().map(|r| e[*r]).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let times: Vec<usize> = {
            let mut v: Vec<usize> = rows.iter().map(|r| t[*r]).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let k = 2 + ents.len() + times.len() - 1;
        let d = DMatrix::from_fn(rows.len(), k, |ri, c| {
            let r = rows[ri];
            if c < 2 {
                xs[r][c]
            } else if c < 2 + ents.len() {
                (e[r] == ents[c - 2]) as u8 as f64
            } else {
                (t[r] == times[c - 2 - ents.len() + 1]) as u8 as f64
            }
        });
        let yy = DVector::from_iterator(rows.len(), rows.iter().map(|r| y[*r]));
        let b = svd_ols(&d, &yy);
        fe_err = fe_err.max((b[0] - fit.beta[0]).abs()).max((b[1] - fit.beta[1]).abs());
    }

    let mut logit_err: f64 = 0.0;
    for (n, share) in [(50usize, 0.3), (200, 0.05), (1000, 0.62), (77, 0.9)] {
        let ones = (n as f64 * share).round() as usize;
        let y: Vec<f64> = (0..n).map(|i| (i < ones) as u8 as f64).collect();
        let x = DMatrix::from_element(n, 1, 1.0);
        let clusters: Vec<usize> = (0..n).collect();
        let fit = fit_logit_raw(&y, &x, &["const".to_string()], &clusters).map_err(e2s)?;
        let p = ones as f64 / n as f64;
        logit_err = logit_err.max((fit.beta[0] - (p / (1.0 - p)).ln()).abs());
    }

    let mut cov_err: f64 = 0.0;
    for _ in 0..20 {
        let (n, k) = (rng.random_range(20..120), rng.random_range(1..5));
        let x = DMatrix::from_fn(n, k, |_, _| normal.sample(&mut rng));
        let resid = DVector::from_fn(n, |_, _| normal.sample(&mut rng) * 2.0);
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let clusters: Vec<usize> = (0..n).collect();
        let (cl, g) = cluster_covariance(&x, &resid, &xtx_inv, &clusters).map_err(e2s)?;
        let hc0 = robust_covariance(&x, &resid, &xtx_inv) * cluster_factor(g, n, k);
        cov_err = cov_err.max((cl - hc0).amax());
    }
    ensure(
        fe_err <= 1e-8 && logit_err <= 1e-6 && cov_err <= 1e-10,
        format!(
            "FE vs dummy OLS max error {fe_err:.1e} (panels up to {max_cells} cells); intercept logit error {logit_err:.1e}; singleton-cluster vs HC0 error {cov_err:.1e}"
        ),
    )
}

/// VR(6) under i.i.d. and AR(1) returns.
fn criterion_3() -> Check {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (n, seeds, q) = (500usize, 500u64, 6usize);
    let mut iid = 0.0;
    let mut ar = 0.0;
    let rho: f64 = -0.5;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        iid += variance_ratio_window(&r, q).unwrap().vr;
        let mut x = normal.sample(&mut rng) / (1.0 - rho * rho).sqrt();
        let mut a = Vec::with_capacity(n);
        for _ in 0..n {
            x = rho * x + normal.sample(&mut rng);
            a.push(x);
        }
        ar += variance_ratio_window(&a, q).unwrap().vr;
    }
    iid /= seeds as f64;
    ar /= seeds as f64;
    let closed = 1.0 + 2.0 * (1..q).map(|j| (1.0 - j as f64 / q as f64) * rho.powi(j as i32)).sum::<f64>();
    ensure(
        (0.95..=1.05).contains(&iid) && (ar - closed).abs() <= 0.05,
        format!("mean VR(6) iid {iid:.4}; AR(1) rho=-0.5 mean {ar:.4} vs closed form {closed:.5}"),
    )
}

fn trade(i: usize, ts: DateTime<Utc>, market: Market, side: Side, qty: f64, maker: &str, taker: &str, dir: Direction) -> TradeRecord {
    let price = 0.5;
    TradeRecord {
        trade_id: format!("t{i:06}"),
        timestamp: ts,
        market,
        side_token: side,
        price,
        quantity: qty,
        value: qty * price,
        maker: Address::new(maker),
        taker: Address::new(taker),
        taker_direction: dir,
    }
}

/// Two-sidedness, log-odds and the six-leg exposure.
fn criterion_4() -> Check {
    let ts = two_sided_index(3.0, 1.0);
    let lo = to_log_odds(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let names = ["Trump", "Biden", "Harris", "Kennedy"];
    let addrs = ["0xa", "0xb", "0xc", "0xd", "0xe"];
    let t0: DateTime<Utc> = "2024-07-01T00:00:00Z".parse().unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let mut trades = Vec::new();
        // Hand oracle: per-address sums written out leg by leg.
        let mut oracle: BTreeMap<&str, [f64; 6]> = BTreeMap::new();
        for i in 0..n {
            let m = rng.random_range(0..names.len());
            let yes = rng.random::<bool>();
            let qty = rng.random_range(0.1..100.0f64);
            let maker = addrs[rng.random_range(0..addrs.len())];
            let mut taker = addrs[rng.random_range(0..addrs.len())];
            if taker == maker {
                taker = "0xf";
            }
            let buy = rng.random::<bool>();
            let side = if yes { Side::Yes } else { Side::No };
            let dir = if buy { Direction::Buy } else { Direction::Sell };
            trades.push(trade(i, t0 + TimeDelta::seconds(i as i64), Market::parse(names[m]), side, qty, maker, taker, dir));
            if m < 3 {
                let leg = 2 * m + if yes { 0 } else { 1 };
                let signed = if buy { qty } else { -qty };
                oracle.entry(taker).or_insert([0.0; 6])[leg] += signed;
                oracle.entry(maker).or_insert([0.0; 6])[leg] -= signed;
            }
        }
        let ledger = HoldingsLedger::replay(&trades, None);
        for e in compute_exposure(&ledger) {
            let l = oracle.get(e.address.as_str()).copied().unwrap_or([0.0; 6]);
            // Trump YES - Trump NO - Biden YES + Biden NO - Harris YES + Harris NO.
            let hand = l[0] - l[1] - l[2] + l[3] - l[4] + l[5];
            worst = worst.max((e.net_trump_win - hand).abs());
        }
    }
    ensure(
        ts == Some(0.5) && lo == 0.0 && worst < 1e-9,
        format!("two-sided(3,1) = {ts:?}; log-odds(0.5) = {lo:?}; exposure vs hand oracle over 1000 ledgers max error {worst:.1e}"),
    )
}

/// Exact size of the matched-time test when the real value is exchangeable
/// with `c` pool values and `m` draws are taken with replacement.
fn expected_size(c: usize, m: u64) -> f64 {
    let cutoff = (0.05 * (m + 1) as f64).floor() as u64 - 1;
    (0..=c)
        .map(|j| if j == 0 { 1.0 } else { Binomial::new(j as f64 / c as f64, m).unwrap().cdf(cutoff) })
        .sum::<f64>()
        / (c + 1) as f64
}

/// The p-value floor with a dominant real statistic, and size under the
/// null on shock-free markets.
fn criterion_5() -> Check {
    // Floor: a shock only at the real event.
    let start = SynthConfig::default().start;
    let shock_time = start + TimeDelta::days(28) + TimeDelta::hours(13);
    let shock = Shock {
        name: "news".into(),
        time: shock_time,
        arrival_multiplier: 3.0,
        response_bins: 12,
        two_sided_target: Some(0.0),
        ..Shock::default()
    };
    let cfg = SynthConfig { seed: 5, bins: 288 * 56, traders: 600, base_rate: 25.0, sigma_theta: 0.002, shocks: vec![shock], ..SynthConfig::default() };
    let out = generate(&cfg).map_err(e2s)?;
    let profiles = flag_addresses(&out.trades, &out.aux);
    let ctx = StatContext::new(&out.trades, &profiles, Token::trump_yes(), cfg.width(), TickConfig::default());
    let ev = EventSpec::new("news", shock_time);
    let spec = PlaceboSpec::new(Statistic::TwoSidedChange, 7);
    let floor = placebo_for_event(&ctx, &ev, &[shock_time], &spec).map_err(e2s)?;
    let floor_exact = floor.usable() == 500 && floor.p_value == 1.0 / 501.0;
    let direct = randomization_p(10.0, &vec![1.0; 500]).p == 1.0 / 501.0;

    // Size: 30 shock-free markets of two years, ten events each, spread over
    // the week so their matched pools do not overlap.
    let (markets, per_market) = (30u64, 10i64);
    let mut rejections = 0;
    let mut total = 0;
    let mut expected = 0.0;
    let mut pools = Vec::new();
    for r in 0..markets {
        let cfg = SynthConfig {
            seed: 1000 + r,
            bins: 288 * 7 * 104,
            traders: 200,
            late_entry_share: 0.0,
            base_rate: 2.0,
            sigma_theta: 0.002,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).map_err(e2s)?;
        let profiles = flag_addresses(&out.trades, &out.aux);
        let ctx = StatContext::new(&out.trades, &profiles, Token::trump_yes(), cfg.width(), TickConfig::default());
        let times: Vec<DateTime<Utc>> = ctx.signed.iter().map(|s| s.trade.timestamp).collect();
        let mut events = Vec::new();
        for i in 0..per_market {
            // Like every pool candidate, the event bin holds a trade.
            let mut t = cfg.start + TimeDelta::weeks(52) + TimeDelta::hours(16 * i) + TimeDelta::minutes(5 * r as i64);
            loop {
                let lo = times.partition_point(|x| *x <= t - cfg.width());
                if lo < times.len() && times[lo] <= t {
                    break;
                }
                t += cfg.width();
            }
            events.push(t);
        }
        for (i, t) in events.iter().enumerate() {
            let ev = EventSpec::new(format!("null{r}_{i}"), *t);
            let spec = PlaceboSpec::new(Statistic::VrPostMax, 100 + r);
            let res = placebo_for_event(&ctx, &ev, &events, &spec).map_err(e2s)?;
            total += 1;
            if res.p_value <= 0.05 {
                rejections += 1;
            }
            expected += expected_size(res.pool_size, res.usable() as u64);
            pools.push(res.pool_size);
        }
    }
    let rate = rejections as f64 / total as f64;
    let mean_pool = pools.iter().sum::<usize>() as f64 / pools.len() as f64;
    ensure(
        floor_exact && direct && rate <= 0.07,
        format!(
            "floor p = {:.6} with {} usable draws (1/501 = {:.6}); null rejection rate {rejections}/{total} = {rate:.3} (exact finite-pool size {:.3}, mean pool {mean_pool:.0})",
            floor.p_value,
            floor.usable(),
            1.0 / 501.0,
            expected / total as f64
        ),
    )
}

/// CAA of participation under no shock and under a 5x arrival shock.
fn criterion_6() -> Check {
    const SEEDS: u64 = 200;
    let (mut inside, mut exits) = (0, 0);
    for seed in 0..SEEDS {
        for shocked in [false, true] {
            let base = SynthConfig { seed, bins: 288 * 2, traders: 400, base_rate: 10.0, ..SynthConfig::default() };
            let t = base.start + TimeDelta::hours(36);
            let shocks = if shocked {
                vec![Shock { name: "shock".into(), time: t, arrival_multiplier: 5.0, ..Shock::default() }]
            } else {
                Vec::new()
            };
            let cfg = SynthConfig { shocks, ..base };
            let out = generate(&cfg).map_err(e2s)?;
            let profiles = flag_addresses(&out.trades, &out.aux);
            let ev = EventSpec::new("e", t);
            let study = run_event_study(&out.trades, &profiles, &ev, cfg.width(), &EventStudyConfig::default()).map_err(e2s)?;
            let caa = study.caa(Outcome::Participation);
            if shocked {
                if caa.iter().any(|p| (1..=3).contains(&p.k) && !p.band_contains(0.0)) {
                    exits += 1;
                }
            } else if caa.iter().find(|p| p.k == 6).is_some_and(|p| p.band_contains(0.0)) {
                inside += 1;
            }
        }
    }
    let (a, b) = (inside as f64 / SEEDS as f64, exits as f64 / SEEDS as f64);
    ensure(
        a >= 0.9 && b >= 0.9,
        format!("null CAA(+30 min) inside band in {inside}/{SEEDS}; 5x shock exits band by bin 3 in {exits}/{SEEDS}"),
    )
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(e2s)
}

/// Files round trip and manifest determinism.
fn criterion_7() -> Check {
    let dir = tempdir()?;
    let synth = SynthConfig::demo(21);
    let out = generate(&synth).map_err(e2s)?;
    write_synth(dir.path(), &out).map_err(e2s)?;
    let config = RunConfig::for_synth(dir.path(), &synth);
    let session = Session::load(&config).map_err(e2s)?;
    let ev = EventSpec::new("start", synth.start);
    let signed = session.signed(&Token::trump_yes());
    let series = build_bin_series(&signed, &ev, 1..=synth.bins as i64, synth.width()).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    let mut count_mismatch = 0;
    for (b, t) in series.bins.iter().zip(&out.truth.bins) {
        if b.trade_count != t.trade_count {
            count_mismatch += 1;
        }
        worst = worst.max((b.net_flow - t.q_tick).abs());
        if let (Some(x), Some(y)) = (b.vwap, t.vwap) {
            worst = worst.max((x - y).abs());
        }
    }

    let first = run(&config, &Stage::ALL).map_err(e2s)?;
    let bytes_a = std::fs::read(dir.path().join("out").join(MANIFEST)).map_err(e2s)?;
    let second = run(&config, &Stage::ALL).map_err(e2s)?;
    let bytes_b = std::fs::read(dir.path().join("out").join(MANIFEST)).map_err(e2s)?;
    let m = read_manifest(&dir.path().join("out")).map_err(e2s)?;
    let mut listed_ok = true;
    for f in &m.files {
        let p = dir.path().join("out").join(&f.path);
        listed_ok &= p.is_file() && sha256_file(&p).map_err(e2s)? == f.sha256;
    }
    let on_disk = walkdir_count(&dir.path().join("out"));
    ensure(
        worst < 1e-9
            && count_mismatch == 0
            && bytes_a == bytes_b
            && listed_ok
            && on_disk == m.files.len() + 1
            && first.error.is_none()
            && second.manifest.complete
            && m.warnings.is_empty(),
        format!(
            "{} bins, max aggregate error {worst:.1e}, count mismatches {count_mismatch}; manifests identical: {}; {} files listed, {on_disk} on disk incl. manifest; warnings {}",
            series.bins.len(),
            bytes_a == bytes_b,
            m.files.len(),
            m.warnings.len()
        ),
    )
}

fn walkdir_count(dir: &std::path::Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            if e.file_type().unwrap().is_dir() {
                walkdir_count(&e.path())
            } else {
                1
            }
        })
        .sum()
}

/// Full run on a 3.6M-trade log, then one placebo statistic with 500 draws.
fn criterion_8() -> Check {
    let dir = tempdir()?;
    let synth = SynthConfig::demo(282);
    let t0 = Instant::now();
    let out = generate(&synth).map_err(e2s)?;
    write_synth(dir.path(), &out).map_err(e2s)?;
    let gen = t0.elapsed();
    let n = out.trades.len();
    drop(out);
    let mut config = RunConfig::for_synth(dir.path(), &synth);
    config.placebo.enabled = false;
    let t1 = Instant::now();
    let report = run(&config, &Stage::ALL).map_err(e2s)?;
    let full = t1.elapsed();
    config.placebo.enabled = true;
    config.placebo.statistics = vec![Statistic::AbnormalJump];
    config.placebo.draws = 500;
    config.output_dir = dir.path().join("placebo_out");
    let t2 = Instant::now();
    let placebo = run(&config, &[Stage::Placebo]).map_err(e2s)?;
    let plac = t2.elapsed();
    let cores = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
    ensure(
        n >= 3_500_000 && report.error.is_none() && placebo.error.is_none() && full < Duration::from_secs(300) && plac < Duration::from_secs(600),
        format!(
            "{n} trades (generated in {:.1}s); run-all without placebo {:.1}s; one-statistic placebo suite, {} events x 500 draws, {:.1}s; {cores} core(s)",
            gen.as_secs_f64(),
            full.as_secs_f64(),
            config.events.len(),
            plac.as_secs_f64()
        ),
    )
}

/// Price-response row with pre/peak/end 0.6100/0.7213/0.6300.
fn criterion_9() -> Check {
    let bin = |k: i64, p: f64| Bin {
        k,
        vwap: Some(p),
        stale: false,
        volume_usdc: 1.0,
        buy_volume: 1.0,
        sell_volume: 0.0,
        net_flow: 1e-6,
        trade_count: 1,
    };
    let series = BinSeries {
        token: Token::trump_yes(),
        event: "debate".into(),
        bins: vec![bin(-2, 0.6050), bin(-1, 0.6100), bin(0, 0.6400), bin(1, 0.7213), bin(2, 0.6800), bin(3, 0.6300)],
    };
    let r = price_response_summary(&series).map_err(e2s)?;
    let table = render_price_table(&[("debate".into(), r)]);
    let row = table.lines().nth(1).unwrap_or_default().to_string();
    let fields: Vec<&str> = row.split_whitespace().collect();
    ensure(
        fields.get(5) == Some(&"0.1113") && fields.get(7) == Some(&"0.0200") && (r.peak_delta - 0.1113).abs() < 1e-12 && (r.total_delta - 0.02).abs() < 1e-12,
        format!("row `{}`", row.trim()),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(u8, &str, fn() -> Check); 9] = [
        (1, "impact oracle recovery", criterion_1),
        (2, "brute-force equivalence", criterion_2),
        (3, "variance-ratio calibration", criterion_3),
        (4, "formula exactness", criterion_4),
        (5, "placebo floor and size", criterion_5),
        (6, "event-study null and power", criterion_6),
        (7, "round trip and determinism", criterion_7),
        (8, "throughput", criterion_8),
        (9, "table layout", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
