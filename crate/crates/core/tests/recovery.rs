//! Monte Carlo checks that estimators recover known parameters with
//! correctly sized confidence intervals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shockflow::heterogeneity::{fit_logit_raw, fit_two_way_fe};
use shockflow::pipeline::{run, RunConfig, Stage};
use shockflow::synth::{generate, write_synth, SynthConfig};

fn covers(estimate: f64, se: f64, truth: f64) -> bool {
    (estimate - truth).abs() <= 1.96 * se
}

#[test]
fn logit_intervals_have_nominal_coverage() {
    let truth = [-1.0, 0.8, -0.5];
    let normal = Normal::new(0.0, 1.0).unwrap();
    let reps = 200;
    let mut hits = [0usize; 3];
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(rep);
        let n = 1500;
        let x = DMatrix::from_fn(n, 3, |_, j| match j {
            0 => 1.0,
            1 => normal.sample(&mut rng),
            _ => (rng.random::<f64>() < 0.4) as u8 as f64,
        });
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = (0..3).map(|j| x[(i, j)] * truth[j]).sum();
                (rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64
            })
            .collect();
        let names: Vec<String> = ["const", "x", "d"].iter().map(|s| s.to_string()).collect();
        let clusters: Vec<usize> = (0..n).collect();
        let fit = fit_logit_raw(&y, &x, &names, &clusters).unwrap();
        for j in 0..3 {
            hits[j] += covers(fit.beta[j], fit.se[j], truth[j]) as usize;
        }
    }
    for (j, h) in hits.iter().enumerate() {
        let rate = *h as f64 / reps as f64;
        assert!((0.91..=0.99).contains(&rate), "coefficient {j}: coverage {rate}");
    }
}

#[test]
fn clustered_fe_intervals_survive_within_entity_correlation() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (reps, entities, periods, beta) = (200, 60, 8, 0.5);
    let mut hits = 0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + rep);
        let time_fx: Vec<f64> = (0..periods).map(|_| normal.sample(&mut rng)).collect();
        let (mut y, mut xs, mut e, mut t) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..entities {
            let a = normal.sample(&mut rng) * 2.0;
            let (mut u, mut v) = (0.0, 0.0);
            for s in 0..periods {
                // Regressor and error are both persistent within an entity.
                u = 0.8 * u + normal.sample(&mut rng);
                v = 0.8 * v + normal.sample(&mut rng);
                let x = v + 0.5 * a;
                xs.push(x);
                y.push(a + time_fx[s] + beta * x + u);
                e.push(i);
                t.push(s);
            }
        }
        let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
        let fit = fit_two_way_fe(&y, &x, &["x".to_string()], &e, &t, &e).unwrap();
        hits += covers(fit.beta[0], fit.se[0], beta) as usize;
    }
    let rate = hits as f64 / reps as f64;
    assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
}

#[test]
fn flip_logit_recovers_the_generator_exposure_effect() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig::demo(28);
    let beta_neg = synth.shocks[0].flip.as_ref().unwrap().beta_neg;
    write_synth(dir.path(), &generate(&synth).unwrap()).unwrap();
    let config = RunConfig::for_synth(dir.path(), &synth);
    let report = run(&config, &[Stage::Regress]).unwrap();
    assert!(report.error.is_none(), "{:?}", report.error);

    let mut rdr = csv::Reader::from_path(config.output_dir.join("regress/logit_flips.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (term, coef, se) = (col("term"), col("estimate"), col("se"));
    let row = rdr.records().map(|r| r.unwrap()).find(|r| &r[term] == "neg_trump_win").expect("neg_trump_win row");
    let (b, s): (f64, f64) = (row[coef].parse().unwrap(), row[se].parse().unwrap());
    assert!((b - beta_neg).abs() <= 3.0 * s, "estimate {b} (se {s}) vs true {beta_neg}");
}
