use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sigad::readout::*;
use sigad::synth::*;

#[test]
fn gbm_terminal_mean_matches_closed_form() {
    let cfg = SynthConfig { n_paths: 100_000, seed: 42, ..Default::default() };
    let paths = simulate_gbm(&cfg).unwrap();
    let mean = paths.iter().map(|p| p.row(p.len() - 1)[0] + cfg.s0).sum::<f64>() / paths.len() as f64;
    let want = cfg.s0 * (cfg.mu * cfg.horizon).exp();
    assert!((mean / want - 1.0).abs() < 0.01, "mean {mean} vs {want}");
    assert!(paths.iter().all(|p| p.row(0)[0] == 0.0 && p.len() == cfg.steps + 1));
}

#[test]
fn suppressed_paths_have_no_long_streaks() {
    let cfg = SynthConfig { n_paths: 500, seed: 7, ..Default::default() };
    let real = simulate_gbm(&cfg).unwrap();
    let fake: Vec<_> = real.iter().map(|p| suppress_patterns(p, cfg.pattern_len).unwrap()).collect();
    let hr = streak_histogram(&real);
    let hf = streak_histogram(&fake);
    assert!(hr.keys().any(|&k| k >= cfg.pattern_len));
    assert!(hf.keys().all(|&k| k < cfg.pattern_len), "{hf:?}");
    // every increment is counted in exactly one run
    let total = |h: &std::collections::BTreeMap<usize, u64>| h.iter().map(|(k, v)| *k as u64 * v).sum::<u64>();
    assert_eq!(total(&hr), (500 * cfg.steps) as u64);
    assert_eq!(total(&hf), (500 * cfg.steps) as u64);
    // magnitudes are kept
    for (r, f) in real.iter().zip(&fake) {
        for (a, b) in r.increments().zip(f.increments()) {
            assert!((a[0].abs() - b[0].abs()).abs() < 1e-9);
        }
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for inst in 0..50 {
        let n = rng.random_range(5..40);
        let m = rng.random_range(1..8);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let w: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: f64 = StandardNormal.sample(&mut rng);
        let l2 = rng.random_range(0.0..0.1);
        let (_, grad) = loss_and_gradient(&x, &y, &w, b, l2);
        let h = 1e-6;
        for j in 0..=m {
            let f = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < m {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                loss_and_gradient(&x, &y, &w2, b2, l2).0
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-5, "instance {inst}, coord {j}: {fd} vs {}", grad[j]);
        }
    }
}

#[test]
fn uninformative_scores_give_auc_near_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let labels: Vec<bool> = (0..20_000).map(|_| rng.random()).collect();
    let scores: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
    let a = auc(&roc_points(&labels, &scores).unwrap());
    assert!((a - 0.5).abs() < 0.02, "auc {a}");
}

#[test]
fn separable_scores_give_unit_auc() {
    let labels = [false, false, true, false, true, true];
    let scores = [0.1, 0.2, 0.8, 0.3, 0.9, 0.7];
    assert_eq!(auc(&roc_points(&labels, &scores).unwrap()), 1.0);
    let (best, _) = max_f1(&pr_points(&labels, &scores).unwrap()).unwrap();
    assert_eq!(best, 1.0);
}

#[test]
fn logistic_fit_separates_shifted_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut x = vec![];
    let mut y = vec![];
    for i in 0..400 {
        let label = (i % 2) as u8;
        let shift = if label == 1 { 1.5 } else { -1.5 };
        let (z1, z2): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        x.push(vec![shift + z1, z2]);
        y.push(label);
    }
    let model = fit_logistic(&x, &y, FitOptions::default()).unwrap();
    let pred = predict_labels(&predict_proba(&model, &x).unwrap());
    let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    assert!(acc > 0.9, "accuracy {acc}");
    assert!(model.weights[0] > 0.0 && model.weights[0].abs() > 5.0 * model.weights[1].abs());
}

proptest! {
    #[test]
    fn curves_are_invariant_under_monotone_maps(
        data in prop::collection::vec((any::<bool>(), -3.0f64..3.0), 2..60),
    ) {
        let (labels, scores): (Vec<bool>, Vec<f64>) = data.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let mapped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
        let r1 = roc_points(&labels, &scores).unwrap();
        let r2 = roc_points(&labels, &mapped).unwrap();
        prop_assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            prop_assert_eq!((a.x, a.y), (b.x, b.y));
        }
        let p1 = pr_points(&labels, &scores).unwrap();
        let p2 = pr_points(&labels, &mapped).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            prop_assert_eq!((a.x, a.y), (b.x, b.y));
        }
        let a = auc(&r1);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn counts_determine_metrics(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let r = MetricsReport::from_counts(tp, fp, tn, fn_);
        prop_assert!((r.accuracy - (tp + tn) as f64 / (tp + fp + tn + fn_) as f64).abs() < 1e-15);
        prop_assert!((r.f1 - f1_score(r.precision, r.recall)).abs() < 1e-15);
        prop_assert!(r.f1 <= r.precision.max(r.recall) + 1e-15);
    }
}
