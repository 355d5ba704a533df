use lcp_core::localizers::{mutual_information_by_axis, DEFAULT_MI_BINS};
use lcp_core::simbench::{
    cv_scores, gen_highdim, run_experiment, ExperimentConfig, Generator, HighDimCase, Learner, LearnerKind,
    Method,
};
use lcp_core::{select_projection_axis, LocalizerSpec, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mutual_information_finds_the_noise_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let sample = gen_highdim(500, 10, HighDimCase::B, &mut rng);
    // residuals of the true mean carry the heteroscedasticity in x_10
    let scores: Vec<f64> = sample
        .features
        .rows()
        .zip(&sample.y)
        .map(|(x, y)| (y - x[..3].iter().sum::<f64>()).abs())
        .collect();
    assert_eq!(select_projection_axis(&sample.features, &scores, DEFAULT_MI_BINS).unwrap(), 9);
    let mi = mutual_information_by_axis(&sample.features, &scores, DEFAULT_MI_BINS).unwrap();
    assert!(mi.iter().all(|v| *v >= 0.0));
}

/// Least squares with an intercept on one feature, by the normal equations.
fn simple_ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[test]
fn cross_fitted_scores_match_hand_rolled_folds() {
    let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.71).sin() * 2.0).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 1.0 - 0.5 * v + (i as f64 * 1.9).cos()).collect();
    let sample = Sample::new(lcp_core::Features::from_column(&x).unwrap(), y.clone()).unwrap();
    let got = cv_scores(&sample, 5, &LearnerKind::LeastSquares).unwrap();
    for k in 0..5 {
        let (tx, ty): (Vec<f64>, Vec<f64>) = (0..50).filter(|i| i % 5 != k).map(|i| (x[i], y[i])).unzip();
        let (a, b) = simple_ols(&tx, &ty);
        for i in (k..50).step_by(5) {
            let want = (y[i] - a - b * x[i]).abs();
            assert!((got[i] - want).abs() < 1e-9, "sample {i}: {} vs {want}", got[i]);
        }
    }
    // a learner fitted on everything differs from the cross-fitted one
    let full = LearnerKind::LeastSquares.fit(&sample).unwrap();
    let insample = (y[0] - full.predict(&[x[0]])).abs();
    assert!((insample - got[0]).abs() > 1e-6);
}

fn region_stats(run: &lcp_core::simbench::ExperimentRun, method: usize, inner: bool) -> (f64, f64) {
    let picked: Vec<_> = run
        .records
        .iter()
        .filter(|r| if inner { r.x[0].abs() < 0.5 } else { r.x[0].abs() > 1.5 })
        .filter_map(|r| r.outcomes[method])
        .collect();
    let k = picked.len() as f64;
    let coverage = picked.iter().filter(|o| o.covered).count() as f64 / k;
    let width = picked.iter().map(|o| o.width()).sum::<f64>() / k;
    (coverage, width)
}

#[test]
fn localized_intervals_adapt_to_heteroscedastic_noise() {
    let generator: Generator = "example1c".parse().unwrap();
    let methods = vec![Method::Cb, Method::Lcb(LocalizerSpec::distance_box(0.4))];
    let config = ExperimentConfig::new(generator, 500, 3000, vec![0.9], methods).with_seed(77);
    let run = run_experiment(&config).unwrap();

    let (cb_in, cb_w_in) = region_stats(&run, 0, true);
    let (cb_out, cb_w_out) = region_stats(&run, 0, false);
    let (lcb_in, lcb_w_in) = region_stats(&run, 1, true);
    let (lcb_out, lcb_w_out) = region_stats(&run, 1, false);

    // the unlocalized band is about as wide everywhere, so it over-covers
    // where the noise is small and under-covers where it is large
    assert!((cb_w_in / cb_w_out - 1.0).abs() < 0.1, "{cb_w_in} {cb_w_out}");
    assert!(cb_in > 0.97 && cb_out < 0.85, "cb coverage {cb_in} / {cb_out}");
    // the localized band narrows near zero and restores coverage in the tails
    assert!(lcb_w_in < 0.6 * lcb_w_out, "{lcb_w_in} {lcb_w_out}");
    assert!(lcb_out > cb_out + 0.03, "lcb tail coverage {lcb_out} vs {cb_out}");
    assert!(lcb_in < cb_in, "{lcb_in} {cb_in}");
    // and stays valid overall
    let overall = run.table.get("lcb-box:0.4", 0.9).unwrap().coverage;
    assert!(overall >= 0.88, "{overall}");
}
