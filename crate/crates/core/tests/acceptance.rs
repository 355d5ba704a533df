//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use lcp_core::simbench::{
    default_tune_grid, gen_example1, parse_methods, run_coverage_experiment, run_experiment,
    Example1Noise, ExperimentConfig, Generator, LearnerKind,
};
use lcp_core::{
    eval_g1, eval_g2, exact_lcp_set_datadep, grid_search_alpha, CalibrationModel, Features,
    LocalizerKind, LocalizerSpec, Result, Sample, ScoreFunction, ScoreValue, TuningConfig, WeightedAtomSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

/// Lower quantile by sorting and scanning cumulative mass.
fn brute_quantile(atoms: &[(ScoreValue, f64)], alpha: f64) -> ScoreValue {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let total: f64 = sorted.iter().map(|a| a.1).sum();
    let mut cum = 0.0;
    for (k, (v, w)) in sorted.iter().enumerate() {
        cum += w;
        let tie_next = k + 1 < sorted.len() && sorted[k + 1].0 == *v;
        if !tie_next && cum / total >= alpha {
            return *v;
        }
    }
    sorted.last().unwrap().0
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(5..=200);
        let alpha: f64 = rng.random_range(0.01..0.99);
        // coarse rounding produces ties
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 4.0).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let model = CalibrationModel::new(
            Features::from_column(&x).unwrap(),
            &scores,
            LocalizerSpec::constant(),
            alpha,
        )
        .unwrap();
        let q = model.localize(&[0.5]).unwrap().threshold(alpha).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (1..=n + 1).find(|&k| k as f64 / (n + 1) as f64 >= alpha).unwrap();
        let oracle = if k == n + 1 {
            ScoreValue::Infinite
        } else {
            ScoreValue::Finite(sorted[k - 1])
        };
        if q != oracle {
            mismatches += 1;
        }
    }
    r.line(1, "constant localizer equals split conformal", mismatches == 0,
        format!("{mismatches}/200 mismatches"), t);
}

fn band_check(table: &lcp_core::simbench::CoverageTable, lo: f64, hi: f64) -> (bool, String) {
    let mut ok = true;
    let mut worst = String::new();
    for row in &table.rows {
        let inside = row.coverage >= row.alpha + lo && row.coverage <= row.alpha + hi;
        if !inside {
            ok = false;
            worst.push_str(&format!(" {}@{}={:.3}", row.method, row.alpha, row.coverage));
        }
    }
    (ok, worst)
}

fn criterion_2(r: &mut Report) {
    let t = Instant::now();
    let methods = parse_methods("cb,lcb-box:0.1,lcb-box:1,lcb-knn:40,lcb-knn:500").unwrap();
    let mut all_ok = true;
    let mut detail = String::new();
    let mut min_cov = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    for (noise, seed) in [(Example1Noise::A, 101), (Example1Noise::B, 102), (Example1Noise::C, 103)] {
        let config = ExperimentConfig::new(Generator::Example1(noise), 500, 1000, vec![0.8, 0.95], methods.clone())
            .with_seed(seed);
        let table = run_coverage_experiment(&config).unwrap();
        for row in &table.rows {
            min_cov = min_cov.min(row.coverage - row.alpha);
            max_excess = max_excess.max(row.coverage - row.alpha);
        }
        let (ok, bad) = band_check(&table, -0.02, 0.03);
        if !ok {
            all_ok = false;
            detail.push_str(&format!(" {}:{bad}", config.generator));
        }
    }
    r.line(2, "heteroscedastic coverage table within [alpha-0.02, alpha+0.03]", all_ok,
        format!("30 cells, coverage-alpha in [{min_cov:+.3}, {max_excess:+.3}]{detail}"), t);
}

fn criterion_3(r: &mut Report) {
    let t = Instant::now();
    let config = ExperimentConfig::new(
        Generator::Example1(Example1Noise::A),
        100,
        50_000,
        vec![0.8],
        parse_methods("rand-constant,rand-box:1").unwrap(),
    )
    .with_seed(3);
    let table = run_coverage_experiment(&config).unwrap();
    let (ok, _) = band_check(&table, -0.01, 0.01);
    let cells: Vec<String> = table.rows.iter().map(|r| format!("{}={:.4}", r.method, r.coverage)).collect();
    r.line(3, "randomized level is exact within alpha +- 0.01", ok, cells.join(" "), t);
}

fn criterion_4(r: &mut Report) {
    let t = Instant::now();
    let config = ExperimentConfig::new(
        Generator::Counterexample2 { alpha: 0.8 },
        2000,
        1000,
        vec![0.8],
        parse_methods("naive-box:1.5,lcb-box:1.5").unwrap(),
    )
    .with_seed(4);
    let table = run_coverage_experiment(&config).unwrap();
    let naive = table.get("naive-box:1.5", 0.8).unwrap().coverage;
    let full = table.get("lcb-box:1.5", 0.8).unwrap().coverage;
    let target = 1.0 - 2.0 * 0.2 / 1.2;
    let ok = (naive - target).abs() <= 0.03 && full >= 0.78;
    r.line(4, "nominal level under-covers, calibrated level repairs", ok,
        format!("naive={naive:.3} (target {target:.3} +- 0.03), calibrated={full:.3} (>= 0.78)"), t);
}

fn criterion_5(r: &mut Report) {
    let t = Instant::now();
    let config = ExperimentConfig::new(
        Generator::Example1(Example1Noise::A),
        500,
        500,
        vec![0.8],
        parse_methods("naive-exponential:0.001").unwrap(),
    )
    .with_seed(5);
    let row = run_coverage_experiment(&config).unwrap().rows[0].clone();
    let ok = row.coverage >= 0.95 && row.inf_frac >= 0.9;
    r.line(5, "tiny exponential bandwidth over-covers", ok,
        format!("coverage={:.3} (>= 0.95), inf_frac={:.3} (>= 0.9)", row.coverage, row.inf_frac), t);
}

fn criterion_6(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut oracle_mismatch = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=15);
        let alpha: f64 = rng.random_range(0.01..1.0);
        let mut atoms: Vec<(ScoreValue, f64)> = (0..n)
            .map(|_| (ScoreValue::Finite(rng.random_range(0..6) as f64), rng.random_range(0.01..1.0)))
            .collect();
        let v_new = ScoreValue::Finite(rng.random_range(0..7) as f64);
        let w_new = rng.random_range(0.01..1.0);
        atoms.push((v_new, w_new));
        let with_v = WeightedAtomSet::from_masses(atoms.clone()).unwrap().quantile(alpha).unwrap();
        let mut inf_atoms = atoms.clone();
        inf_atoms[n].0 = ScoreValue::Infinite;
        let with_inf = WeightedAtomSet::from_masses(inf_atoms.clone()).unwrap().quantile(alpha).unwrap();
        if (v_new <= with_v) != (v_new <= with_inf) {
            violations += 1;
        }
        if with_v != brute_quantile(&atoms, alpha) || with_inf != brute_quantile(&inf_atoms, alpha) {
            oracle_mismatch += 1;
        }
    }
    r.line(6, "infinity-atom equivalence on 10^4 weighted instances", violations == 0 && oracle_mismatch == 0,
        format!("{violations} violations, {oracle_mismatch} quantile/oracle mismatches"), t);
}

fn criterion_7(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    let (mut checked, mut infinite) = (0, 0);
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let alpha: f64 = rng.random_range(0.5..0.95);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let spec = if rng.random_bool(0.5) {
            LocalizerSpec::distance_box(rng.random_range(0.3..3.0))
        } else {
            LocalizerSpec::gaussian(rng.random_range(0.3..3.0))
        };
        let model = CalibrationModel::new(Features::from_column(&x).unwrap(), &scores, spec, alpha).unwrap();
        let x_new = [rng.random_range(-2.0..2.0)];
        let a = grid_search_alpha(&model, &x_new).unwrap();
        let g2 = eval_g2(a, &model, &x_new).unwrap();
        if !g2.satisfied || g2.quantile_is_infinite {
            // infinite threshold: the interval is the whole line
            infinite += 1;
            continue;
        }
        checked += 1;
        let top = 2.0 * g2.bar_v_star.as_f64();
        for k in 0..100 {
            let v = top * k as f64 / 99.0;
            if !eval_g1(a, &model, &x_new, ScoreValue::Finite(v)).unwrap().satisfied {
                failures += 1;
                break;
            }
        }
    }
    r.line(7, "G2 implies G1 for every candidate score", failures == 0 && checked > 0,
        format!("{failures} failing of {checked} instances with G2 satisfied ({infinite} infinite-threshold instances skipped)"), t);
}

fn criterion_8(r: &mut Report) {
    let t = Instant::now();
    let config = ExperimentConfig::new(
        Generator::CovariateShift,
        500,
        500,
        vec![0.95],
        parse_methods("cb,lcb-shift_knn:450").unwrap(),
    )
    .with_seed(8);
    let run = run_experiment(&config).unwrap();
    let cb = run.table.get("cb", 0.95).unwrap().coverage;
    let lcp = run.table.get("lcb-shift_knn:450", 0.95).unwrap().coverage;
    let variance = |cell: usize| {
        let w: Vec<f64> = run
            .records
            .iter()
            .filter(|rec| rec.x[0] <= 2.0)
            .filter_map(|rec| rec.outcomes[cell].map(|o| o.width()))
            .collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() as f64 - 1.0);
        (var, w.len())
    };
    let (var_cb, k) = variance(0);
    let (var_lcp, _) = variance(1);
    let ok = cb >= 0.93 && lcp >= 0.93 && var_lcp <= var_cb;
    r.line(8, "covariate shift coverage and width stability", ok,
        format!("weighted={cb:.3} shift-local={lcp:.3} (>= 0.93); width variance on {k} points with x <= 2: weighted={var_cb:.4} shift-local={var_lcp:.4}"), t);
}

fn tuned_h(noise: Example1Noise, base: &LocalizerSpec, grid: &[f64], alpha: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let d0 = gen_example1(500, noise, &mut rng);
    let scores: Vec<f64> = d0.features.column(0).iter().zip(&d0.y).map(|(x, y)| (y - x).abs()).collect();
    lcp_core::tune_bandwidth(&d0.features, &scores, base, grid, &TuningConfig::new(alpha), &mut rng)
        .unwrap()
        .selected_h()
}

fn criterion_9(r: &mut Report) {
    let t = Instant::now();
    // nearest-neighbour counts do not depend on the feature scale, so the
    // default grid is the common grid; the box results are reported alongside
    let knn_grid = default_tune_grid(LocalizerKind::Knn, 500);
    let box_grid = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [0.8, 0.95] {
        let a = tuned_h(Example1Noise::A, &LocalizerSpec::knn(1), &knn_grid, alpha);
        let c = tuned_h(Example1Noise::C, &LocalizerSpec::knn(1), &knn_grid, alpha);
        ok &= a > c;
        detail.push(format!("knn@{alpha}: h*(a)={a} h*(c)={c}"));
    }
    for alpha in [0.8, 0.95] {
        let a = tuned_h(Example1Noise::A, &LocalizerSpec::distance_box(1.0), &box_grid, alpha);
        let c = tuned_h(Example1Noise::C, &LocalizerSpec::distance_box(1.0), &box_grid, alpha);
        detail.push(format!("[box@{alpha}: h*(a)={a} h*(c)={c}]"));
    }
    r.line(9, "tuner picks more neighbours for homogeneous noise", ok, detail.join(" "), t);
}

fn criterion_10(r: &mut Report) {
    let t = Instant::now();
    let alpha = 0.8;
    let spec = LocalizerSpec::distance_box(1.0);
    let trainer = |s: &Sample| -> Result<ScoreFunction> {
        Ok(ScoreFunction::AbsResidual(lcp_core::simbench::Learner::fit(&LearnerKind::LeastSquares, s)?))
    };
    let mut covered = 0;
    let mut undecided = 0;
    let reps = 500;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        rng.set_stream(rep);
        let data = gen_example1(10, Example1Noise::A, &mut rng);
        let x_new = rng.sample::<f64, _>(rand_distr::StandardNormal);
        let y_new = x_new + rng.sample::<f64, _>(rand_distr::StandardNormal);
        let lo = data.y.iter().copied().fold(f64::INFINITY, f64::min) - 4.0;
        let hi = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0;
        let mut grid: Vec<f64> = (0..199).map(|k| lo + (hi - lo) * k as f64 / 198.0).collect();
        grid.push(y_new);
        let set = exact_lcp_set_datadep(trainer, &data, &[x_new], &grid, alpha, &spec).unwrap();
        let k = grid.len() - 1;
        if set.undecided[k] {
            undecided += 1;
        }
        if set.set.contains(y_new) {
            covered += 1;
        }
    }
    let cov = covered as f64 / reps as f64;
    r.line(10, "data-dependent exact construction covers", cov >= alpha - 0.05,
        format!("coverage={cov:.3} (>= {:.2}), {undecided} undecided", alpha - 0.05), t);
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    criterion_9(&mut r);
    criterion_10(&mut r);
    println!("acceptance: {} of 10 criteria failed", r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
