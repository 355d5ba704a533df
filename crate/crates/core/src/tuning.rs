//! Bandwidth selection on an independent tuning sample.
//!
//! Each candidate bandwidth is scored by the leave-one-out thresholds it
//! produces on the tuning sample (at level `alpha`, without the level
//! search): candidates yielding too many infinite thresholds are screened
//! out, and the rest are ranked by mean threshold plus bootstrap spread,
//! inflated by any empirical under-coverage.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Features;
use crate::error::{LcpError, Result};
use crate::localizers::{KernelRows, LocalizerKind, LocalizerSpec};
use crate::quantile::{ScoreValue, WeightedAtomSet};

pub const DEFAULT_OMEGA: f64 = 0.9;
pub const DEFAULT_BOOTSTRAP: usize = 20;

/// Level, screening threshold and bootstrap size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningConfig {
    pub alpha: f64,
    /// Candidates need an infinite-threshold fraction below `1 - omega`.
    pub omega: f64,
    pub bootstrap: usize,
}

impl TuningConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            omega: DEFAULT_OMEGA,
            bootstrap: DEFAULT_BOOTSTRAP,
        }
    }
}

/// Statistics for one candidate bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateStats {
    pub h: f64,
    pub infinite_fraction: f64,
    /// Mean threshold over the common finite set; NaN when ineligible.
    pub s: f64,
    /// Under-coverage penalty, at least 1; NaN when ineligible.
    pub gamma: f64,
    /// Mean bootstrap standard deviation; NaN when ineligible.
    pub sigma: f64,
    pub objective: f64,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub kind: LocalizerKind,
    pub alpha: f64,
    pub omega: f64,
    pub bootstrap: usize,
    pub candidates: Vec<CandidateStats>,
    pub selected_index: usize,
    /// Size of the set of samples finite under every eligible candidate.
    pub common_finite: usize,
}

impl TuningReport {
    pub fn selected_h(&self) -> f64 {
        self.candidates[self.selected_index].h
    }

    /// One row per candidate:
    /// `h,kind,infinite_fraction,s,gamma,sigma,objective,eligible,selected`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("h,kind,infinite_fraction,s,gamma,sigma,objective,eligible,selected\n");
        for (l, c) in self.candidates.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                format_f64(c.h),
                self.kind,
                format_f64(c.infinite_fraction),
                format_f64(c.s),
                format_f64(c.gamma),
                format_f64(c.sigma),
                format_f64(c.objective),
                c.eligible,
                l == self.selected_index
            );
        }
        out
    }
}

/// Decimal rendering with `inf`, `-inf` and `nan` literals.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn threshold_for_row(kernel: &[f64], scores: &[f64], test: usize, alpha: f64) -> Result<ScoreValue> {
    let atoms = scores
        .iter()
        .zip(kernel)
        .enumerate()
        .map(|(j, (&v, &h))| {
            let value = if j == test {
                ScoreValue::Infinite
            } else {
                ScoreValue::Finite(v)
            };
            (value, h)
        })
        .collect();
    WeightedAtomSet::from_masses(atoms)?.quantile(alpha)
}

fn check_scores(features: &Features, scores: &[f64]) -> Result<()> {
    if features.len() != scores.len() {
        return Err(LcpError::InvalidInput(format!(
            "{} feature rows but {} scores",
            features.len(),
            scores.len()
        )));
    }
    if scores.len() < 2 {
        return Err(LcpError::InvalidInput("need at least two tuning samples".into()));
    }
    if let Some(&bad) = scores.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(LcpError::InvalidScore(bad));
    }
    Ok(())
}

/// Threshold at level `alpha` for each sample used as the test point against
/// the other `m - 1`.
pub fn loo_thresholds(
    features: &Features,
    scores: &[f64],
    spec: &LocalizerSpec,
    alpha: f64,
) -> Result<Vec<ScoreValue>> {
    check_scores(features, scores)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LcpError::InvalidLevel(alpha));
    }
    let rows = KernelRows::new(spec, features)?;
    (0..scores.len())
        .into_par_iter()
        .map(|i| threshold_for_row(&rows.row(i)?, scores, i, alpha))
        .collect()
}

/// Threshold for test sample `i` against `m - 1` points drawn with
/// replacement from the whole tuning sample.
fn bootstrap_threshold<R: Rng>(
    features: &Features,
    scores: &[f64],
    spec: &LocalizerSpec,
    alpha: f64,
    i: usize,
    rng: &mut R,
) -> Result<ScoreValue> {
    let m = scores.len();
    let mut idx: Vec<usize> = (0..m - 1).map(|_| rng.random_range(0..m)).collect();
    idx.push(i);
    let set = features.select(&idx);
    let local_scores: Vec<f64> = idx.iter().map(|&j| scores[j]).collect();
    let rows = KernelRows::new(spec, &set)?;
    threshold_for_row(&rows.row(m - 1)?, &local_scores, m - 1, alpha)
}

fn sample_sd(values: &[f64]) -> f64 {
    // shifting by the first value keeps repeated values at exactly zero spread
    let k = values.len() as f64;
    let shift = values[0];
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - shift - mean).powi(2)).sum();
    (ss / (k - 1.0)).sqrt()
}

/// Selects a bandwidth for `base.kind` from `h_grid` (ascending).
///
/// The kind, axis and weight function are taken from `base`; only the
/// bandwidth varies. Bootstrap draws use independent streams derived from
/// one seed drawn from `rng`, so the report does not depend on scheduling.
pub fn tune_bandwidth<R: Rng + ?Sized>(
    features: &Features,
    scores: &[f64],
    base: &LocalizerSpec,
    h_grid: &[f64],
    config: &TuningConfig,
    rng: &mut R,
) -> Result<TuningReport> {
    check_scores(features, scores)?;
    let alpha = config.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LcpError::InvalidLevel(alpha));
    }
    if !(config.omega > 0.0 && config.omega < 1.0) {
        return Err(LcpError::InvalidInput(format!(
            "omega must lie in (0, 1), got {}",
            config.omega
        )));
    }
    if h_grid.is_empty() {
        return Err(LcpError::InvalidInput("empty bandwidth grid".into()));
    }
    if h_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LcpError::InvalidInput(
            "bandwidth grid must be strictly increasing".into(),
        ));
    }
    let m = scores.len();
    let seed: u64 = rng.random();
    let specs: Vec<LocalizerSpec> = h_grid.iter().map(|&h| base.with_bandwidth(h)).collect();

    let thresholds = specs
        .iter()
        .map(|spec| loo_thresholds(features, scores, spec, alpha))
        .collect::<Result<Vec<_>>>()?;
    let infinite_fraction: Vec<f64> = thresholds
        .iter()
        .map(|t| t.iter().filter(|v| v.is_infinite()).count() as f64 / m as f64)
        .collect();
    let eligible: Vec<bool> = infinite_fraction
        .iter()
        .map(|&f| f < 1.0 - config.omega)
        .collect();
    if !eligible.iter().any(|&e| e) {
        return Err(LcpError::NoEligibleBandwidth);
    }

    // samples finite under every eligible candidate
    let common: Vec<usize> = (0..m)
        .filter(|&i| {
            thresholds
                .iter()
                .zip(&eligible)
                .all(|(t, &e)| !e || !t[i].is_infinite())
        })
        .collect();
    if common.is_empty() {
        return Err(LcpError::NoEligibleBandwidth);
    }
    let k = common.len() as f64;

    let mut candidates = Vec::with_capacity(h_grid.len());
    for (l, spec) in specs.iter().enumerate() {
        if !eligible[l] {
            candidates.push(CandidateStats {
                h: h_grid[l],
                infinite_fraction: infinite_fraction[l],
                s: f64::NAN,
                gamma: f64::NAN,
                sigma: f64::NAN,
                objective: f64::NAN,
                eligible: false,
            });
            continue;
        }
        let t = &thresholds[l];
        let s = common.iter().map(|&i| t[i].as_f64()).sum::<f64>() / k;
        let misses = common
            .iter()
            .filter(|&&i| ScoreValue::Finite(scores[i]) > t[i])
            .count() as f64;
        let gamma = (misses / k / (1.0 - alpha)).max(1.0);

        let per_sample: Vec<Option<f64>> = (0..m)
            .into_par_iter()
            .map(|i| -> Result<Option<f64>> {
                let mut draw_rng = ChaCha8Rng::seed_from_u64(seed);
                draw_rng.set_stream((l * m + i) as u64);
                let mut finite = Vec::with_capacity(config.bootstrap);
                for _ in 0..config.bootstrap {
                    if let ScoreValue::Finite(v) =
                        bootstrap_threshold(features, scores, spec, alpha, i, &mut draw_rng)?
                    {
                        finite.push(v);
                    }
                }
                Ok((finite.len() >= 2).then(|| sample_sd(&finite)))
            })
            .collect::<Result<_>>()?;
        let sds: Vec<f64> = per_sample.into_iter().flatten().collect();
        let sigma = if sds.is_empty() {
            0.0
        } else {
            sds.iter().sum::<f64>() / sds.len() as f64
        };
        candidates.push(CandidateStats {
            h: h_grid[l],
            infinite_fraction: infinite_fraction[l],
            s,
            gamma,
            sigma,
            objective: gamma * (s + sigma),
            eligible: true,
        });
    }

    let mut selected_index: Option<usize> = None;
    for (l, c) in candidates.iter().enumerate() {
        if !c.eligible {
            continue;
        }
        // ties go to the larger bandwidth
        match selected_index {
            Some(best) if c.objective > candidates[best].objective => {}
            _ => selected_index = Some(l),
        }
    }

    Ok(TuningReport {
        kind: base.kind,
        alpha,
        omega: config.omega,
        bootstrap: config.bootstrap,
        candidates,
        selected_index: selected_index.expect("at least one eligible candidate"),
        common_finite: common.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Features {
        Features::from_column(v).unwrap()
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn constant_localizer_thresholds_are_leave_one_out_quantiles() {
        let mut s = 9;
        let x: Vec<f64> = (0..20).map(|_| lcg(&mut s)).collect();
        let v: Vec<f64> = (0..20).map(|_| lcg(&mut s) * 3.0).collect();
        let t = loo_thresholds(&col(&x), &v, &LocalizerSpec::constant(), 0.8).unwrap();
        for i in 0..20 {
            let mut others: Vec<f64> = v.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &u)| u).collect();
            others.sort_by(f64::total_cmp);
            // 20 atoms including +inf; level 0.8 needs 16 of them
            assert_eq!(t[i], ScoreValue::Finite(others[15]));
        }
    }

    #[test]
    fn narrow_box_gives_all_infinite() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let t = loo_thresholds(&col(&x), &[0.1, 0.2, 0.3, 0.4], &LocalizerSpec::distance_box(0.5), 0.5)
            .unwrap();
        assert!(t.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn box_thresholds_match_double_loop() {
        let mut s = 42;
        let x: Vec<f64> = (0..10).map(|_| lcg(&mut s) * 4.0).collect();
        let v: Vec<f64> = (0..10).map(|_| lcg(&mut s)).collect();
        let t = loo_thresholds(&col(&x), &v, &LocalizerSpec::distance_box(1.0), 0.7).unwrap();
        for i in 0..10 {
            let mut atoms: Vec<(f64, f64)> = (0..10)
                .filter(|&j| (x[j] - x[i]).abs() <= 1.0)
                .map(|j| if j == i { (f64::INFINITY, 1.0) } else { (v[j], 1.0) })
                .collect();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total = atoms.len() as f64;
            let mut expected = f64::INFINITY;
            for (k, a) in atoms.iter().enumerate() {
                if (k + 1) as f64 / total >= 0.7 {
                    expected = a.0;
                    break;
                }
            }
            assert_eq!(t[i].as_f64(), expected, "sample {i}");
        }
    }

    #[test]
    fn infinite_fraction_shrinks_with_box_width() {
        let mut s = 1;
        for _ in 0..20 {
            let x: Vec<f64> = (0..40).map(|_| lcg(&mut s) * 10.0).collect();
            let v: Vec<f64> = (0..40).map(|_| lcg(&mut s)).collect();
            let mut prev = f64::INFINITY;
            for h in [0.05, 0.2, 0.5, 1.0, 3.0] {
                let t = loo_thresholds(&col(&x), &v, &LocalizerSpec::distance_box(h), 0.9).unwrap();
                let frac = t.iter().filter(|v| v.is_infinite()).count() as f64 / 40.0;
                assert!(frac <= prev);
                prev = frac;
            }
        }
    }

    #[test]
    fn single_eligible_candidate_is_selected() {
        let mut s = 3;
        let x: Vec<f64> = (0..60).map(|_| lcg(&mut s) * 10.0).collect();
        let v: Vec<f64> = (0..60).map(|_| lcg(&mut s)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = tune_bandwidth(
            &col(&x),
            &v,
            &LocalizerSpec::distance_box(1.0),
            &[0.001, 100.0],
            &TuningConfig::new(0.8),
            &mut rng,
        )
        .unwrap();
        assert!(!report.candidates[0].eligible);
        assert_eq!(report.selected_h(), 100.0);
        assert_eq!((report.omega, report.bootstrap), (0.9, 20));
        assert!(report.candidates[1].gamma >= 1.0);
        let csv = report.to_csv();
        assert!(csv.starts_with("h,kind,infinite_fraction,s,gamma,sigma,objective,eligible,selected\n"));
        assert!(csv.contains("0.001,box,1,nan,nan,nan,nan,false,false"));
    }

    #[test]
    fn no_eligible_candidate_asks_for_wider_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = tune_bandwidth(
            &col(&[0.0, 1.0, 2.0]),
            &[0.1, 0.2, 0.3],
            &LocalizerSpec::distance_box(1.0),
            &[0.1],
            &TuningConfig::new(0.8),
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(err, LcpError::NoEligibleBandwidth);
        assert!(err.to_string().contains("widen bandwidth grid"));
    }

    #[test]
    fn constant_scores_have_zero_bootstrap_spread() {
        let x: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let v = vec![0.7; 30];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let report = tune_bandwidth(
            &col(&x),
            &v,
            &LocalizerSpec::constant(),
            &[1.0],
            &TuningConfig::new(0.8),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.candidates[0].sigma, 0.0);
        assert!((report.candidates[0].s - 0.7).abs() < 1e-12);
        assert_eq!(report.candidates[0].gamma, 1.0);
    }

    #[test]
    fn report_is_reproducible() {
        let mut s = 5;
        let x: Vec<f64> = (0..50).map(|_| lcg(&mut s) * 3.0).collect();
        let v: Vec<f64> = (0..50).map(|_| lcg(&mut s)).collect();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            tune_bandwidth(&col(&x), &v, &LocalizerSpec::knn(5), &[5.0, 20.0, 49.0], &TuningConfig::new(0.8), &mut rng)
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
