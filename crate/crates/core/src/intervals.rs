//! Prediction sets from calibrated score thresholds.

use std::fmt;
use std::sync::Arc;

use crate::calibration::{default_alpha_grid, CalibrationModel};
use crate::data::{Features, Sample};
use crate::error::{LcpError, Result};
use crate::localizers::{KernelMatrix, LocalizerSpec};
use crate::quantile::{ScoreValue, WeightedAtomSet};

/// A point prediction `mu(x)`.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Nonconformity score `V(x, y)`.
#[derive(Clone)]
pub enum ScoreFunction {
    /// `|y - mu(x)|`; invertible in closed form.
    AbsResidual(Arc<dyn Predictor>),
    /// Any nonnegative score; inverted over a grid of `y` values.
    Custom(Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFunction::AbsResidual(_) => f.write_str("AbsResidual(..)"),
            ScoreFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ScoreFunction {
    pub fn abs_residual<P: Predictor + 'static>(predictor: P) -> Self {
        ScoreFunction::AbsResidual(Arc::new(predictor))
    }

    pub fn custom<F>(score: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        ScoreFunction::Custom(Arc::new(score))
    }

    /// Wraps this score as a custom one, hiding its closed form.
    pub fn as_custom(&self) -> Self {
        let inner = self.clone();
        ScoreFunction::Custom(Arc::new(move |x: &[f64], y: f64| inner.raw(x, y)))
    }

    fn raw(&self, x: &[f64], y: f64) -> f64 {
        match self {
            ScoreFunction::AbsResidual(mu) => (y - mu.predict(x)).abs(),
            ScoreFunction::Custom(v) => v(x, y),
        }
    }

    pub fn score(&self, x: &[f64], y: f64) -> Result<ScoreValue> {
        ScoreValue::new(self.raw(x, y))
    }

    /// Scores for every sample.
    pub fn scores(&self, sample: &Sample) -> Result<Vec<f64>> {
        sample
            .features
            .rows()
            .zip(&sample.y)
            .map(|(x, &y)| self.score(x, y).map(|s| s.as_f64()))
            .collect()
    }

    fn center(&self, x: &[f64]) -> Result<f64> {
        match self {
            ScoreFunction::AbsResidual(mu) => {
                let m = mu.predict(x);
                if m.is_finite() {
                    Ok(m)
                } else {
                    Err(LcpError::InvalidInput(format!("prediction {m} is not finite")))
                }
            }
            ScoreFunction::Custom(_) => Err(LcpError::InvalidInput(
                "closed-form inversion needs an absolute-residual score".into(),
            )),
        }
    }
}

/// A prediction set for the response.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSet {
    /// `[lo, hi]`; both ends are infinite when the threshold is.
    Interval { lo: f64, hi: f64 },
    /// Membership of each point of a `y` grid.
    Grid { grid: Vec<f64>, member: Vec<bool> },
}

impl PredictionSet {
    pub fn is_infinite(&self) -> bool {
        match self {
            PredictionSet::Interval { lo, hi } => lo.is_infinite() || hi.is_infinite(),
            PredictionSet::Grid { .. } => false,
        }
    }

    /// Interval length; `None` for grid sets.
    pub fn width(&self) -> Option<f64> {
        match self {
            PredictionSet::Interval { lo, hi } => Some(hi - lo),
            PredictionSet::Grid { .. } => None,
        }
    }

    /// Whether `y` is in the set. Grid sets answer for grid points only.
    pub fn contains(&self, y: f64) -> bool {
        match self {
            PredictionSet::Interval { lo, hi } => *lo <= y && y <= *hi,
            PredictionSet::Grid { grid, member } => grid
                .iter()
                .position(|&g| g == y)
                .is_some_and(|k| member[k]),
        }
    }
}

/// A prediction set with the level and threshold that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPrediction {
    pub alpha_tilde: f64,
    pub threshold: ScoreValue,
    pub set: PredictionSet,
}

fn interval_around(center: f64, q: ScoreValue) -> PredictionSet {
    match q {
        ScoreValue::Finite(q) => PredictionSet::Interval {
            lo: center - q,
            hi: center + q,
        },
        ScoreValue::Infinite => PredictionSet::Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        },
    }
}

fn grid_membership(
    score: &ScoreFunction,
    x_new: &[f64],
    y_grid: &[f64],
    q: ScoreValue,
) -> Result<PredictionSet> {
    if y_grid.is_empty() {
        return Err(LcpError::InvalidInput("empty y grid".into()));
    }
    let member = y_grid
        .iter()
        .map(|&y| score.score(x_new, y).map(|v| v <= q))
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet::Grid {
        grid: y_grid.to_vec(),
        member,
    })
}

/// Localized interval with the level chosen by grid search.
pub fn lcp_interval(
    model: &CalibrationModel,
    x_new: &[f64],
    score: &ScoreFunction,
) -> Result<IntervalPrediction> {
    let center = score.center(x_new)?;
    let local = model.localize(x_new)?;
    let alpha_tilde = local.search()?;
    let threshold = local.threshold(alpha_tilde)?;
    Ok(IntervalPrediction {
        alpha_tilde,
        threshold,
        set: interval_around(center, threshold),
    })
}

/// Localized set for a general score, by membership over `y_grid`.
pub fn lcp_set_generic(
    model: &CalibrationModel,
    x_new: &[f64],
    score: &ScoreFunction,
    y_grid: &[f64],
) -> Result<IntervalPrediction> {
    let local = model.localize(x_new)?;
    let alpha_tilde = local.search()?;
    let threshold = local.threshold(alpha_tilde)?;
    Ok(IntervalPrediction {
        alpha_tilde,
        threshold,
        set: grid_membership(score, x_new, y_grid, threshold)?,
    })
}

/// Interval at level `alpha` itself, valid for local coverage around the
/// test point when the localizer does not depend on the data.
pub fn local_coverage_interval(
    model: &CalibrationModel,
    x_new: &[f64],
    score: &ScoreFunction,
) -> Result<IntervalPrediction> {
    if model.localizer().is_data_dependent() {
        return Err(LcpError::DataDependentLocalizer(model.localizer().to_string()));
    }
    let center = score.center(x_new)?;
    let alpha = model.alpha();
    let threshold = model.localize(x_new)?.threshold(alpha)?;
    Ok(IntervalPrediction {
        alpha_tilde: alpha,
        threshold,
        set: interval_around(center, threshold),
    })
}

fn finite_scores(scores: &[f64]) -> Result<Vec<ScoreValue>> {
    if scores.is_empty() {
        return Err(LcpError::InvalidInput("no calibration scores".into()));
    }
    scores
        .iter()
        .map(|&v| match ScoreValue::new(v)? {
            ScoreValue::Infinite => Err(LcpError::InvalidScore(v)),
            s => Ok(s),
        })
        .collect()
}

/// `Q(alpha; V_1..V_n, +inf)` with equal weights.
pub fn split_conformal_threshold(scores: &[f64], alpha: f64) -> Result<ScoreValue> {
    let mut atoms = finite_scores(scores)?;
    atoms.push(ScoreValue::Infinite);
    WeightedAtomSet::uniform(&atoms)?.quantile(alpha)
}

/// `Q(alpha; sum p_i V_i + p_{n+1} inf)` with `p_i = w_i / sum w`.
///
/// `weights` has one entry per score plus the test point's weight last.
pub fn weighted_conformal_threshold(scores: &[f64], weights: &[f64], alpha: f64) -> Result<ScoreValue> {
    let values = finite_scores(scores)?;
    if weights.len() != values.len() + 1 {
        return Err(LcpError::InvalidInput(format!(
            "expected {} weights (calibration plus test), got {}",
            values.len() + 1,
            weights.len()
        )));
    }
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(LcpError::InvalidWeight { index, weight });
        }
    }
    let mut atoms: Vec<(ScoreValue, f64)> = values.into_iter().zip(weights.iter().copied()).collect();
    atoms.push((ScoreValue::Infinite, weights[weights.len() - 1]));
    WeightedAtomSet::from_masses(atoms)?.quantile(alpha)
}

/// Split conformal interval.
pub fn split_conformal_interval(
    scores: &[f64],
    alpha: f64,
    x_new: &[f64],
    score: &ScoreFunction,
) -> Result<IntervalPrediction> {
    let center = score.center(x_new)?;
    let threshold = split_conformal_threshold(scores, alpha)?;
    Ok(IntervalPrediction {
        alpha_tilde: alpha,
        threshold,
        set: interval_around(center, threshold),
    })
}

/// Weighted conformal interval under covariate shift.
pub fn weighted_conformal_interval(
    scores: &[f64],
    weights: &[f64],
    alpha: f64,
    x_new: &[f64],
    score: &ScoreFunction,
) -> Result<IntervalPrediction> {
    let center = score.center(x_new)?;
    let threshold = weighted_conformal_threshold(scores, weights, alpha)?;
    Ok(IntervalPrediction {
        alpha_tilde: alpha,
        threshold,
        set: interval_around(center, threshold),
    })
}

/// Result of the exact data-dependent construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDependentSet {
    pub set: PredictionSet,
    /// Level used at each grid point; `None` when undecided.
    pub alpha_tilde: Vec<Option<f64>>,
    /// Grid points whose retraining failed; they are excluded from the set.
    pub undecided: Vec<bool>,
}

/// Exact localized set for a score that is retrained on the augmented data.
///
/// For every candidate `y` the trainer is refit on the calibration data plus
/// `(x_new, y)`, all `n + 1` scores are recomputed, the smallest level of the
/// default grid satisfying G1 is found, and `y` is kept when the test score is
/// within that level's threshold. The cost is one fit per grid point, so this
/// is meant for small problems.
pub fn exact_lcp_set_datadep<T>(
    trainer: T,
    data: &Sample,
    x_new: &[f64],
    y_grid: &[f64],
    alpha: f64,
    localizer: &LocalizerSpec,
) -> Result<DataDependentSet>
where
    T: Fn(&Sample) -> Result<ScoreFunction>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LcpError::InvalidLevel(alpha));
    }
    if y_grid.is_empty() {
        return Err(LcpError::InvalidInput("empty y grid".into()));
    }
    let grid = default_alpha_grid(alpha);
    let all: Features = data.features.with_row(x_new)?;
    let kernel = KernelMatrix::build(localizer, &all)?;
    let n1 = all.len();

    let mut member = Vec::with_capacity(y_grid.len());
    let mut levels = Vec::with_capacity(y_grid.len());
    let mut undecided = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let decided = (|| -> Result<Option<(f64, bool)>> {
            let augmented = data.with_point(x_new, y)?;
            let score = trainer(&augmented)?;
            let scores: Vec<ScoreValue> = augmented
                .features
                .rows()
                .zip(&augmented.y)
                .map(|(x, &yy)| score.score(x, yy))
                .collect::<Result<_>>()?;
            let rows: Vec<WeightedAtomSet> = (0..n1)
                .map(|i| {
                    WeightedAtomSet::from_masses(
                        scores.iter().copied().zip(kernel.row(i).iter().copied()).collect(),
                    )
                })
                .collect::<Result<_>>()?;
            let achieved = |a: f64| -> Result<f64> {
                let mut covered = 0usize;
                for (i, row) in rows.iter().enumerate() {
                    if scores[i] <= row.quantile(a)? {
                        covered += 1;
                    }
                }
                Ok(covered as f64 / n1 as f64)
            };
            // the achieved share is nondecreasing in the level
            let (mut lo, mut hi) = (0, grid.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                if achieved(grid[mid])? >= alpha {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            let Some(&a) = grid.get(lo) else {
                return Ok(None);
            };
            let test = rows[n1 - 1].substitute(n1 - 1, ScoreValue::Infinite)?;
            Ok(Some((a, scores[n1 - 1] <= test.quantile(a)?)))
        })();
        match decided {
            Ok(Some((a, inside))) => {
                levels.push(Some(a));
                member.push(inside);
                undecided.push(false);
            }
            Ok(None) => {
                levels.push(None);
                member.push(false);
                undecided.push(false);
            }
            Err(_) => {
                levels.push(None);
                member.push(false);
                undecided.push(true);
            }
        }
    }
    Ok(DataDependentSet {
        set: PredictionSet::Grid {
            grid: y_grid.to_vec(),
            member,
        },
        alpha_tilde: levels,
        undecided,
    })
}
