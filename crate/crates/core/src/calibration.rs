//! Choosing the effective level `alpha_tilde`.
//!
//! For a test point `x` the localizer defines one weighted score
//! distribution per calibration sample plus one for the test point. A level
//! `alpha_tilde` is certified when enough of those distributions cover their
//! own centre's score (the G1 check, which needs the test score) or when the
//! two worst-case substitutions for the unknown test score both do (the G2
//! check, which does not).
//!
//! [`LocalizedCalibration`] precomputes, for one test point, everything
//! needed to answer G1/G2 at any level in `O(n)`. The free functions
//! [`eval_g1`] and [`eval_g2`] evaluate the same conditions by building every
//! distribution explicitly; they are slower and serve as the reference.

use std::fmt;

use rand::Rng;

use crate::data::Features;
use crate::error::{LcpError, Result};
use crate::localizers::{KernelMatrix, KernelRows, LocalizerSpec, WeightFn};
use crate::quantile::{ScoreValue, WeightedAtomSet};

/// Number of evenly spaced points in the default level grid.
pub const DEFAULT_GRID_SIZE: usize = 200;

/// Resolution of the grid used by the randomized rule.
pub const REFINEMENT_GRID_SIZE: usize = 2000;

/// `k / size` for `k = 1..=size`, plus `alpha`, sorted and deduplicated.
pub fn alpha_grid(size: usize, alpha: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=size).map(|k| k as f64 / size as f64).collect();
    if alpha > 0.0 && alpha <= 1.0 {
        grid.push(alpha);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// The default grid: 200 evenly spaced levels on `(0, 1]` plus `alpha`.
pub fn default_alpha_grid(alpha: f64) -> Vec<f64> {
    alpha_grid(DEFAULT_GRID_SIZE, alpha)
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(LcpError::InvalidLevel(alpha))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(LcpError::InvalidInput("empty alpha grid".into()));
    }
    if let Some(&bad) = grid.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(LcpError::InvalidLevel(bad));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LcpError::InvalidInput(
            "alpha grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Calibration data, localizer, importance weights and level grid.
#[derive(Clone)]
pub struct CalibrationModel {
    features: Features,
    scores: Vec<ScoreValue>,
    localizer: LocalizerSpec,
    weights: Option<Vec<f64>>,
    weight_fn: Option<WeightFn>,
    alpha: f64,
    alpha_grid: Vec<f64>,
    // calibration indices sorted by score (stable), and where each run of
    // equal scores starts in that order
    order: Vec<usize>,
    group_starts: Vec<usize>,
    group_of: Vec<usize>,
}

impl fmt::Debug for CalibrationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CalibrationModel")
            .field("n", &self.scores.len())
            .field("dim", &self.features.dim())
            .field("localizer", &self.localizer)
            .field("weighted", &(self.weights.is_some() || self.weight_fn.is_some()))
            .field("alpha", &self.alpha)
            .field("grid_len", &self.alpha_grid.len())
            .finish()
    }
}

impl CalibrationModel {
    /// Builds a model with unit importance weights and the default grid.
    pub fn new(
        features: Features,
        scores: &[f64],
        localizer: LocalizerSpec,
        alpha: f64,
    ) -> Result<Self> {
        check_level(alpha)?;
        if scores.is_empty() {
            return Err(LcpError::InvalidInput("no calibration scores".into()));
        }
        if features.len() != scores.len() {
            return Err(LcpError::InvalidInput(format!(
                "{} feature rows but {} scores",
                features.len(),
                scores.len()
            )));
        }
        let scores = scores
            .iter()
            .map(|&v| match ScoreValue::new(v)? {
                ScoreValue::Infinite => Err(LcpError::InvalidScore(v)),
                s => Ok(s),
            })
            .collect::<Result<Vec<_>>>()?;
        localizer.validate(scores.len() + 1)?;

        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].cmp(&scores[b]));
        let mut group_starts = Vec::new();
        let mut group_of = vec![0; scores.len()];
        for (k, &i) in order.iter().enumerate() {
            if k == 0 || scores[order[k - 1]] != scores[i] {
                group_starts.push(k);
            }
            group_of[i] = group_starts.len() - 1;
        }

        Ok(Self {
            features,
            scores,
            localizer,
            weights: None,
            weight_fn: None,
            alpha,
            alpha_grid: default_alpha_grid(alpha),
            order,
            group_starts,
            group_of,
        })
    }

    pub fn with_alpha_grid(mut self, grid: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        self.alpha_grid = grid;
        Ok(self)
    }

    /// Importance weights `w(X_1..X_n)` for the calibration samples. The
    /// test point's weight comes from the weight function if one is set,
    /// otherwise from [`CalibrationModel::localize_with_weight`], otherwise 1.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.scores.len() {
            return Err(LcpError::InvalidInput(format!(
                "{} importance weights for {} samples",
                weights.len(),
                self.scores.len()
            )));
        }
        check_positive_weights(&weights)?;
        self.weights = Some(weights);
        Ok(self)
    }

    /// Importance weights from a density ratio `w(x)`, applied to every
    /// calibration sample and to each test point.
    pub fn with_weight_fn(mut self, w: WeightFn) -> Result<Self> {
        let weights: Vec<f64> = self.features.rows().map(|x| w(x)).collect();
        check_positive_weights(&weights)?;
        self.weights = Some(weights);
        self.weight_fn = Some(w);
        Ok(self)
    }

    pub fn with_localizer(mut self, localizer: LocalizerSpec) -> Result<Self> {
        localizer.validate(self.scores.len() + 1)?;
        self.localizer = localizer;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_grid(&self) -> &[f64] {
        &self.alpha_grid
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn scores(&self) -> &[ScoreValue] {
        &self.scores
    }

    pub fn localizer(&self) -> &LocalizerSpec {
        &self.localizer
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    fn test_weight(&self, x_new: &[f64]) -> Result<f64> {
        let w = self.weight_fn.as_ref().map_or(1.0, |w| w(x_new));
        check_positive_weights(&[w])?;
        Ok(w)
    }

    /// `w_1..w_n, w_{n+1}`.
    fn importance(&self, test_weight: f64) -> Vec<f64> {
        let mut w = match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0; self.scores.len()],
        };
        w.push(test_weight);
        w
    }

    fn augmented(&self, x_new: &[f64]) -> Result<Features> {
        self.features.with_row(x_new)
    }

    /// Precomputes the localized distributions for one test point.
    pub fn localize(&self, x_new: &[f64]) -> Result<LocalizedCalibration<'_>> {
        let w = self.test_weight(x_new)?;
        self.localize_with_weight(x_new, w)
    }

    /// As [`CalibrationModel::localize`] with an explicit test weight.
    pub fn localize_with_weight(
        &self,
        x_new: &[f64],
        test_weight: f64,
    ) -> Result<LocalizedCalibration<'_>> {
        check_positive_weights(&[test_weight])?;
        let all = self.augmented(x_new)?;
        let rows = KernelRows::new(&self.localizer, &all)?;
        let n = self.n();
        let mut below = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        let mut total = Vec::with_capacity(n);
        let mut buf = Vec::with_capacity(n + 1);
        for i in 0..n {
            rows.fill(i, &mut buf)?;
            total.push(buf.iter().sum::<f64>());
            cross.push(buf[n]);
            // mass strictly below V_i, merged group by group in score order
            let mut acc = 0.0;
            for g in 0..self.group_of[i] {
                let end = self.group_starts[g + 1];
                let mass: f64 = self.order[self.group_starts[g]..end]
                    .iter()
                    .map(|&j| buf[j])
                    .sum();
                acc += mass;
            }
            below.push(acc);
        }
        rows.fill(n, &mut buf)?;
        let mut atoms: Vec<(ScoreValue, f64)> =
            self.scores.iter().zip(&buf).map(|(&v, &h)| (v, h)).collect();
        atoms.push((ScoreValue::Infinite, buf[n]));
        let test_row = WeightedAtomSet::from_masses(atoms)?;

        let importance = self.importance(test_weight);
        let importance_total = importance.iter().sum();
        let min_score = self.scores[self.order[0]];
        Ok(LocalizedCalibration {
            model: self,
            below,
            cross,
            total,
            test_row,
            importance,
            importance_total,
            min_score,
        })
    }
}

fn check_positive_weights(weights: &[f64]) -> Result<()> {
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(LcpError::InvalidWeight { index, weight });
        }
    }
    Ok(())
}

/// Outcome of the G1 check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G1Result {
    /// Weighted fraction of distributions covering their own centre.
    pub achieved: f64,
    pub satisfied: bool,
}

/// Outcome of the G2 check without the per-sample thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Check {
    pub alpha_tilde: f64,
    pub bar_v_star: ScoreValue,
    pub s1: f64,
    pub s2: f64,
    pub satisfied: bool,
    pub quantile_is_infinite: bool,
}

impl G2Check {
    /// The level is acceptable for the interval.
    pub fn qualifies(&self) -> bool {
        self.satisfied || self.quantile_is_infinite
    }
}

/// Full G2 evaluation including every per-sample threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Witness {
    pub alpha_tilde: f64,
    pub bar_v_star: ScoreValue,
    /// Row thresholds with the test atom at `bar_v_star`.
    pub v_star_1: Vec<ScoreValue>,
    /// Row thresholds with the test atom at 0.
    pub v_star_2: Vec<ScoreValue>,
    pub s1: f64,
    pub s2: f64,
    pub satisfied: bool,
    pub quantile_is_infinite: bool,
}

impl G2Witness {
    pub fn check(&self) -> G2Check {
        G2Check {
            alpha_tilde: self.alpha_tilde,
            bar_v_star: self.bar_v_star,
            s1: self.s1,
            s2: self.s2,
            satisfied: self.satisfied,
            quantile_is_infinite: self.quantile_is_infinite,
        }
    }
}

/// Localized distributions for a single test point.
///
/// For calibration row `i` it keeps the kernel mass strictly below `V_i`
/// among the calibration points, the mass on the test point and the row
/// total. Because `V_i <= Q(a; F_i)` holds exactly when the mass strictly
/// below `V_i` is less than `a`, each row's coverage at any level and for
/// any value of the test atom is a constant-time check.
pub struct LocalizedCalibration<'m> {
    model: &'m CalibrationModel,
    below: Vec<f64>,
    cross: Vec<f64>,
    total: Vec<f64>,
    test_row: WeightedAtomSet,
    importance: Vec<f64>,
    importance_total: f64,
    min_score: ScoreValue,
}

impl<'m> LocalizedCalibration<'m> {
    pub fn model(&self) -> &'m CalibrationModel {
        self.model
    }

    /// The test point's distribution `F`, with its own atom at `+inf`.
    pub fn test_distribution(&self) -> &WeightedAtomSet {
        &self.test_row
    }

    /// `Q(alpha_tilde; F)`, the score threshold of the interval.
    pub fn threshold(&self, alpha_tilde: f64) -> Result<ScoreValue> {
        self.test_row.quantile(alpha_tilde)
    }

    /// Whether calibration row `i` covers `V_i` when the test atom is `v`.
    fn row_covers(&self, i: usize, v: ScoreValue, alpha_tilde: f64) -> bool {
        let vi = self.model.scores[i];
        if alpha_tilde <= 0.0 {
            // the zero level picks the smallest atom in the row
            return vi == self.min_score && !(v < vi);
        }
        let mut mass = self.below[i];
        if v < vi {
            mass += self.cross[i];
        }
        mass / self.total[i] < alpha_tilde
    }

    /// `v_new <= Q(alpha_tilde; F)`.
    pub fn covers(&self, alpha_tilde: f64, v_new: ScoreValue) -> bool {
        if alpha_tilde <= 0.0 {
            return v_new <= self.min_score;
        }
        self.test_row.cdf_below(v_new) < alpha_tilde
    }

    fn covered_weight(&self, v: ScoreValue, alpha_tilde: f64) -> f64 {
        let mut num = 0.0;
        for i in 0..self.below.len() {
            if self.row_covers(i, v, alpha_tilde) {
                num += self.importance[i];
            }
        }
        num
    }

    fn test_importance(&self) -> f64 {
        self.importance[self.below.len()]
    }

    /// The G1 check with test score `v_new`.
    pub fn g1(&self, alpha_tilde: f64, v_new: ScoreValue) -> Result<G1Result> {
        self.g1_for(self.model.alpha, alpha_tilde, v_new)
    }

    /// [`LocalizedCalibration::g1`] against target level `alpha`.
    pub fn g1_for(&self, alpha: f64, alpha_tilde: f64, v_new: ScoreValue) -> Result<G1Result> {
        if !(0.0..=1.0).contains(&alpha_tilde) {
            return Err(LcpError::InvalidLevel(alpha_tilde));
        }
        let mut num = self.covered_weight(v_new, alpha_tilde);
        if self.covers(alpha_tilde, v_new) {
            num += self.test_importance();
        }
        let achieved = num / self.importance_total;
        Ok(G1Result {
            achieved,
            satisfied: achieved >= alpha,
        })
    }

    /// The G2 check.
    pub fn g2(&self, alpha_tilde: f64) -> Result<G2Check> {
        self.g2_for(self.model.alpha, alpha_tilde)
    }

    /// [`LocalizedCalibration::g2`] against target level `alpha`.
    pub fn g2_for(&self, alpha: f64, alpha_tilde: f64) -> Result<G2Check> {
        let bar_v_star = self.threshold(alpha_tilde)?;
        let s1 = self.covered_weight(bar_v_star, alpha_tilde) / self.importance_total;
        let s2 = (self.covered_weight(ScoreValue::ZERO, alpha_tilde) + self.test_importance())
            / self.importance_total;
        Ok(G2Check {
            alpha_tilde,
            bar_v_star,
            s1,
            s2,
            satisfied: s1 >= alpha && s2 >= alpha,
            quantile_is_infinite: bar_v_star.is_infinite(),
        })
    }

    /// First level of `grid` (ascending scan) at which G2 holds or the
    /// threshold is infinite.
    pub fn grid_search(&self, grid: &[f64]) -> Result<f64> {
        self.grid_search_for(self.model.alpha, grid)
    }

    /// [`LocalizedCalibration::grid_search`] against target level `alpha`.
    pub fn grid_search_for(&self, alpha: f64, grid: &[f64]) -> Result<f64> {
        for &a in grid {
            if self.g2_for(alpha, a)?.qualifies() {
                return Ok(a);
            }
        }
        Err(LcpError::NoFeasibleLevel {
            best_alpha: grid.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Grid search over the model's own grid.
    pub fn search(&self) -> Result<f64> {
        self.grid_search(&self.model.alpha_grid)
    }

    /// Randomized level making `P{V_{n+1} <= Q(alpha_tilde; F)}` exactly
    /// the target, located on a grid of [`REFINEMENT_GRID_SIZE`] levels.
    pub fn randomized<R: Rng + ?Sized>(&self, v_new: ScoreValue, rng: &mut R) -> Result<f64> {
        self.randomized_for(self.model.alpha, v_new, rng)
    }

    /// [`LocalizedCalibration::randomized`] against target level `alpha`.
    pub fn randomized_for<R: Rng + ?Sized>(
        &self,
        alpha: f64,
        v_new: ScoreValue,
        rng: &mut R,
    ) -> Result<f64> {
        let size = REFINEMENT_GRID_SIZE;
        let level = |k: usize| k as f64 / size as f64;
        let achieved = |k: usize| self.g1_for(alpha, level(k), v_new).map(|g| g.achieved);
        // the achieved sum is nondecreasing in the level and equals 1 at 1
        let (mut lo, mut hi) = (1, size);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if achieved(mid)? >= alpha {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let k1 = lo;
        if k1 == 1 {
            return Ok(level(k1));
        }
        let a1 = achieved(k1)?;
        let a2 = achieved(k1 - 1)?;
        if a1 <= a2 {
            return Ok(level(k1));
        }
        let p = ((alpha - a2) / (a1 - a2)).clamp(0.0, 1.0);
        Ok(if rng.random_bool(p) {
            level(k1)
        } else {
            level(k1 - 1)
        })
    }
}

/// Kernel matrix, atoms and importance weights over all `n + 1` points.
fn explicit_parts(
    model: &CalibrationModel,
    x_new: &[f64],
) -> Result<(KernelMatrix, Vec<f64>)> {
    let all = model.augmented(x_new)?;
    let kernel = KernelMatrix::build(&model.localizer, &all)?;
    let w = model.test_weight(x_new)?;
    Ok((kernel, model.importance(w)))
}

fn row_distribution(kernel: &KernelMatrix, i: usize, atoms: &[ScoreValue]) -> Result<WeightedAtomSet> {
    WeightedAtomSet::from_masses(atoms.iter().copied().zip(kernel.row(i).iter().copied()).collect())
}

/// Weighted share of rows `i` with `V_i <= Q(alpha_tilde; F_i)`, built
/// explicitly from the kernel matrix and all `n + 1` scores.
pub(crate) fn explicit_g1_achieved(
    kernel: &KernelMatrix,
    scores: &[ScoreValue],
    importance: &[f64],
    alpha_tilde: f64,
) -> Result<f64> {
    let total: f64 = importance.iter().sum();
    let mut num = 0.0;
    for (i, &vi) in scores.iter().enumerate() {
        let dist = row_distribution(kernel, i, scores)?;
        if vi <= dist.quantile(alpha_tilde)? {
            num += importance[i];
        }
    }
    Ok(num / total)
}

/// The G1 check for test point `x_new` with candidate score `v_new`.
pub fn eval_g1(
    alpha_tilde: f64,
    model: &CalibrationModel,
    x_new: &[f64],
    v_new: ScoreValue,
) -> Result<G1Result> {
    let (kernel, importance) = explicit_parts(model, x_new)?;
    let mut scores = model.scores.clone();
    scores.push(v_new);
    let achieved = explicit_g1_achieved(&kernel, &scores, &importance, alpha_tilde)?;
    Ok(G1Result {
        achieved,
        satisfied: achieved >= model.alpha,
    })
}

/// The G2 check for test point `x_new`, with every threshold.
pub fn eval_g2(alpha_tilde: f64, model: &CalibrationModel, x_new: &[f64]) -> Result<G2Witness> {
    let (kernel, importance) = explicit_parts(model, x_new)?;
    let n = model.n();
    let mut atoms = model.scores.clone();
    atoms.push(ScoreValue::Infinite);
    let bar_v_star = row_distribution(&kernel, n, &atoms)?.quantile(alpha_tilde)?;

    let total: f64 = importance.iter().sum();
    let mut v_star_1 = Vec::with_capacity(n);
    let mut v_star_2 = Vec::with_capacity(n);
    let (mut num1, mut num2) = (0.0, 0.0);
    for i in 0..n {
        let row = row_distribution(&kernel, i, &atoms)?;
        let t1 = row.substitute(n, bar_v_star)?.quantile(alpha_tilde)?;
        let t2 = row.substitute(n, ScoreValue::ZERO)?.quantile(alpha_tilde)?;
        let vi = model.scores[i];
        if vi <= t1 {
            num1 += importance[i];
        }
        if vi <= t2 {
            num2 += importance[i];
        }
        v_star_1.push(t1);
        v_star_2.push(t2);
    }
    let s1 = num1 / total;
    let s2 = (num2 + importance[n]) / total;
    Ok(G2Witness {
        alpha_tilde,
        bar_v_star,
        v_star_1,
        v_star_2,
        s1,
        s2,
        satisfied: s1 >= model.alpha && s2 >= model.alpha,
        quantile_is_infinite: bar_v_star.is_infinite(),
    })
}

/// Smallest level of the model grid at which G2 holds or the threshold is
/// infinite.
pub fn grid_search_alpha(model: &CalibrationModel, x_new: &[f64]) -> Result<f64> {
    model.localize(x_new)?.search()
}

/// The randomized exact-level rule for test score `v_new`.
pub fn randomized_alpha<R: Rng + ?Sized>(
    model: &CalibrationModel,
    x_new: &[f64],
    v_new: ScoreValue,
    rng: &mut R,
) -> Result<f64> {
    model.localize(x_new)?.randomized(v_new, rng)
}
