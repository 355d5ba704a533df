//! Monte Carlo coverage loop.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibration::{default_alpha_grid, CalibrationModel};
use crate::data::Sample;
use crate::error::{LcpError, Result};
use crate::intervals::{split_conformal_threshold, weighted_conformal_threshold, ScoreFunction};
use crate::localizers::{select_projection_axis, LocalizerKind, LocalizerSpec, DEFAULT_MI_BINS};
use crate::quantile::ScoreValue;
use crate::tuning::{format_f64, tune_bandwidth, TuningConfig};

use super::generators::Generator;
use super::learners::{cv_scores, Learner, LearnerKind};

/// Folds used for the cross-validated tuning scores of learned predictors.
pub const DEFAULT_CV_FOLDS: usize = 5;

/// An interval construction compared by the harness.
#[derive(Debug, Clone)]
pub enum Method {
    /// Split conformal, or weighted conformal when the generator has
    /// importance weights.
    Cb,
    /// Localized interval with the level found by grid search.
    Lcb(LocalizerSpec),
    /// Localized interval at the nominal level, without calibration.
    Naive(LocalizerSpec),
    /// Localized interval with the randomized level. It uses the true test
    /// score, so it is only meaningful for checking exactness.
    Randomized(LocalizerSpec),
    /// [`Method::Lcb`] with the bandwidth tuned on a separate sample.
    LcbAuto(LocalizerKind),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Cb => f.write_str("cb"),
            Method::Lcb(s) => write!(f, "lcb-{s}"),
            Method::Naive(s) => write!(f, "naive-{s}"),
            Method::Randomized(s) => write!(f, "rand-{s}"),
            Method::LcbAuto(k) => write!(f, "lcb-auto-{k}"),
        }
    }
}

/// Parses `cb`, `lcb-<spec>`, `naive-<spec>`, `rand-<spec>` and
/// `lcb-auto-<kind>`, where `<spec>` is a localizer such as `box:1`.
impl FromStr for Method {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("cb") {
            return Ok(Method::Cb);
        }
        if let Some(kind) = s.strip_prefix("lcb-auto-") {
            return Ok(Method::LcbAuto(kind.parse()?));
        }
        let (prefix, spec) = s
            .split_once('-')
            .ok_or_else(|| LcpError::InvalidInput(format!("unknown method '{s}'")))?;
        let spec: LocalizerSpec = spec.parse()?;
        match prefix {
            "lcb" => Ok(Method::Lcb(spec)),
            "naive" => Ok(Method::Naive(spec)),
            "rand" => Ok(Method::Randomized(spec)),
            _ => Err(LcpError::InvalidInput(format!("unknown method '{s}'"))),
        }
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub generator: Generator,
    /// Calibration sample size per repetition.
    pub n: usize,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Fits the predictor when the generator has no fixed score.
    pub learner: LearnerKind,
    /// Bandwidth candidates for auto-tuned methods; a per-kind default
    /// when `None`.
    pub tune_grid: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(generator: Generator, n: usize, reps: usize, alphas: Vec<f64>, methods: Vec<Method>) -> Self {
        Self {
            generator,
            n,
            reps,
            alphas,
            methods,
            seed: 0,
            learner: LearnerKind::LeastSquares,
            tune_grid: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(LcpError::InvalidInput("repetitions must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(LcpError::InvalidInput("sample size must be at least 1".into()));
        }
        if self.alphas.is_empty() || self.methods.is_empty() {
            return Err(LcpError::InvalidInput("need at least one level and one method".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(LcpError::InvalidLevel(a));
            }
        }
        Ok(())
    }
}

/// Default bandwidth candidates for tuning with `m` samples.
pub fn default_tune_grid(kind: LocalizerKind, m: usize) -> Vec<f64> {
    let grid: &[f64] = match kind {
        LocalizerKind::DistanceBox => &[0.1, 0.5, 1.0, 2.0],
        LocalizerKind::Knn | LocalizerKind::ShiftKnn => &[10.0, 25.0, 50.0, 100.0, 200.0, 400.0],
        LocalizerKind::Gaussian | LocalizerKind::Exponential => &[0.05, 0.1, 0.25, 0.5, 1.0, 2.0],
        LocalizerKind::Constant => &[1.0],
    };
    let limit = match kind {
        LocalizerKind::Knn => m.saturating_sub(1),
        LocalizerKind::ShiftKnn => m,
        _ => usize::MAX,
    } as f64;
    grid.iter().copied().filter(|&h| h <= limit).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Search,
    Naive,
    Randomized,
}

/// What to compute for one (method, level) cell.
#[derive(Debug, Clone, Copy)]
enum Action {
    Cb,
    Local { spec: usize, mode: Mode },
}

/// One interval produced in one repetition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub alpha_tilde: f64,
    pub lo: f64,
    pub hi: f64,
    pub covered: bool,
}

impl Outcome {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_infinite(&self) -> bool {
        self.lo.is_infinite() || self.hi.is_infinite()
    }
}

/// The test observation of one repetition and every method's outcome,
/// indexed by `method * alphas.len() + alpha`. `None` marks a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub x: Vec<f64>,
    pub y: f64,
    pub outcomes: Vec<Option<Outcome>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub method: String,
    pub alpha: f64,
    pub generator: String,
    /// Bandwidth used; NaN when the method has none.
    pub h: f64,
    /// Share of successful repetitions whose interval holds the response.
    pub coverage: f64,
    /// Binomial standard error of `coverage`.
    pub se: f64,
    /// Mean over finite widths; infinite when every interval was.
    pub mean_width: f64,
    pub inf_frac: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,alpha,generator,h,coverage,se,mean_width,inf_frac\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                format_f64(r.alpha),
                r.generator,
                format_f64(r.h),
                format_f64(r.coverage),
                format_f64(r.se),
                format_f64(r.mean_width),
                format_f64(r.inf_frac)
            );
        }
        out
    }

    pub fn get(&self, method: &str, alpha: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.method == method && r.alpha == alpha)
    }
}

/// The summary table and the per-repetition records behind it.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub table: CoverageTable,
    pub records: Vec<RepRecord>,
    /// Localizers after tuning and axis selection, in plan order.
    pub specs: Vec<LocalizerSpec>,
}

/// Everything fixed before the repetitions start.
struct Plan {
    score: ScoreFunction,
    specs: Vec<LocalizerSpec>,
    /// Per (method, alpha).
    actions: Vec<Action>,
    h: Vec<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn attach_weights(spec: &LocalizerSpec, generator: &Generator) -> Result<LocalizerSpec> {
    let mut spec = spec.clone();
    if spec.kind == LocalizerKind::ShiftKnn && spec.weight_fn.is_none() {
        spec.weight_fn = Some(generator.weight_fn().ok_or_else(|| {
            LcpError::InvalidInput(format!(
                "{} needs importance weights but {generator} has none",
                spec.kind
            ))
        })?);
    }
    Ok(spec)
}

fn build_plan(config: &ExperimentConfig) -> Result<Plan> {
    let generator = &config.generator;
    let needs_tuning = config.methods.iter().any(|m| matches!(m, Method::LcbAuto(_)));
    let fixed = generator.fixed_score();

    // stream 0 holds the auxiliary sample used for fitting and tuning
    let mut aux_rng = stream_rng(config.seed, 0);
    let aux = if fixed.is_none() || needs_tuning {
        Some(generator.sample(config.n, &mut aux_rng))
    } else {
        None
    };
    let (score, tuning_scores) = match fixed {
        Some(score) => {
            let tuning_scores = match &aux {
                Some(d0) if needs_tuning => Some(score.scores(d0)?),
                _ => None,
            };
            (score, tuning_scores)
        }
        None => {
            let d0 = aux.as_ref().expect("auxiliary sample drawn");
            let predictor = config.learner.fit(d0)?;
            let tuning_scores = if needs_tuning {
                Some(cv_scores(d0, DEFAULT_CV_FOLDS.min(d0.len()), &config.learner)?)
            } else {
                None
            };
            (ScoreFunction::AbsResidual(predictor), tuning_scores)
        }
    };
    let axis = match (&aux, &tuning_scores) {
        (Some(d0), Some(v)) if d0.features.dim() > 1 => {
            Some(select_projection_axis(&d0.features, v, DEFAULT_MI_BINS)?)
        }
        _ => None,
    };

    let mut specs: Vec<LocalizerSpec> = Vec::new();
    let mut actions = Vec::new();
    let mut h = Vec::new();
    for method in &config.methods {
        let fixed_spec = match method {
            Method::Lcb(s) | Method::Naive(s) | Method::Randomized(s) => {
                let s = attach_weights(s, generator)?;
                s.validate(config.n + 1)?;
                specs.push(s);
                Some(specs.len() - 1)
            }
            _ => None,
        };
        for &alpha in &config.alphas {
            let (action, bandwidth) = match method {
                Method::Cb => (Action::Cb, f64::NAN),
                Method::Lcb(_) | Method::Naive(_) | Method::Randomized(_) => {
                    let idx = fixed_spec.expect("spec registered");
                    let mode = match method {
                        Method::Lcb(_) => Mode::Search,
                        Method::Naive(_) => Mode::Naive,
                        _ => Mode::Randomized,
                    };
                    let b = if specs[idx].kind == LocalizerKind::Constant {
                        f64::NAN
                    } else {
                        specs[idx].bandwidth
                    };
                    (Action::Local { spec: idx, mode }, b)
                }
                Method::LcbAuto(kind) => {
                    let d0 = aux.as_ref().expect("auxiliary sample drawn");
                    let v = tuning_scores.as_ref().expect("tuning scores computed");
                    let mut base = attach_weights(&LocalizerSpec::new(*kind, 1.0), generator)?;
                    base.axis = axis;
                    let grid = config
                        .tune_grid
                        .clone()
                        .unwrap_or_else(|| default_tune_grid(*kind, d0.len()));
                    let report = tune_bandwidth(
                        &d0.features,
                        v,
                        &base,
                        &grid,
                        &TuningConfig::new(alpha),
                        &mut aux_rng,
                    )?;
                    let chosen = base.with_bandwidth(report.selected_h());
                    chosen.validate(config.n + 1)?;
                    specs.push(chosen);
                    (
                        Action::Local {
                            spec: specs.len() - 1,
                            mode: Mode::Search,
                        },
                        report.selected_h(),
                    )
                }
            };
            actions.push(action);
            h.push(bandwidth);
        }
    }
    Ok(Plan {
        score,
        specs,
        actions,
        h,
    })
}

fn interval(center: f64, q: ScoreValue) -> (f64, f64) {
    match q {
        ScoreValue::Finite(q) => (center - q, center + q),
        ScoreValue::Infinite => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

fn run_rep(config: &ExperimentConfig, plan: &Plan, rep: usize) -> Result<RepRecord> {
    let generator = &config.generator;
    let mut rng = stream_rng(config.seed, rep as u64 + 1);
    let cal: Sample = generator.sample(config.n, &mut rng);
    let (x, y) = generator.test_point(&mut rng);
    let scores = plan.score.scores(&cal)?;
    let center = match &plan.score {
        ScoreFunction::AbsResidual(p) => p.predict(&x),
        ScoreFunction::Custom(_) => {
            return Err(LcpError::InvalidInput("the harness needs a residual score".into()))
        }
    };
    let v_new = plan.score.score(&x, y)?;
    let weight_fn = generator.weight_fn();

    let models: Vec<Result<CalibrationModel>> = plan
        .specs
        .iter()
        .map(|spec| {
            let model = CalibrationModel::new(cal.features.clone(), &scores, spec.clone(), config.alphas[0])?;
            match &weight_fn {
                Some(w) => model.with_weight_fn(w.clone()),
                None => Ok(model),
            }
        })
        .collect();
    let local: Vec<Result<_>> = models
        .iter()
        .map(|m| match m {
            Ok(m) => m.localize(&x),
            Err(e) => Err(e.clone()),
        })
        .collect();

    let cb_weights = weight_fn.as_ref().map(|w| {
        let mut ws: Vec<f64> = cal.features.rows().map(|r| w(r)).collect();
        ws.push(w(&x));
        ws
    });

    let n_alpha = config.alphas.len();
    let mut outcomes = Vec::with_capacity(plan.actions.len());
    for (cell, action) in plan.actions.iter().enumerate() {
        let alpha = config.alphas[cell % n_alpha];
        let result: Result<(f64, ScoreValue)> = match *action {
            Action::Cb => match &cb_weights {
                Some(ws) => weighted_conformal_threshold(&scores, ws, alpha).map(|q| (alpha, q)),
                None => split_conformal_threshold(&scores, alpha).map(|q| (alpha, q)),
            },
            Action::Local { spec, mode } => match &local[spec] {
                Err(e) => Err(e.clone()),
                Ok(l) => {
                    let level = match mode {
                        Mode::Search => l.grid_search_for(alpha, &default_alpha_grid(alpha)),
                        Mode::Naive => Ok(alpha),
                        Mode::Randomized => l.randomized_for(alpha, v_new, &mut rng),
                    };
                    level.and_then(|a| l.threshold(a).map(|q| (a, q)))
                }
            },
        };
        outcomes.push(result.ok().map(|(alpha_tilde, q)| {
            let (lo, hi) = interval(center, q);
            Outcome {
                alpha_tilde,
                lo,
                hi,
                covered: v_new <= q,
            }
        }));
    }
    Ok(RepRecord { x, y, outcomes })
}

fn summarize(config: &ExperimentConfig, plan: &Plan, records: &[RepRecord]) -> CoverageTable {
    let n_alpha = config.alphas.len();
    let mut rows = Vec::with_capacity(plan.actions.len());
    for cell in 0..plan.actions.len() {
        let method = &config.methods[cell / n_alpha];
        let done: Vec<&Outcome> = records.iter().filter_map(|r| r.outcomes[cell].as_ref()).collect();
        let ok = done.len() as f64;
        let coverage = done.iter().filter(|o| o.covered).count() as f64 / ok;
        let finite: Vec<f64> = done.iter().filter(|o| !o.is_infinite()).map(|o| o.width()).collect();
        let mean_width = if finite.is_empty() {
            if done.is_empty() {
                f64::NAN
            } else {
                f64::INFINITY
            }
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        rows.push(CoverageRow {
            method: method.to_string(),
            alpha: config.alphas[cell % n_alpha],
            generator: config.generator.to_string(),
            h: plan.h[cell],
            coverage,
            se: (coverage * (1.0 - coverage) / ok).sqrt(),
            mean_width,
            inf_frac: (done.len() - finite.len()) as f64 / ok,
            failures: records.len() - done.len(),
        });
    }
    CoverageTable { rows }
}

/// Runs every repetition and keeps the per-repetition records.
///
/// Repetition `r` draws from its own stream `r + 1` of the seed; stream 0
/// is reserved for the auxiliary sample used to fit learned predictors and
/// tune bandwidths. Results are identical for any thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let plan = build_plan(config)?;
    let records = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, &plan, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRun {
        table: summarize(config, &plan, &records),
        records,
        specs: plan.specs,
    })
}

/// Coverage, width and infinite-interval share per method and level.
pub fn run_coverage_experiment(config: &ExperimentConfig) -> Result<CoverageTable> {
    Ok(run_experiment(config)?.table)
}
