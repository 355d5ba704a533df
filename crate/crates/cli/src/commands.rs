//! The three subcommands, each a pure function from settings to output.

use std::path::Path;
use std::sync::Arc;

use lcp_core::calibration::alpha_grid;
use lcp_core::simbench::{
    
    default_tune_grid, parse_methods, run_coverage_experiment, ExperimentConfig, Generator, Learner,
    LearnerKind, LinearModel,
};
use lcp_core::tuning::{format_f64, TuningConfig, DEFAULT_BOOTSTRAP, DEFAULT_OMEGA};
use lcp_core::{
    select_projection_axis, tune_bandwidth, CalibrationModel, Features, LcpError, LocalizerKind,
    LocalizerSpec, Predictor, Sample, ScoreValue,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_list, RunConfig};
use crate::error::{CliError, Result};
use crate::table::{to_csv, Table};

pub const DEFAULT_N: usize = 500;
pub const DEFAULT_REPS: usize = 1000;

/// CSV bytes plus lines for the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub csv: String,
    pub messages: Vec<String>,
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn single_alpha(cfg: &RunConfig) -> Result<f64> {
    let list = parse_list(cfg.require(&cfg.alpha, "alpha")?, "alpha")?;
    match list.as_slice() {
        [a] if *a > 0.0 && *a < 1.0 => Ok(*a),
        [a] => Err(CliError::Usage(format!("alpha must lie in (0, 1), got {a}"))),
        _ => Err(CliError::Usage("this subcommand takes a single alpha".into())),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Output> {
    let generator: Generator = cfg
        .require(&cfg.generator, "generator")?
        .parse()
        .map_err(CliError::usage)?;
    let alphas = parse_list(cfg.require(&cfg.alpha, "alpha")?, "alpha")?;
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {a}")));
    }
    let methods = parse_methods(cfg.require(&cfg.method, "method")?).map_err(CliError::usage)?;
    let reps = cfg.reps.unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(CliError::Usage("reps must be at least 1".into()));
    }
    let mut config = ExperimentConfig::new(generator, cfg.n.unwrap_or(DEFAULT_N), reps, alphas, methods)
        .with_seed(seed(cfg));
    if let Some(l) = &cfg.learner {
        config.learner = l.parse().map_err(CliError::usage)?;
    }
    if let Some(g) = &cfg.h_grid {
        config.tune_grid = Some(parse_list(g, "h_grid")?);
    }
    // the data are synthetic, so anything but infeasibility is a setting problem
    let table = run_coverage_experiment(&config).map_err(|e| match e {
        LcpError::NoEligibleBandwidth | LcpError::NoFeasibleLevel { .. } => CliError::from(e),
        other => CliError::usage(other),
    })?;
    Ok(Output {
        csv: table.to_csv(),
        messages: Vec::new(),
    })
}

/// Column names with their defaults.
struct Columns {
    score: String,
    y: String,
    pred: String,
    weight: Option<String>,
}

impl Columns {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            score: cfg.score_col.clone().unwrap_or_else(|| "score".into()),
            y: cfg.y_col.clone().unwrap_or_else(|| "y".into()),
            pred: cfg.pred_col.clone().unwrap_or_else(|| "pred".into()),
            weight: cfg.weight_col.clone(),
        }
    }

    /// Configured feature columns, or every column that is not reserved.
    fn features(&self, cfg: &RunConfig, table: &Table) -> Result<Vec<String>> {
        let names: Vec<String> = match &cfg.features {
            Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            None => table
                .headers
                .iter()
                .filter(|h| {
                    **h != self.score && **h != self.y && **h != self.pred && Some(*h) != self.weight.as_ref()
                })
                .cloned()
                .collect(),
        };
        if names.is_empty() {
            return Err(CliError::Data(format!("{}: no feature columns", table.name)));
        }
        Ok(names)
    }
}

fn features_of(table: &Table, names: &[String]) -> Result<Features> {
    Features::from_flat(table.matrix(names)?, names.len()).map_err(|e| CliError::Data(format!("{}: {e}", table.name)))
}

/// `linear:b0,b1,...` (intercept first), `zero`, or a learner name fitted
/// on the `train` file.
fn build_predictor(cfg: &RunConfig, cols: &Columns, names: &[String]) -> Result<Option<Arc<dyn Predictor>>> {
    let Some(spec) = &cfg.predictor else {
        return Ok(None);
    };
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(Some(Arc::new(LinearModel {
            intercept: 0.0,
            coef: vec![0.0; names.len()],
        })));
    }
    if let Some(coefs) = spec.strip_prefix("linear:") {
        let b = parse_list(coefs, "predictor")?;
        if b.len() != names.len() + 1 {
            return Err(CliError::Usage(format!(
                "linear predictor needs {} coefficients (intercept plus one per feature), got {}",
                names.len() + 1,
                b.len()
            )));
        }
        return Ok(Some(Arc::new(LinearModel {
            intercept: b[0],
            coef: b[1..].to_vec(),
        })));
    }
    let learner: LearnerKind = spec.parse().map_err(CliError::usage)?;
    let train = Table::read(Path::new(cfg.require(&cfg.train, "train")?))?;
    let sample = Sample::new(features_of(&train, names)?, train.column(&cols.y)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", train.name)))?;
    Ok(Some(learner.fit(&sample)?))
}

/// Scores from the score column, or `|y - mu(x)|` when only `y` is given.
fn scores_of(table: &Table, cols: &Columns, features: &Features, mu: Option<&Arc<dyn Predictor>>) -> Result<Vec<f64>> {
    let scores = if table.has(&cols.score) {
        table.column(&cols.score)?
    } else if table.has(&cols.y) {
        let mu = mu.ok_or_else(|| {
            CliError::Usage(format!(
                "{} has no '{}' column; scoring '{}' needs a predictor",
                table.name, cols.score, cols.y
            ))
        })?;
        let y = table.column(&cols.y)?;
        features.rows().zip(&y).map(|(x, y)| (y - mu.predict(x)).abs()).collect()
    } else {
        return Err(CliError::Data(format!(
            "{}: needs a '{}' column or a '{}' column",
            table.name, cols.score, cols.y
        )));
    };
    if let Some((i, v)) = scores.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(CliError::Data(format!("{}: line {}: negative score {v}", table.name, i + 2)));
    }
    Ok(scores)
}

fn parse_kind(s: &str) -> Result<LocalizerKind> {
    let kind: LocalizerKind = s.parse().map_err(CliError::usage)?;
    if kind == LocalizerKind::ShiftKnn {
        return Err(CliError::Usage(
            "shift_knn needs a weight function and is only available in simulate".into(),
        ));
    }
    Ok(kind)
}

fn resolve_axis(cfg: &RunConfig, features: &Features, scores: &[f64]) -> Result<Option<usize>> {
    match cfg.axis.as_deref().map(str::trim) {
        None | Some("") | Some("none") => Ok(None),
        Some("auto") => Ok(Some(select_projection_axis(
            features,
            scores,
            lcp_core::localizers::DEFAULT_MI_BINS,
        )?)),
        Some(a) => a
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("axis '{a}' is not an index, 'auto' or 'none'"))),
    }
}

fn run_tuning(
    cfg: &RunConfig,
    kind: LocalizerKind,
    features: &Features,
    scores: &[f64],
    alpha: f64,
) -> Result<lcp_core::TuningReport> {
    let mut base = LocalizerSpec::new(kind, 1.0);
    base.axis = resolve_axis(cfg, features, scores)?;
    let grid = match &cfg.h_grid {
        Some(g) => parse_list(g, "h_grid")?,
        None => default_tune_grid(kind, scores.len()),
    };
    let mut config = TuningConfig::new(alpha);
    config.omega = cfg.omega.unwrap_or(DEFAULT_OMEGA);
    config.bootstrap = cfg.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP);
    let mut rng = ChaCha8Rng::seed_from_u64(seed(cfg));
    tune_bandwidth(features, scores, &base, &grid, &config, &mut rng).map_err(|e| match e {
        LcpError::InvalidInput(_) | LcpError::InvalidBandwidth(_) | LcpError::InvalidLevel(_) => CliError::usage(e),
        other => CliError::from(other),
    })
}

pub fn tune(cfg: &RunConfig) -> Result<Output> {
    let alpha = single_alpha(cfg)?;
    let kind = parse_kind(cfg.kind.as_deref().unwrap_or("knn"))?;
    let table = Table::read(Path::new(cfg.require(&cfg.data, "data")?))?;
    let cols = Columns::new(cfg);
    let names = cols.features(cfg, &table)?;
    let features = features_of(&table, &names)?;
    let mu = build_predictor(cfg, &cols, &names)?;
    let scores = scores_of(&table, &cols, &features, mu.as_ref())?;
    let report = run_tuning(cfg, kind, &features, &scores, alpha)?;
    Ok(Output {
        csv: report.to_csv(),
        messages: vec![
            format!("omega = {}, bootstrap = {}", format_f64(report.omega), report.bootstrap),
            format!("selected h* = {}", format_f64(report.selected_h())),
        ],
    })
}

pub fn predict(cfg: &RunConfig) -> Result<Output> {
    let alpha = single_alpha(cfg)?;
    let localizer = match (&cfg.localizer, &cfg.kind) {
        (Some(l), _) => l.trim().to_string(),
        // `kind`, `h` and `axis` keys spell the same localizer in a config file
        (None, Some(kind)) => {
            let mut pairs = vec![("kind", kind.as_str())];
            if let Some(h) = &cfg.h {
                pairs.push(("h", h.as_str()));
            }
            LocalizerSpec::from_pairs(pairs).map_err(CliError::usage)?.to_string()
        }
        (None, None) => return Err(CliError::Usage("missing required setting 'localizer' (or 'kind')".into())),
    };
    let calib = Table::read(Path::new(cfg.require(&cfg.calib, "calib")?))?;
    let test = Table::read(Path::new(cfg.require(&cfg.test, "test")?))?;
    let cols = Columns::new(cfg);
    let names = cols.features(cfg, &calib)?;
    let features = features_of(&calib, &names)?;
    let mu = build_predictor(cfg, &cols, &names)?;
    let scores = scores_of(&calib, &cols, &features, mu.as_ref())?;

    let mut messages = Vec::new();
    let spec = if let Some(rest) = localizer.strip_prefix("auto") {
        let kind = parse_kind(rest.strip_prefix(':').unwrap_or("knn"))?;
        let report = run_tuning(cfg, kind, &features, &scores, alpha)?;
        messages.push(format!("selected h* = {}", format_f64(report.selected_h())));
        let mut spec = LocalizerSpec::new(kind, report.selected_h());
        spec.axis = resolve_axis(cfg, &features, &scores)?;
        spec
    } else {
        let mut spec: LocalizerSpec = localizer.parse().map_err(CliError::usage)?;
        parse_kind(spec.kind.name())?;
        if spec.axis.is_none() {
            spec.axis = resolve_axis(cfg, &features, &scores)?;
        }
        spec
    };
    let grid = alpha_grid(cfg.grid_size.unwrap_or(lcp_core::calibration::DEFAULT_GRID_SIZE), alpha);
    let mut model = CalibrationModel::new(features, &scores, spec, alpha)
        .map_err(|e| match e {
            LcpError::InvalidBandwidth(_) => CliError::usage(e),
            other => CliError::Data(format!("{}: {other}", calib.name)),
        })?
        .with_alpha_grid(grid)
        .map_err(CliError::usage)?;
    if let Some(wc) = &cols.weight {
        model = model.with_weights(calib.column(wc)?)?;
    }

    let x_test = features_of(&test, &names)?;
    let w_test = match &cols.weight {
        Some(wc) => test.column(wc)?,
        None => vec![1.0; x_test.len()],
    };
    let offsets = match (&mu, test.has(&cols.pred)) {
        (Some(_), _) => None,
        (None, true) => Some(test.column(&cols.pred)?),
        (None, false) => None,
    };

    let mut rows = Vec::with_capacity(x_test.len());
    let mut infeasible = 0;
    for (i, x) in x_test.rows().enumerate() {
        let center = match (&mu, &offsets) {
            (Some(mu), _) => mu.predict(x),
            (None, Some(p)) => p[i],
            (None, None) => 0.0,
        };
        let local = model
            .localize_with_weight(x, w_test[i])
            .map_err(|e| CliError::Data(format!("{}: line {}: {e}", test.name, i + 2)))?;
        let row = match local.search() {
            Ok(a) => {
                let q = local.threshold(a)?;
                let (lo, hi) = match q {
                    ScoreValue::Finite(q) => (center - q, center + q),
                    ScoreValue::Infinite => (f64::NEG_INFINITY, f64::INFINITY),
                };
                vec![
                    (i + 1).to_string(),
                    format_f64(a),
                    format_f64(q.as_f64()),
                    format_f64(lo),
                    format_f64(hi),
                    q.is_infinite().to_string(),
                ]
            }
            Err(LcpError::NoFeasibleLevel { .. }) => {
                infeasible += 1;
                let nan = format_f64(f64::NAN);
                vec![(i + 1).to_string(), nan.clone(), nan.clone(), nan.clone(), nan, "false".into()]
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    if infeasible == rows.len() {
        return Err(CliError::Infeasible("no grid level is feasible for any test row".into()));
    }
    if infeasible > 0 {
        messages.push(format!("{infeasible} test rows had no feasible level"));
    }
    Ok(Output {
        csv: to_csv(&["row", "alpha_tilde", "q", "lo", "hi", "is_infinite"], &rows)?,
        messages,
    })
}
