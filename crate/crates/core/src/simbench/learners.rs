//! Regression learners and cross-validated scores.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Sample;
use crate::error::{LcpError, Result};
use crate::intervals::Predictor;

/// Fits a point predictor to a sample. Implementations must not depend on
/// the order of the samples beyond floating-point rounding.
pub trait Learner: Send + Sync {
    fn fit(&self, sample: &Sample) -> Result<Arc<dyn Predictor>>;
}

/// `intercept + x . coef`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl Predictor for LinearModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerKind {
    /// Predicts the sample mean.
    ConstantMean,
    /// Ordinary least squares with intercept (minimum-norm when
    /// underdetermined).
    LeastSquares,
    /// Ridge with unpenalized intercept.
    Ridge { lambda: f64 },
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::ConstantMean => f.write_str("mean"),
            LearnerKind::LeastSquares => f.write_str("ols"),
            LearnerKind::Ridge { lambda } => write!(f, "ridge:{lambda}"),
        }
    }
}

impl FromStr for LearnerKind {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.split_once(':') {
            None if s == "mean" => Ok(LearnerKind::ConstantMean),
            None if s == "ols" || s == "least_squares" => Ok(LearnerKind::LeastSquares),
            None if s == "ridge" => Ok(LearnerKind::Ridge { lambda: 1.0 }),
            Some(("ridge", l)) => {
                let lambda: f64 = l
                    .parse()
                    .map_err(|_| LcpError::InvalidInput(format!("bad ridge penalty '{l}'")))?;
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(LcpError::InvalidInput(format!("bad ridge penalty '{l}'")));
                }
                Ok(LearnerKind::Ridge { lambda })
            }
            _ => Err(LcpError::InvalidInput(format!("unknown learner '{s}'"))),
        }
    }
}

fn centered(sample: &Sample) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let m = sample.len();
    let p = sample.features.dim();
    let mut means = vec![0.0; p];
    for row in sample.features.rows() {
        for (mu, v) in means.iter_mut().zip(row) {
            *mu += v;
        }
    }
    for mu in &mut means {
        *mu /= m as f64;
    }
    let y_mean = sample.y.iter().sum::<f64>() / m as f64;
    let x = DMatrix::from_fn(m, p, |i, j| sample.features.row(i)[j] - means[j]);
    let y = DVector::from_iterator(m, sample.y.iter().map(|v| v - y_mean));
    (x, y, means, y_mean)
}

fn assemble(coef: DVector<f64>, means: &[f64], y_mean: f64) -> Result<LinearModel> {
    let coef: Vec<f64> = coef.iter().copied().collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(LcpError::Learner("non-finite coefficients".into()));
    }
    let intercept = y_mean - means.iter().zip(&coef).map(|(m, c)| m * c).sum::<f64>();
    Ok(LinearModel { intercept, coef })
}

impl LearnerKind {
    pub fn fit_linear(&self, sample: &Sample) -> Result<LinearModel> {
        if sample.is_empty() {
            return Err(LcpError::Learner("empty training sample".into()));
        }
        match *self {
            LearnerKind::ConstantMean => Ok(LinearModel {
                intercept: sample.y.iter().sum::<f64>() / sample.len() as f64,
                coef: vec![0.0; sample.features.dim()],
            }),
            LearnerKind::LeastSquares => {
                let (x, y, means, y_mean) = centered(sample);
                let coef = x
                    .svd(true, true)
                    .solve(&y, 1e-10)
                    .map_err(|e| LcpError::Learner(e.to_string()))?;
                assemble(coef, &means, y_mean)
            }
            LearnerKind::Ridge { lambda } => {
                let (x, y, means, y_mean) = centered(sample);
                let p = x.ncols();
                let gram = x.transpose() * &x + DMatrix::identity(p, p) * lambda;
                let rhs = x.transpose() * y;
                let coef = match gram.clone().cholesky() {
                    Some(c) => c.solve(&rhs),
                    None => gram
                        .svd(true, true)
                        .solve(&rhs, 1e-10)
                        .map_err(|e| LcpError::Learner(e.to_string()))?,
                };
                assemble(coef, &means, y_mean)
            }
        }
    }
}

impl Learner for LearnerKind {
    fn fit(&self, sample: &Sample) -> Result<Arc<dyn Predictor>> {
        Ok(Arc::new(self.fit_linear(sample)?))
    }
}

/// `|y_i - mu_{-k(i)}(x_i)|` where `mu_{-k}` is fit without fold `k`.
/// Sample `i` belongs to fold `i mod folds`.
pub fn cv_scores(sample: &Sample, folds: usize, learner: &dyn Learner) -> Result<Vec<f64>> {
    let m = sample.len();
    if folds < 2 || folds > m {
        return Err(LcpError::InvalidInput(format!(
            "need 2 <= folds <= {m}, got {folds}"
        )));
    }
    let mut scores = vec![0.0; m];
    for k in 0..folds {
        let train: Vec<usize> = (0..m).filter(|i| i % folds != k).collect();
        let mu = learner
            .fit(&sample.select(&train))
            .map_err(|e| LcpError::Learner(format!("fold {k}: {e}")))?;
        for i in (k..m).step_by(folds) {
            scores[i] = (sample.y[i] - mu.predict(sample.features.row(i))).abs();
        }
    }
    Ok(scores)
}
