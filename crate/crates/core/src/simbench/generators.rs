//! Synthetic data for the coverage experiments.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Features, Sample};
use crate::error::{LcpError, Result};
use crate::intervals::ScoreFunction;
use crate::localizers::WeightFn;

/// Noise law for the one-dimensional heteroscedasticity example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Example1Noise {
    /// `N(0, 1)`.
    A,
    /// `N(0, 1) / (2|x| + 1)`.
    B,
    /// `N(0, 1) * |x| / (|x| + 1)`.
    C,
}

impl Example1Noise {
    /// Conditional standard deviation of the noise at `x`.
    pub fn sd(&self, x: f64) -> f64 {
        match self {
            Example1Noise::A => 1.0,
            Example1Noise::B => 1.0 / (2.0 * x.abs() + 1.0),
            Example1Noise::C => x.abs() / (x.abs() + 1.0),
        }
    }

    fn letter(&self) -> char {
        match self {
            Example1Noise::A => 'a',
            Example1Noise::B => 'b',
            Example1Noise::C => 'c',
        }
    }
}

/// Error law for the high-dimensional linear example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HighDimCase {
    /// `N(0, 1)`.
    A,
    /// `0.5 N(0, 1)` when `|x_p| <= 1`, `2 N(0, 1)` otherwise.
    B,
}

impl HighDimCase {
    pub fn sd(&self, x: &[f64]) -> f64 {
        match self {
            HighDimCase::A => 1.0,
            HighDimCase::B => {
                if x[x.len() - 1].abs() <= 1.0 {
                    0.5
                } else {
                    2.0
                }
            }
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `X ~ N(0, 1)`, `Y = X + eps` with the chosen noise law.
pub fn gen_example1<R: Rng + ?Sized>(n: usize, noise: Example1Noise, rng: &mut R) -> Sample {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (xi, yi) = example1_point(noise, rng);
        x.push(xi);
        y.push(yi);
    }
    Sample::new(Features::from_column(&x).expect("finite draws"), y).expect("equal lengths")
}

fn example1_point<R: Rng + ?Sized>(noise: Example1Noise, rng: &mut R) -> (f64, f64) {
    let x = normal(rng);
    let eps = noise.sd(x) * normal(rng);
    (x, x + eps)
}

/// Probability of each of `x = -1` and `x = 1` in the three-point example.
pub fn counterexample2_side_probability(alpha: f64) -> f64 {
    (1.0 - alpha) / (2.0 - alpha)
}

/// `X` on `{-1, 0, 1}`, `Y = X + U(-2|X|, 2|X|)`.
pub fn gen_counterexample2<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Sample {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (xi, yi) = counterexample2_point(alpha, rng);
        x.push(xi);
        y.push(yi);
    }
    Sample::new(Features::from_column(&x).expect("finite draws"), y).expect("equal lengths")
}

fn counterexample2_point<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> (f64, f64) {
    let p = counterexample2_side_probability(alpha);
    let u: f64 = rng.random();
    let x = if u < p {
        -1.0
    } else if u < 2.0 * p {
        1.0
    } else {
        0.0
    };
    let half = 2.0 * f64::abs(x);
    let eps = if half > 0.0 {
        rng.random_range(-half..half)
    } else {
        0.0
    };
    (x, x + eps)
}

/// Density ratio of `N(3, 1)` to `N(0, 1)`: `exp(3x - 4.5)`.
pub fn shift_weight(x: f64) -> f64 {
    (3.0 * x - 4.5).exp()
}

/// Training `X ~ N(0, 1)`, test `X ~ N(3, 1)`, `Y = X + N(0, 1)` for both.
#[derive(Debug, Clone, Copy, Default)]
pub struct CovariateShift;

impl CovariateShift {
    pub fn train<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        gen_example1(n, Example1Noise::A, rng)
    }

    pub fn test_point<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let x = 3.0 + normal(rng);
        (x, x + normal(rng))
    }

    pub fn weight_fn(&self) -> WeightFn {
        Arc::new(|x: &[f64]| shift_weight(x[0]))
    }
}

/// The training sample and weight function of the shift example.
pub fn gen_covariate_shift<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Sample, WeightFn) {
    let g = CovariateShift;
    (g.train(n, rng), g.weight_fn())
}

/// `X_ij ~ U[-3, 3]`, `Y = x1 + x2 + x3 + eps`.
pub fn gen_highdim<R: Rng + ?Sized>(n: usize, p: usize, case: HighDimCase, rng: &mut R) -> Sample {
    let mut features = Features::with_capacity(p, n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, yi) = highdim_point(p, case, rng);
        features.push(&x).expect("dimension p");
        y.push(yi);
    }
    Sample::new(features, y).expect("equal lengths")
}

/// `x^T beta` with `beta = (1, 1, 1, 0, ...)`.
pub fn highdim_mean(x: &[f64]) -> f64 {
    x.iter().take(3).sum()
}

fn highdim_point<R: Rng + ?Sized>(p: usize, case: HighDimCase, rng: &mut R) -> (Vec<f64>, f64) {
    let x: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = highdim_mean(&x) + case.sd(&x) * normal(rng);
    (x, y)
}

/// A data source for the coverage harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    Example1(Example1Noise),
    /// Mixture parameter of the three-point design.
    Counterexample2 { alpha: f64 },
    CovariateShift,
    HighDim { p: usize, case: HighDimCase },
}

impl Generator {
    /// Calibration (training-distribution) sample.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        match *self {
            Generator::Example1(noise) => gen_example1(n, noise, rng),
            Generator::Counterexample2 { alpha } => gen_counterexample2(n, alpha, rng),
            Generator::CovariateShift => CovariateShift.train(n, rng),
            Generator::HighDim { p, case } => gen_highdim(n, p, case, rng),
        }
    }

    /// One test observation; differs from the training law only under shift.
    pub fn test_point<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        match *self {
            Generator::Example1(noise) => {
                let (x, y) = example1_point(noise, rng);
                (vec![x], y)
            }
            Generator::Counterexample2 { alpha } => {
                let (x, y) = counterexample2_point(alpha, rng);
                (vec![x], y)
            }
            Generator::CovariateShift => {
                let (x, y) = CovariateShift.test_point(rng);
                (vec![x], y)
            }
            Generator::HighDim { p, case } => highdim_point(p, case, rng),
        }
    }

    pub fn weight_fn(&self) -> Option<WeightFn> {
        match self {
            Generator::CovariateShift => Some(CovariateShift.weight_fn()),
            _ => None,
        }
    }

    /// The fixed score `|y - x|` where the design has one; otherwise the
    /// score must be learned.
    pub fn fixed_score(&self) -> Option<ScoreFunction> {
        match self {
            Generator::HighDim { .. } => None,
            _ => Some(ScoreFunction::abs_residual(|x: &[f64]| x[0])),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::HighDim { p, .. } => *p,
            _ => 1,
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Example1(noise) => write!(f, "example1{}", noise.letter()),
            Generator::Counterexample2 { alpha } => write!(f, "counterexample2:{alpha}"),
            Generator::CovariateShift => f.write_str("shift"),
            Generator::HighDim { p, case } => {
                let c = match case {
                    HighDimCase::A => 'a',
                    HighDimCase::B => 'b',
                };
                write!(f, "highdim{c}:{p}")
            }
        }
    }
}

/// Parses `example1a|b|c`, `counterexample2[:alpha]`, `shift`,
/// `highdima|b[:p]`. The three-point design defaults to `alpha = 0.8` and the
/// linear design to `p = 10`.
impl FromStr for Generator {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let bad = || LcpError::InvalidInput(format!("unknown generator '{s}'"));
        let g = match name {
            "example1a" => Generator::Example1(Example1Noise::A),
            "example1b" => Generator::Example1(Example1Noise::B),
            "example1c" => Generator::Example1(Example1Noise::C),
            "counterexample2" => {
                let alpha = match arg {
                    Some(a) => a.parse().map_err(|_| bad())?,
                    None => 0.8,
                };
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(LcpError::InvalidLevel(alpha));
                }
                return Ok(Generator::Counterexample2 { alpha });
            }
            "shift" | "covariate_shift" => Generator::CovariateShift,
            "highdima" | "highdimb" => {
                let p = match arg {
                    Some(a) => a.parse().map_err(|_| bad())?,
                    None => 10,
                };
                if p == 0 {
                    return Err(bad());
                }
                let case = if name.ends_with('a') {
                    HighDimCase::A
                } else {
                    HighDimCase::B
                };
                return Ok(Generator::HighDim { p, case });
            }
            _ => return Err(bad()),
        };
        if arg.is_some() {
            return Err(bad());
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example1_noise_scales() {
        assert_eq!(Example1Noise::A.sd(2.3), 1.0);
        assert_eq!(Example1Noise::B.sd(0.0), 1.0);
        assert_eq!(Example1Noise::C.sd(0.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = gen_example1(2000, Example1Noise::A, &mut rng);
        let resid: Vec<f64> = s.features.column(0).iter().zip(&s.y).map(|(x, y)| y - x).collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        assert!((var - 1.0).abs() < 0.1);
    }

    #[test]
    fn counterexample2_design() {
        assert!((counterexample2_side_probability(0.8) - 1.0 / 6.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = gen_counterexample2(100_000, 0.8, &mut rng);
        let x = s.features.column(0);
        let mut counts = [0usize; 3];
        for (xi, yi) in x.iter().zip(&s.y) {
            counts[(*xi + 1.0) as usize] += 1;
            if *xi == 0.0 {
                assert_eq!(*yi, 0.0);
            } else {
                assert!((yi - xi).abs() <= 2.0);
            }
        }
        let n = 100_000.0f64;
        for (k, p) in [(0, 1.0 / 6.0), (1, 2.0 / 3.0), (2, 1.0 / 6.0)] {
            let sd = (n * p * (1.0 - p)).sqrt();
            assert!((counts[k] as f64 - n * p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn shift_weights() {
        assert_eq!(shift_weight(1.5), 1.0);
        assert_eq!(shift_weight(0.0), (-4.5f64).exp());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (train, w) = gen_covariate_shift(100_000, &mut rng);
        let mean = train.features.rows().map(|x| w(x)).sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn highdim_design() {
        assert_eq!(highdim_mean(&[3.0, 3.0, 3.0, 0.0, 0.0]), 9.0);
        assert_eq!(HighDimCase::B.sd(&[2.0, 2.0, 0.0]), 0.5);
        assert_eq!(HighDimCase::B.sd(&[0.0, 0.0, 1.5]), 2.0);
        assert_eq!(HighDimCase::A.sd(&[0.0, 0.0, 1.5]), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = gen_highdim(50, 6, HighDimCase::A, &mut rng);
        assert_eq!(s.features.dim(), 6);
        assert!(s.features.rows().all(|r| r.iter().all(|v| (-3.0..3.0).contains(v))));
    }

    #[test]
    fn generator_ids_round_trip() {
        for id in ["example1a", "example1b", "example1c", "counterexample2:0.8", "shift", "highdimb:10"] {
            let g: Generator = id.parse().unwrap();
            assert_eq!(g.to_string(), id);
        }
        assert!("example1d".parse::<Generator>().is_err());
        assert!("counterexample2:1.5".parse::<Generator>().is_err());
        assert!("shift:3".parse::<Generator>().is_err());
    }
}
