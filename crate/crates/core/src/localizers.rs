//! Localizer kernels `H(x1, x2, X)` and the row-normalized weights
//! `p_ij = H_ij / sum_k H_ik` built from them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::data::Features;
use crate::error::{LcpError, Result};

/// Importance-weight function `w(x)` used by the shift localizer.
pub type WeightFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalizerKind {
    /// `H = 1`.
    Constant,
    /// `1{|x1 - x2| <= h}`.
    DistanceBox,
    /// `1{|x1 - x2| <= r}` with `r` the lower `h/n` quantile of the
    /// distances from `x1` to the `n + 1` points.
    Knn,
    /// `exp(-|x1 - x2|^2 / h^2)`.
    Gaussian,
    /// `exp(-|x1 - x2| / h)`.
    Exponential,
    /// `w(x2) 1{|w(x2) - w(x1)| <= r}` with `r` the lower `h/(n+1)`
    /// quantile of the weight gaps. Unlike the other kinds it is not bounded
    /// by 1 and `H(x, x) = w(x)`; only the row-normalized weights matter.
    ShiftKnn,
}

impl LocalizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LocalizerKind::Constant => "constant",
            LocalizerKind::DistanceBox => "box",
            LocalizerKind::Knn => "knn",
            LocalizerKind::Gaussian => "gaussian",
            LocalizerKind::Exponential => "exponential",
            LocalizerKind::ShiftKnn => "shift_knn",
        }
    }

    /// Whether the kernel looks at the whole feature set, not just the pair.
    pub fn is_data_dependent(&self) -> bool {
        matches!(self, LocalizerKind::Knn | LocalizerKind::ShiftKnn)
    }

    fn integer_bandwidth(&self) -> bool {
        self.is_data_dependent()
    }
}

impl fmt::Display for LocalizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LocalizerKind {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" | "const" => Ok(LocalizerKind::Constant),
            "box" | "distance_box" | "distance" => Ok(LocalizerKind::DistanceBox),
            "knn" => Ok(LocalizerKind::Knn),
            "gaussian" | "gauss" => Ok(LocalizerKind::Gaussian),
            "exponential" | "exp" => Ok(LocalizerKind::Exponential),
            "shift_knn" | "shift-knn" => Ok(LocalizerKind::ShiftKnn),
            other => Err(LcpError::InvalidInput(format!(
                "unknown localizer kind '{other}'"
            ))),
        }
    }
}

/// Kernel family, bandwidth and optional projection axis.
#[derive(Clone)]
pub struct LocalizerSpec {
    pub kind: LocalizerKind,
    pub bandwidth: f64,
    /// Restrict distances to a single coordinate.
    pub axis: Option<usize>,
    /// Required by [`LocalizerKind::ShiftKnn`], ignored otherwise.
    pub weight_fn: Option<WeightFn>,
}

impl fmt::Debug for LocalizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalizerSpec")
            .field("kind", &self.kind)
            .field("bandwidth", &self.bandwidth)
            .field("axis", &self.axis)
            .field("weight_fn", &self.weight_fn.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl LocalizerSpec {
    pub fn new(kind: LocalizerKind, bandwidth: f64) -> Self {
        Self {
            kind,
            bandwidth,
            axis: None,
            weight_fn: None,
        }
    }

    pub fn constant() -> Self {
        Self::new(LocalizerKind::Constant, 1.0)
    }

    pub fn distance_box(h: f64) -> Self {
        Self::new(LocalizerKind::DistanceBox, h)
    }

    pub fn knn(h: usize) -> Self {
        Self::new(LocalizerKind::Knn, h as f64)
    }

    pub fn gaussian(h: f64) -> Self {
        Self::new(LocalizerKind::Gaussian, h)
    }

    pub fn exponential(sigma: f64) -> Self {
        Self::new(LocalizerKind::Exponential, sigma)
    }

    pub fn shift_knn(h: usize, w: WeightFn) -> Self {
        Self {
            weight_fn: Some(w),
            ..Self::new(LocalizerKind::ShiftKnn, h as f64)
        }
    }

    pub fn with_axis(mut self, axis: usize) -> Self {
        self.axis = Some(axis);
        self
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Self {
        Self {
            bandwidth,
            ..self.clone()
        }
    }

    pub fn is_data_dependent(&self) -> bool {
        self.kind.is_data_dependent()
    }

    /// Checks the bandwidth and, for neighbour kernels, that the requested
    /// neighbour count fits a set of `set_size` points.
    pub fn validate(&self, set_size: usize) -> Result<()> {
        let h = self.bandwidth;
        if self.kind == LocalizerKind::Constant {
            return Ok(());
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(LcpError::InvalidBandwidth(format!(
                "{} bandwidth must be positive, got {h}",
                self.kind
            )));
        }
        if self.kind.integer_bandwidth() {
            if h.fract() != 0.0 {
                return Err(LcpError::InvalidBandwidth(format!(
                    "{} bandwidth must be an integer, got {h}",
                    self.kind
                )));
            }
            let limit = match self.kind {
                LocalizerKind::Knn => set_size.saturating_sub(1),
                _ => set_size,
            };
            if h as usize > limit {
                return Err(LcpError::InvalidBandwidth(format!(
                    "{} bandwidth {h} exceeds {limit} for a set of {set_size} points",
                    self.kind
                )));
            }
        }
        if self.kind == LocalizerKind::ShiftKnn && self.weight_fn.is_none() {
            return Err(LcpError::InvalidBandwidth(
                "shift_knn requires an importance-weight function".into(),
            ));
        }
        Ok(())
    }

    /// Reads `kind`, `h` and `axis` keys, as found in a flat config file.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut kind = None;
        let mut h = None;
        let mut axis = None;
        for (key, value) in pairs {
            match key.trim() {
                "kind" => kind = Some(value.parse::<LocalizerKind>()?),
                "h" | "bandwidth" => h = Some(parse_number(value)?),
                "axis" => {
                    axis = Some(value.trim().parse::<usize>().map_err(|_| {
                        LcpError::InvalidInput(format!("axis '{value}' is not an index"))
                    })?)
                }
                _ => {}
            }
        }
        let kind = kind.ok_or_else(|| LcpError::InvalidInput("localizer kind missing".into()))?;
        let h = match (kind, h) {
            (LocalizerKind::Constant, h) => h.unwrap_or(1.0),
            (_, Some(h)) => h,
            (_, None) => {
                return Err(LcpError::InvalidInput(format!(
                    "localizer {kind} needs a bandwidth"
                )))
            }
        };
        Ok(Self {
            axis,
            ..Self::new(kind, h)
        })
    }
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| LcpError::InvalidInput(format!("'{s}' is not a number")))
}

/// Parses `kind[:h][@axis]`, e.g. `box:1`, `knn:40`, `gaussian:0.3@2`.
impl FromStr for LocalizerSpec {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let (body, axis) = match s.split_once('@') {
            Some((b, a)) => (b, Some(a)),
            None => (s, None),
        };
        let (kind, h) = match body.split_once(':') {
            Some((k, h)) => (k, Some(h)),
            None => (body, None),
        };
        let mut pairs = vec![("kind", kind)];
        if let Some(h) = h {
            pairs.push(("h", h));
        }
        if let Some(a) = axis {
            pairs.push(("axis", a));
        }
        Self::from_pairs(pairs)
    }
}

impl fmt::Display for LocalizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LocalizerKind::Constant => f.write_str("constant")?,
            kind => write!(f, "{kind}:{}", self.bandwidth)?,
        }
        if let Some(axis) = self.axis {
            write!(f, "@{axis}")?;
        }
        Ok(())
    }
}

fn distance(axis: Option<usize>, a: &[f64], b: &[f64]) -> f64 {
    match axis {
        Some(j) => (a[j] - b[j]).abs(),
        None => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

/// Smallest `k` with `k / set_size >= level_num / level_den`.
fn quantile_rank(level_num: usize, level_den: usize, set_size: usize) -> usize {
    (level_num * set_size).div_ceil(level_den).max(1)
}

/// `k`-th smallest value (1-based) of `values`; reorders the slice.
fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Row-by-row kernel evaluation over a fixed feature set.
///
/// Per-point preprocessing (projection, importance weights) is done once;
/// each row then costs `O(N)`.
pub struct KernelRows<'a> {
    spec: &'a LocalizerSpec,
    points: &'a Features,
    // w(X_j) for the shift kernel
    shift_values: Vec<f64>,
    knn_rank: usize,
}

impl<'a> KernelRows<'a> {
    pub fn new(spec: &'a LocalizerSpec, points: &'a Features) -> Result<Self> {
        let size = points.len();
        if size == 0 {
            return Err(LcpError::InvalidInput("empty feature set".into()));
        }
        spec.validate(size)?;
        if let Some(axis) = spec.axis {
            if axis >= points.dim() {
                return Err(LcpError::DimensionMismatch {
                    expected: points.dim(),
                    found: axis + 1,
                });
            }
        }
        let mut shift_values = Vec::new();
        let mut knn_rank = 0;
        match spec.kind {
            LocalizerKind::Knn => {
                // level h/n with n = N - 1 over N equally weighted distances
                knn_rank = quantile_rank(spec.bandwidth as usize, size - 1, size);
            }
            LocalizerKind::ShiftKnn => {
                let w = spec.weight_fn.as_ref().expect("validated");
                shift_values = points.rows().map(|x| w(x)).collect();
                for (point, &value) in shift_values.iter().enumerate() {
                    if !(value.is_finite() && value > 0.0) {
                        return Err(LcpError::NonFiniteKernel {
                            center: point,
                            point,
                            value,
                        });
                    }
                }
                // level h/N over N points
                knn_rank = spec.bandwidth as usize;
            }
            _ => {}
        }
        Ok(Self {
            spec,
            points,
            shift_values,
            knn_rank,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes `H(X_center, X_j, X)` for every `j` into `out`.
    pub fn fill(&self, center: usize, out: &mut Vec<f64>) -> Result<()> {
        let n = self.points.len();
        if center >= n {
            return Err(LcpError::IndexOutOfRange {
                index: center,
                len: n,
            });
        }
        out.clear();
        let h = self.spec.bandwidth;
        let axis = self.spec.axis;
        let c = self.points.row(center);
        let dist = |j: usize| distance(axis, c, self.points.row(j));
        match self.spec.kind {
            LocalizerKind::Constant => out.resize(n, 1.0),
            LocalizerKind::DistanceBox => {
                out.extend((0..n).map(|j| if dist(j) <= h { 1.0 } else { 0.0 }))
            }
            LocalizerKind::Gaussian => {
                let h2 = h * h;
                out.extend((0..n).map(|j| {
                    let d = dist(j);
                    (-(d * d) / h2).exp()
                }))
            }
            LocalizerKind::Exponential => out.extend((0..n).map(|j| (-dist(j) / h).exp())),
            LocalizerKind::Knn => {
                out.extend((0..n).map(dist));
                let mut scratch = out.clone();
                let radius = kth_smallest(&mut scratch, self.knn_rank);
                for v in out.iter_mut() {
                    *v = if *v <= radius { 1.0 } else { 0.0 };
                }
            }
            LocalizerKind::ShiftKnn => {
                let wc = self.shift_values[center];
                let mut gaps: Vec<f64> = self.shift_values.iter().map(|w| (w - wc).abs()).collect();
                let radius = kth_smallest(&mut gaps, self.knn_rank);
                out.extend(self.shift_values.iter().map(|&w| {
                    if (w - wc).abs() <= radius {
                        w
                    } else {
                        0.0
                    }
                }));
            }
        }
        // the shift kernel keeps its centre weight w(x); rows are normalized anyway
        if self.spec.kind != LocalizerKind::ShiftKnn {
            out[center] = 1.0;
        }
        if let Some((point, &value)) = out
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(LcpError::NonFiniteKernel {
                center,
                point,
                value,
            });
        }
        Ok(())
    }

    pub fn row(&self, center: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.points.len());
        self.fill(center, &mut out)?;
        Ok(out)
    }
}

/// `H(x1, x2, X)` for a single pair.
pub fn eval_localizer(spec: &LocalizerSpec, x1: &[f64], x2: &[f64], set: &Features) -> Result<f64> {
    for x in [x1, x2] {
        if x.len() != set.dim() {
            return Err(LcpError::DimensionMismatch {
                expected: set.dim(),
                found: x.len(),
            });
        }
    }
    spec.validate(set.len().max(1))?;
    if let Some(axis) = spec.axis {
        if axis >= set.dim() {
            return Err(LcpError::DimensionMismatch {
                expected: set.dim(),
                found: axis + 1,
            });
        }
    }
    if x1 == x2 && spec.kind != LocalizerKind::ShiftKnn {
        return Ok(1.0);
    }
    let h = spec.bandwidth;
    let d = distance(spec.axis, x1, x2);
    let value = match spec.kind {
        LocalizerKind::Constant => 1.0,
        LocalizerKind::DistanceBox => (d <= h) as u8 as f64,
        LocalizerKind::Gaussian => (-(d * d) / (h * h)).exp(),
        LocalizerKind::Exponential => (-d / h).exp(),
        LocalizerKind::Knn => {
            let size = set.len();
            let mut dists: Vec<f64> = set.rows().map(|x| distance(spec.axis, x1, x)).collect();
            let rank = quantile_rank(h as usize, size - 1, size);
            let radius = kth_smallest(&mut dists, rank);
            (d <= radius) as u8 as f64
        }
        LocalizerKind::ShiftKnn => {
            let w = spec.weight_fn.as_ref().expect("validated");
            let (w1, w2) = (w(x1), w(x2));
            let mut gaps: Vec<f64> = set.rows().map(|x| (w(x) - w1).abs()).collect();
            let radius = kth_smallest(&mut gaps, h as usize);
            if (w2 - w1).abs() <= radius {
                w2
            } else {
                0.0
            }
        }
    };
    if !(value.is_finite() && value >= 0.0) {
        return Err(LcpError::NonFiniteKernel {
            center: 0,
            point: 1,
            value,
        });
    }
    Ok(value)
}

/// Normalized localizer weights for one centre.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeightRow {
    pub center_index: usize,
    /// Raw kernel values `H(X_center, X_j, X)`.
    pub kernel: Vec<f64>,
    /// `sum_j kernel[j]`, accumulated in index order.
    pub total: f64,
}

impl LocalWeightRow {
    pub fn from_kernel(center_index: usize, kernel: Vec<f64>) -> Self {
        let total = kernel.iter().sum();
        Self {
            center_index,
            kernel,
            total,
        }
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.kernel[j] / self.total
    }

    pub fn weights(&self) -> Vec<f64> {
        self.kernel.iter().map(|k| k / self.total).collect()
    }
}

/// `p_{center, j}` over the full set `X` (calibration plus test point).
pub fn build_local_weights(
    spec: &LocalizerSpec,
    center: usize,
    set: &Features,
) -> Result<LocalWeightRow> {
    let rows = KernelRows::new(spec, set)?;
    Ok(LocalWeightRow::from_kernel(center, rows.row(center)?))
}

/// Dense `N x N` kernel matrix; row `i` is centred at `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    size: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn build(spec: &LocalizerSpec, set: &Features) -> Result<Self> {
        let rows = KernelRows::new(spec, set)?;
        let size = set.len();
        let mut values = Vec::with_capacity(size * size);
        let mut buf = Vec::with_capacity(size);
        for i in 0..size {
            rows.fill(i, &mut buf)?;
            values.extend_from_slice(&buf);
        }
        Ok(Self { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

/// Default number of equal-frequency bins for axis selection.
pub const DEFAULT_MI_BINS: usize = 10;

/// Equal-frequency bin of each value: `floor(bins * #{u < v} / m)`.
fn rank_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let m = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|v| {
            let below = sorted.partition_point(|u| u < v);
            (bins * below / m).min(bins - 1)
        })
        .collect()
}

/// Plug-in mutual information (nats) between two binned sequences.
fn plug_in_mi(a: &[usize], b: &[usize], bins: usize) -> f64 {
    let m = a.len() as f64;
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * bins + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..bins {
        for y in 0..bins {
            let c = joint[x * bins + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / m;
            mi += pxy * (pxy * m * m / (pa[x] as f64 * pb[y] as f64)).ln();
        }
    }
    mi.max(0.0)
}

/// Mutual information between `scores` and every column of `features`.
pub fn mutual_information_by_axis(features: &Features, scores: &[f64], bins: usize) -> Result<Vec<f64>> {
    let m = features.len();
    if scores.len() != m {
        return Err(LcpError::InvalidInput(format!(
            "{m} feature rows but {} scores",
            scores.len()
        )));
    }
    if bins < 2 || m < 2 * bins {
        return Err(LcpError::InvalidInput(format!(
            "need at least {} samples for {bins} bins, got {m}",
            2 * bins.max(2)
        )));
    }
    let score_bins = rank_bins(scores, bins);
    Ok((0..features.dim())
        .map(|j| plug_in_mi(&rank_bins(&features.column(j), bins), &score_bins, bins))
        .collect())
}

/// Axis with the largest mutual information with the scores; ties go to the
/// smallest index.
pub fn select_projection_axis(features: &Features, scores: &[f64], bins: usize) -> Result<usize> {
    let mi = mutual_information_by_axis(features, scores, bins)?;
    let mut best = 0;
    for (j, &v) in mi.iter().enumerate() {
        if v > mi[best] {
            best = j;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Features {
        Features::from_column(v).unwrap()
    }

    #[test]
    fn box_and_exponential_values() {
        let x = col(&[0.0, 0.5]);
        let b = LocalizerSpec::distance_box(1.0);
        assert_eq!(eval_localizer(&b, &[0.0], &[0.5], &x).unwrap(), 1.0);
        assert_eq!(eval_localizer(&b, &[0.0], &[1.5], &x).unwrap(), 0.0);
        let e = LocalizerSpec::exponential(1.0);
        let v = eval_localizer(&e, &[0.0], &[1.0], &x).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_one_for_every_kind() {
        let x = col(&[0.0, 0.3, 2.0, 7.0]);
        let specs = [
            LocalizerSpec::constant(),
            LocalizerSpec::distance_box(0.01),
            LocalizerSpec::knn(1),
            LocalizerSpec::gaussian(0.01),
            LocalizerSpec::exponential(0.01),
        ];
        for spec in &specs {
            let rows = KernelRows::new(spec, &x).unwrap();
            for i in 0..x.len() {
                assert_eq!(rows.row(i).unwrap()[i], 1.0, "{spec}");
                assert_eq!(eval_localizer(spec, x.row(i), x.row(i), &x).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn knn_radius_uses_n_plus_one_points() {
        // four points, n = 3: level 2/3 over distances {0,1,2,3} needs three
        // of the four atoms, so the radius is 2
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let spec = LocalizerSpec::knn(2);
        let rows = KernelRows::new(&spec, &x).unwrap();
        assert_eq!(rows.row(0).unwrap(), vec![1.0, 1.0, 1.0, 0.0]);
        // brute force: smallest sorted distance whose rank/4 reaches 2/3
        let mut d = vec![0.0, 1.0, 2.0, 3.0];
        d.sort_by(f64::total_cmp);
        let k = (1..=4).find(|&k| k as f64 / 4.0 >= 2.0 / 3.0).unwrap();
        assert_eq!(d[k - 1], 2.0);
        assert_eq!(eval_localizer(&spec, &[0.0], &[2.0], &x).unwrap(), 1.0);
        assert_eq!(eval_localizer(&spec, &[0.0], &[3.0], &x).unwrap(), 0.0);
        // h = n keeps every point
        let all = LocalizerSpec::knn(3);
        assert_eq!(KernelRows::new(&all, &x).unwrap().row(0).unwrap(), vec![1.0; 4]);
        assert!(KernelRows::new(&LocalizerSpec::knn(4), &x).is_err());
    }

    #[test]
    fn weight_rows() {
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let row = build_local_weights(&LocalizerSpec::constant(), 2, &x).unwrap();
        assert_eq!(row.weights(), vec![0.25; 4]);

        let row = build_local_weights(&LocalizerSpec::distance_box(0.1), 1, &x).unwrap();
        assert_eq!(row.weights(), vec![0.0, 1.0, 0.0, 0.0]);

        let x = col(&[0.0, 1.0]);
        let row = build_local_weights(&LocalizerSpec::exponential(1.0), 0, &x).unwrap();
        let e = (-1.0f64).exp();
        let expected = [1.0 / (1.0 + e), e / (1.0 + e)];
        for (a, b) in row.weights().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_kernels_are_symmetric() {
        let x = Features::from_rows(&[vec![0.0, 1.0], vec![0.4, -2.0], vec![1.5, 0.3]]).unwrap();
        for spec in [
            LocalizerSpec::distance_box(2.5),
            LocalizerSpec::gaussian(0.7),
            LocalizerSpec::exponential(1.3),
        ] {
            let m = KernelMatrix::build(&spec, &x).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }
    }

    #[test]
    fn axis_projection_ignores_other_coordinates() {
        let x = Features::from_rows(&[vec![0.0, 0.0], vec![0.1, 50.0]]).unwrap();
        let spec = LocalizerSpec::distance_box(0.5).with_axis(0);
        assert_eq!(eval_localizer(&spec, x.row(0), x.row(1), &x).unwrap(), 1.0);
        let spec = LocalizerSpec::distance_box(0.5);
        assert_eq!(eval_localizer(&spec, x.row(0), x.row(1), &x).unwrap(), 0.0);
        assert!(KernelRows::new(&LocalizerSpec::distance_box(0.5).with_axis(2), &x).is_err());
    }

    #[test]
    fn shift_kernel_uses_raw_weights() {
        let w: WeightFn = Arc::new(|x: &[f64]| x[0] * 2.0);
        let x = col(&[0.1, 0.2, 3.0]);
        let spec = LocalizerSpec::shift_knn(3, w.clone());
        let rows = KernelRows::new(&spec, &x).unwrap();
        assert_eq!(rows.row(0).unwrap(), vec![0.2, 0.4, 6.0]);
        // gaps from w = 0.4 are {0.2, 0, 5.6}; the second smallest is 0.2
        assert_eq!(KernelRows::new(&LocalizerSpec::shift_knn(2, w.clone()), &x).unwrap().row(1).unwrap(), vec![0.2, 0.4, 0.0]);
        for i in 0..3 {
            assert_eq!(eval_localizer(&spec, x.row(i), x.row(i), &x).unwrap(), 2.0 * x.row(i)[0]);
        }
        let zero: WeightFn = Arc::new(|_: &[f64]| 0.0);
        assert!(KernelRows::new(&LocalizerSpec::shift_knn(1, zero), &x).is_err());
    }

    #[test]
    fn bandwidth_validation() {
        let x = col(&[0.0, 1.0]);
        assert!(KernelRows::new(&LocalizerSpec::distance_box(0.0), &x).is_err());
        assert!(KernelRows::new(&LocalizerSpec::gaussian(-1.0), &x).is_err());
        assert!(KernelRows::new(&LocalizerSpec::new(LocalizerKind::Knn, 1.5), &x).is_err());
        let bad: WeightFn = Arc::new(|_: &[f64]| f64::NAN);
        assert!(matches!(
            KernelRows::new(&LocalizerSpec::shift_knn(1, bad), &x),
            Err(LcpError::NonFiniteKernel { .. })
        ));
    }

    #[test]
    fn spec_parsing_round_trips() {
        let s: LocalizerSpec = "box:1".parse().unwrap();
        assert_eq!(s.kind, LocalizerKind::DistanceBox);
        assert_eq!(s.bandwidth, 1.0);
        let s: LocalizerSpec = "knn:40@3".parse().unwrap();
        assert_eq!((s.kind, s.bandwidth, s.axis), (LocalizerKind::Knn, 40.0, Some(3)));
        assert_eq!(s.to_string(), "knn:40@3");
        let s: LocalizerSpec = "constant".parse().unwrap();
        assert_eq!(s.kind, LocalizerKind::Constant);
        assert!("box".parse::<LocalizerSpec>().is_err());
        assert!("tophat:1".parse::<LocalizerSpec>().is_err());
        let s = LocalizerSpec::from_pairs([("kind", "gaussian"), ("h", "0.3"), ("axis", "1")]).unwrap();
        assert_eq!(s.to_string(), "gaussian:0.3@1");
    }

    #[test]
    fn mutual_information_picks_informative_axis() {
        let m = 200;
        let scores: Vec<f64> = (0..m).map(|i| ((i * 37) % m) as f64).collect();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| vec![((i * 11) % 7) as f64, scores[i], 3.0])
            .collect();
        let x = Features::from_rows(&rows).unwrap();
        assert_eq!(select_projection_axis(&x, &scores, 10).unwrap(), 1);
        let mi = mutual_information_by_axis(&x, &scores, 10).unwrap();
        assert_eq!(mi[2], 0.0);
        assert!((mi[1] - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_ties_go_to_smallest_axis() {
        let m = 40;
        let scores: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let rows: Vec<Vec<f64>> = (0..m).map(|_| vec![1.0, 1.0, 1.0]).collect();
        let x = Features::from_rows(&rows).unwrap();
        assert_eq!(select_projection_axis(&x, &scores, 10).unwrap(), 0);
        let rows: Vec<Vec<f64>> = (0..m).map(|i| vec![(i % 3) as f64; 2]).collect();
        let x = Features::from_rows(&rows).unwrap();
        assert_eq!(select_projection_axis(&x, &scores, 10).unwrap(), 0);
        assert!(select_projection_axis(&x, &scores[..10], 10).is_err());
    }
}
