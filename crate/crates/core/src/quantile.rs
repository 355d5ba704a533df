//! Weighted empirical distributions over nonconformity scores.
//!
//! Every threshold in the crate is a lower quantile
//! `Q(alpha; F) = inf { t : F(t) >= alpha }` of a finitely supported
//! distribution, possibly carrying a point mass at `+inf`. This module is
//! the single implementation of that rule.
//!
//! Atoms keep the masses they were built with. The cumulative weight of a
//! prefix is compared as `prefix / total >= alpha`, where the prefix is
//! accumulated over value-sorted groups of tied atoms and `total` is the
//! index-order sum of all masses. Integer masses (indicator localizers,
//! unweighted conformal) are therefore compared exactly, and the final group
//! always has cumulative weight 1.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{LcpError, Result};

/// Absolute tolerance on the weight sum of a normalized distribution.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// A nonnegative score, or the distinguished `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreValue {
    Finite(f64),
    Infinite,
}

impl ScoreValue {
    pub const ZERO: ScoreValue = ScoreValue::Finite(0.0);

    /// Validates a raw score. `f64::INFINITY` maps to [`ScoreValue::Infinite`].
    pub fn new(value: f64) -> Result<Self> {
        if value == f64::INFINITY {
            Ok(ScoreValue::Infinite)
        } else if value.is_finite() && value >= 0.0 {
            // normalise -0.0
            Ok(ScoreValue::Finite(value + 0.0))
        } else {
            Err(LcpError::InvalidScore(value))
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ScoreValue::Infinite)
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            ScoreValue::Finite(v) => v,
            ScoreValue::Infinite => f64::INFINITY,
        }
    }

    /// The finite value, if any.
    pub fn finite(&self) -> Option<f64> {
        match *self {
            ScoreValue::Finite(v) => Some(v),
            ScoreValue::Infinite => None,
        }
    }
}

impl Eq for ScoreValue {}

impl PartialOrd for ScoreValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoreValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ScoreValue::Finite(a), ScoreValue::Finite(b)) => a.total_cmp(b),
            (ScoreValue::Finite(_), ScoreValue::Infinite) => Ordering::Less,
            (ScoreValue::Infinite, ScoreValue::Finite(_)) => Ordering::Greater,
            (ScoreValue::Infinite, ScoreValue::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ScoreValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreValue::Finite(v) => write!(f, "{v}"),
            ScoreValue::Infinite => f.write_str("inf"),
        }
    }
}

impl From<ScoreValue> for f64 {
    fn from(v: ScoreValue) -> f64 {
        v.as_f64()
    }
}

/// A finitely supported distribution over [`ScoreValue`]s.
///
/// Duplicate values are allowed; their masses are merged when the
/// distribution is read. A sorted table of cumulative masses is built on
/// construction so quantile and CDF queries are logarithmic.
#[derive(Debug, Clone)]
pub struct WeightedAtomSet {
    atoms: Vec<(ScoreValue, f64)>,
    total: f64,
    // (value, cumulative mass through this group), ascending by value
    groups: Vec<(ScoreValue, f64)>,
}

impl WeightedAtomSet {
    /// Builds a distribution whose weights already sum to one (within
    /// [`WEIGHT_SUM_TOLERANCE`]).
    pub fn new(atoms: Vec<(ScoreValue, f64)>) -> Result<Self> {
        let set = Self::from_masses(atoms)?;
        if (set.total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(LcpError::WeightSum(set.total));
        }
        Ok(set)
    }

    /// Builds a distribution from unnormalized nonnegative masses. The
    /// distribution is the masses divided by their total.
    pub fn from_masses(atoms: Vec<(ScoreValue, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(LcpError::EmptyDistribution);
        }
        let mut total = 0.0;
        for (index, &(value, weight)) in atoms.iter().enumerate() {
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(LcpError::InvalidWeight { index, weight });
            }
            if let ScoreValue::Finite(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(LcpError::InvalidScore(v));
                }
            }
            total += weight;
        }
        if !(total > 0.0) {
            return Err(LcpError::ZeroMass);
        }
        let groups = build_groups(&atoms);
        Ok(Self {
            atoms,
            total,
            groups,
        })
    }

    /// Equal unit masses on each value.
    pub fn uniform(values: &[ScoreValue]) -> Result<Self> {
        Self::from_masses(values.iter().map(|&v| (v, 1.0)).collect())
    }

    pub fn atoms(&self) -> &[(ScoreValue, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Sum of the stored masses.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Normalized weight of atom `index`.
    pub fn weight(&self, index: usize) -> f64 {
        self.atoms[index].1 / self.total
    }

    /// Cumulative weight of the `g`-th value group.
    fn group_level(&self, g: usize) -> f64 {
        let last = self.groups[self.groups.len() - 1].1;
        // once every positive mass is accounted for the level is exactly 1
        if self.groups[g].1 >= last {
            1.0
        } else {
            (self.groups[g].1 / self.total).min(1.0)
        }
    }

    /// Lower `alpha` quantile.
    pub fn quantile(&self, alpha: f64) -> Result<ScoreValue> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(LcpError::InvalidLevel(alpha));
        }
        // group levels are nondecreasing, so the first group reaching alpha
        // is found by bisection
        let mut lo = 0;
        let mut hi = self.groups.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.group_level(mid) >= alpha {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(self
            .groups
            .get(lo)
            .map(|g| g.0)
            .unwrap_or(ScoreValue::Infinite))
    }

    /// Total weight of atoms with value `<= t`.
    pub fn cdf(&self, t: ScoreValue) -> f64 {
        if t.is_infinite() {
            return 1.0;
        }
        let count = self.groups.partition_point(|g| g.0 <= t);
        if count == 0 {
            0.0
        } else {
            self.group_level(count - 1)
        }
    }

    /// Total weight of atoms with value strictly below `t`.
    ///
    /// For `alpha > 0`, `t <= quantile(alpha)` exactly when
    /// `cdf_below(t) < alpha`.
    pub fn cdf_below(&self, t: ScoreValue) -> f64 {
        let count = self.groups.partition_point(|g| g.0 < t);
        if count == 0 {
            0.0
        } else {
            self.group_level(count - 1)
        }
    }

    /// Copy with atom `index` moved to `new_value`; masses are unchanged.
    pub fn substitute(&self, index: usize, new_value: ScoreValue) -> Result<Self> {
        if index >= self.atoms.len() {
            return Err(LcpError::IndexOutOfRange {
                index,
                len: self.atoms.len(),
            });
        }
        let mut atoms = self.atoms.clone();
        atoms[index].0 = new_value;
        let groups = build_groups(&atoms);
        Ok(Self {
            atoms,
            total: self.total,
            groups,
        })
    }
}

fn build_groups(atoms: &[(ScoreValue, f64)]) -> Vec<(ScoreValue, f64)> {
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    // stable: ties keep index order
    order.sort_by(|&a, &b| atoms[a].0.cmp(&atoms[b].0));

    let mut groups: Vec<(ScoreValue, f64)> = Vec::new();
    let mut cum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let value = atoms[order[k]].0;
        let mut mass = 0.0;
        while k < order.len() && atoms[order[k]].0 == value {
            mass += atoms[order[k]].1;
            k += 1;
        }
        cum += mass;
        groups.push((value, cum));
    }
    groups
}

/// Lower `alpha` quantile of `dist`.
pub fn weighted_quantile(alpha: f64, dist: &WeightedAtomSet) -> Result<ScoreValue> {
    dist.quantile(alpha)
}

/// Weight of `dist` at or below `t`.
pub fn cdf_at(dist: &WeightedAtomSet, t: ScoreValue) -> f64 {
    dist.cdf(t)
}

/// `dist` with the atom at `index` moved to `new_value`.
pub fn substitute_atom(
    dist: &WeightedAtomSet,
    index: usize,
    new_value: ScoreValue,
) -> Result<WeightedAtomSet> {
    dist.substitute(index, new_value)
}
