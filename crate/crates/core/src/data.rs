//! Feature matrices and labelled samples.

use crate::error::{LcpError, Result};

/// Row-major feature matrix; every row has the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    data: Vec<f64>,
    dim: usize,
}

impl Features {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "feature dimension must be at least 1");
        Self {
            data: Vec::new(),
            dim,
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        assert!(dim >= 1, "feature dimension must be at least 1");
        Self {
            data: Vec::with_capacity(dim * rows),
            dim,
        }
    }

    /// One-dimensional features, one row per value.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(LcpError::InvalidInput(format!(
                "{} values cannot be split into rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(LcpError::InvalidInput(format!("non-finite feature {bad}")));
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| LcpError::InvalidInput("no rows".into()))?;
        let mut out = Self::with_capacity(dim.max(1), rows.len());
        for row in rows {
            out.push(row.as_ref())?;
        }
        Ok(out)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(LcpError::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(LcpError::InvalidInput(format!("non-finite feature {bad}")));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Copy with `extra` appended as the last row.
    pub fn with_row(&self, extra: &[f64]) -> Result<Self> {
        let mut out = Self::with_capacity(self.dim, self.len() + 1);
        out.data.extend_from_slice(&self.data);
        out.push(extra)?;
        Ok(out)
    }

    /// Rows selected by index, in the given order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }
}

/// Labelled regression data.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Features,
    pub y: Vec<f64>,
}

impl Sample {
    pub fn new(features: Features, y: Vec<f64>) -> Result<Self> {
        if features.len() != y.len() {
            return Err(LcpError::InvalidInput(format!(
                "{} feature rows but {} responses",
                features.len(),
                y.len()
            )));
        }
        Ok(Self { features, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Copy with one extra observation appended.
    pub fn with_point(&self, x: &[f64], y: f64) -> Result<Self> {
        let features = self.features.with_row(x)?;
        let mut ys = self.y.clone();
        ys.push(y);
        Ok(Self { features, y: ys })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_columns() {
        let f = Features::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.row(1), &[3.0, 4.0]);
        assert_eq!(f.column(0), vec![1.0, 3.0]);
        let g = f.with_row(&[5.0, 6.0]).unwrap();
        assert_eq!(g.len(), 3);
        assert!(f.with_row(&[1.0]).is_err());
        assert_eq!(g.select(&[2, 0]).row(0), &[5.0, 6.0]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Features::from_column(&[1.0, f64::NAN]).is_err());
        assert!(Sample::new(Features::from_column(&[1.0]).unwrap(), vec![]).is_err());
    }
}
