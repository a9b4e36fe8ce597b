use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Time-indexed sequence of column vectors. Column `k` (0-based) holds the
/// vector at time `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    columns: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() == 0 {
            return Err(Error::InvalidArgument("trajectory must have at least one column".into()));
        }
        if columns.nrows() == 0 {
            return Err(Error::InvalidArgument("trajectory dimension must be positive".into()));
        }
        if let Some(k) = first_non_finite_column(&columns) {
            return Err(Error::NonFinite { context: "trajectory", index: k + 1 });
        }
        Ok(Self { columns })
    }

    pub fn from_columns(cols: &[DVector<f64>]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::InvalidArgument("trajectory must have at least one column".into()));
        }
        let dim = cols[0].len();
        if let Some(bad) = cols.iter().find(|c| c.len() != dim) {
            return Err(Error::shape("Trajectory::from_columns", dim, bad.len()));
        }
        Self::new(DMatrix::from_columns(cols))
    }

    /// Scalar series as a one-dimensional trajectory.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.columns
    }

    /// Vector at 0-based position `k`.
    pub fn column(&self, k: usize) -> DVectorView<'_, f64> {
        self.columns.column(k)
    }

    /// Columns `start..end` (0-based, half-open) as a new trajectory.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{end} out of range for length {}",
                self.len()
            )));
        }
        Ok(Self { columns: self.columns.columns(start, end - start).into_owned() })
    }

    /// First row as a plain vector; convenient for scalar series.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.row(i).iter().copied().collect()
    }

    /// Time-mean vector.
    pub fn mean(&self) -> DVector<f64> {
        self.columns.column_mean()
    }
}

pub(crate) fn first_non_finite_column(m: &DMatrix<f64>) -> Option<usize> {
    m.column_iter().position(|c| c.iter().any(|x| !x.is_finite()))
}
