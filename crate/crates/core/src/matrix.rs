use ndarray::{Array2, ArrayView2};

use crate::error::{MatchError, Result};

/// Dense `n × m` real matrix of (possibly relaxed) assignment weights.
///
/// Projections accept any shape; the solver entry points require `n ≤ m`.
pub type AssignmentMatrix = Array2<f64>;

/// Matching costs, rows = templates, columns = proposals. Always non-empty
/// with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(MatchError::Empty);
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(MatchError::NonFinite { row, col });
        }
        Ok(Self(values.as_standard_layout().into_owned()))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(MatchError::Dimension(format!(
                "ragged rows: expected {m} columns, found {}",
                bad.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((n, m), flat)
            .map_err(|e| MatchError::Dimension(e.to_string()))?;
        Self::new(values)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Rejects `n > m`: the wide polytope is empty when there are more
    /// templates than proposals.
    pub fn ensure_wide(&self) -> Result<()> {
        if self.rows() > self.cols() {
            Err(MatchError::TooManyRows {
                rows: self.rows(),
                cols: self.cols(),
            })
        } else {
            Ok(())
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(self.0.view())
    }

    /// `Tr(C Xᵀ)`, the linear matching objective.
    pub fn objective(&self, x: ArrayView2<'_, f64>) -> f64 {
        debug_assert_eq!(x.dim(), self.0.dim());
        self.0.iter().zip(x.iter()).map(|(c, x)| c * x).sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.0 * factor)
    }
}

pub fn frobenius(x: ArrayView2<'_, f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn frobenius_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
