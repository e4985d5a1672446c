//! Indicator matrix: which sample pairs are allowed to be positives.
//!
//! `H[i][j] = 0` exactly when both samples carry labels and the labels
//! differ; every other pair (same label, either side unlabeled, or the
//! diagonal) gets 1. Unsupervised fits therefore see an all-ones matrix and
//! the supervision modes collapse into one code path downstream.

use crate::Matrix;
use crate::dataset::{Dataset, SupervisionMode};
use crate::error::Result;

/// Symmetric n×n 0/1 mask with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    h: Matrix,
}

impl IndicatorMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    /// Entry access; true means the pair may be a positive.
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.h[(i, j)] != 0.0
    }

    /// Build directly from an explicit 0/1 matrix (used by tests and by
    /// callers that assemble masks themselves).
    pub fn from_matrix(h: Matrix) -> Self {
        Self { h }
    }
}

/// Build H for a dataset under a supervision mode.
///
/// The unsupervised path never looks at the labels. Errors with
/// `ModeLabelMismatch` when the mode's label requirements do not hold.
pub fn build_indicator(dataset: &Dataset, mode: SupervisionMode) -> Result<IndicatorMatrix> {
    dataset.check_mode(mode)?;
    let n = dataset.len();
    let h = match mode {
        SupervisionMode::Unsupervised => Matrix::repeat(n, n, 1.0),
        SupervisionMode::Supervised | SupervisionMode::SemiSupervised => {
            let labels = dataset.labels();
            Matrix::from_fn(n, n, |i, j| match (labels[i], labels[j]) {
                (Some(a), Some(b)) if a != b => 0.0,
                _ => 1.0,
            })
        }
    };
    Ok(IndicatorMatrix { h })
}
