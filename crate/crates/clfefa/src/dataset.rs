//! Sample matrices, labels, supervision modes, and feature normalization.
//!
//! Samples are columns throughout: a dataset is a D×n matrix `X`, a
//! projection is D×d, and the embedding is `Y = PᵀX` (d×n).

use crate::Matrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which labels a fit is allowed to consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupervisionMode {
    /// Labels are ignored entirely.
    Unsupervised,
    /// Every sample must be labeled.
    Supervised,
    /// At least one labeled and one unlabeled sample.
    SemiSupervised,
}

impl std::fmt::Display for SupervisionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SupervisionMode::Unsupervised => "unsupervised",
            SupervisionMode::Supervised => "supervised",
            SupervisionMode::SemiSupervised => "semi_supervised",
        };
        f.write_str(s)
    }
}

/// A column-major sample set with optional 1-based class labels.
///
/// `labels[i] == None` marks sample `i` as unlabeled.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    labels: Vec<Option<usize>>,
    class_count: usize,
    name: String,
}

impl Dataset {
    /// Build and validate: finite entries, labels in `1..=class_count`,
    /// n ≥ 2, D ≥ 1.
    pub fn new(
        x: Matrix,
        labels: Vec<Option<usize>>,
        class_count: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if x.nrows() < 1 || x.ncols() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need D >= 1 and n >= 2, got D={} n={}",
                x.nrows(),
                x.ncols()
            )));
        }
        if labels.len() != x.ncols() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} samples",
                labels.len(),
                x.ncols()
            )));
        }
        if class_count < 1 {
            return Err(Error::InvalidDataset("class_count must be >= 1".into()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput { context: "dataset matrix".into() });
        }
        for (i, l) in labels.iter().enumerate() {
            if let Some(c) = l {
                if *c < 1 || *c > class_count {
                    return Err(Error::InvalidDataset(format!(
                        "label {c} of sample {i} outside 1..={class_count}"
                    )));
                }
            }
        }
        Ok(Self { x, labels, class_count, name: name.into() })
    }

    /// Fully unlabeled dataset with a single nominal class.
    pub fn unlabeled(x: Matrix, name: impl Into<String>) -> Result<Self> {
        let n = x.ncols();
        Self::new(x, vec![None; n], 1, name)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of samples n.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Feature dimension D.
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Check that `mode` makes sense for this label set.
    pub fn check_mode(&self, mode: SupervisionMode) -> Result<()> {
        let labeled = self.labeled_count();
        match mode {
            SupervisionMode::Unsupervised => Ok(()),
            SupervisionMode::Supervised => {
                if labeled == self.len() {
                    Ok(())
                } else {
                    Err(Error::ModeLabelMismatch(format!(
                        "supervised mode needs all samples labeled; {} of {} are",
                        labeled,
                        self.len()
                    )))
                }
            }
            SupervisionMode::SemiSupervised => {
                if labeled >= 1 && labeled < self.len() {
                    Ok(())
                } else {
                    Err(Error::ModeLabelMismatch(format!(
                        "semi-supervised mode needs >=1 labeled and >=1 unlabeled; {} of {} labeled",
                        labeled,
                        self.len()
                    )))
                }
            }
        }
    }

    /// New dataset restricted to the given sample indices (columns), in order.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let x = self.x.select_columns(indices.iter());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(x, labels, self.class_count, name)
    }

    /// Copy with the labels replaced (same shape and class count).
    pub fn with_labels(&self, labels: Vec<Option<usize>>) -> Result<Self> {
        Self::new(self.x.clone(), labels, self.class_count, self.name.clone())
    }
}

/// Feature normalization applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizeScheme {
    /// Leave the matrix alone.
    None,
    /// Divide by 255 when the whole matrix certifies as 8-bit pixel data
    /// (all values in [0, 255] with max > 1), otherwise min-max each feature
    /// to [0, 1].
    UnitRange,
    /// Center each feature to mean 0 and scale to unit population variance
    /// where the variance is positive.
    ZScore,
}

/// Normalize features; labels pass through untouched.
pub fn normalize(dataset: &Dataset, scheme: NormalizeScheme) -> Result<Dataset> {
    // Dataset construction already rejects non-finite input; re-check here so
    // the op also works as a standalone contract.
    if !dataset.x().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { context: "normalize input".into() });
    }
    let x = dataset.x();
    let out = match scheme {
        NormalizeScheme::None => x.clone(),
        NormalizeScheme::UnitRange => {
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo >= 0.0 && hi <= 255.0 && hi > 1.0 {
                x / 255.0
            } else {
                let mut m = x.clone();
                for mut row in m.row_iter_mut() {
                    let rlo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                    let rhi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let span = rhi - rlo;
                    for v in row.iter_mut() {
                        *v = if span > 0.0 { (*v - rlo) / span } else { 0.0 };
                    }
                }
                m
            }
        }
        NormalizeScheme::ZScore => {
            let n = x.ncols() as f64;
            let mut m = x.clone();
            for mut row in m.row_iter_mut() {
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = var.sqrt();
                for v in row.iter_mut() {
                    *v -= mean;
                    if std > 0.0 {
                        *v /= std;
                    }
                }
            }
            m
        }
    };
    Dataset::new(out, dataset.labels().to_vec(), dataset.class_count(), dataset.name())
}

/// Linear map learned by a fit: a D×d matrix applied as `Y = PᵀX`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    p: Matrix,
}

impl Projection {
    pub fn new(p: Matrix) -> Result<Self> {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput { context: "projection matrix".into() });
        }
        Ok(Self { p })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn input_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.p.ncols()
    }
}

/// Embedded samples, d×n.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    y: Matrix,
}

impl Embedding {
    /// Wrap an existing d×n matrix.
    pub fn from_matrix(y: Matrix) -> Self {
        Self { y }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    /// Column i as a view.
    pub fn sample(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        self.y.column(i)
    }
}

/// `Y = PᵀX`.
pub fn project(x: &Matrix, p: &Projection) -> Result<Embedding> {
    if x.nrows() != p.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "project".into(),
            expected: format!("X with {} rows", p.input_dim()),
            got: format!("{} rows", x.nrows()),
        });
    }
    Ok(Embedding { y: p.matrix().transpose() * x })
}
