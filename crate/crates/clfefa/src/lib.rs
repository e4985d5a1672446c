//! Linear feature extraction driven by a contrastive loss whose positive and
//! negative pairs are learned on the fly.
//!
//! The model looks for a projection `P` (D×d) so that the embedding
//! `Y = PᵀX` pulls together samples the learned similarity graph `S` marks
//! as positives and pushes apart everything else. Three quantities are
//! alternated:
//!
//! * `F` — spectral embedding of the graph Laplacian of `S` (eigen step),
//! * `S` — row-wise closed-form update on the probability simplex with an
//!   exact-`k` support guarantee (KKT step),
//! * `P` — Adam descent on the contrastive loss (gradient step).
//!
//! An indicator matrix `H` folds label information into the same machinery,
//! so the unsupervised, supervised, and semi-supervised cases differ only in
//! which pairs are allowed to be positives.
//!
//! Entry points: [`trainer::fit`] for training, [`eval::run_experiment`] for
//! the split/fit/1-NN benchmark protocol, and the `ingest` loaders for data.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod objective;
pub mod params;
pub mod rng;
pub mod supervision;
pub mod trainer;

pub use dataset::{Dataset, Embedding, NormalizeScheme, Projection, SupervisionMode, normalize, project};
pub use error::{Error, Result};
pub use eval::{EvalReport, SplitSpec, accuracy, knn_predict, recall_rate, run_experiment};
pub use graph::{Laplacian, SimilarityMatrix, SpectralEmbedding, connected_components};
pub use objective::{GradientReport, Kernel, LossBreakdown};
pub use params::{AdamParams, HyperParams};
pub use supervision::{IndicatorMatrix, build_indicator};
pub use trainer::{FitReport, fit};

/// Column-major dense matrix used throughout; samples are columns.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
