//! Hyperparameters for graph learning, the contrastive kernel, and training.

use crate::dataset::SupervisionMode;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam optimizer constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    /// Learning rate α.
    pub alpha: f64,
    /// First-moment decay β₁.
    pub beta1: f64,
    /// Second-moment decay β₂.
    pub beta2: f64,
    /// Division guard ε.
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyperParams(format!(
                "adam constants out of range: alpha={}, beta1={}, beta2={}, epsilon={}",
                self.alpha, self.beta1, self.beta2, self.epsilon
            )))
        }
    }
}

/// Everything a fit needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Kernel temperature σ (> 0).
    pub sigma: f64,
    /// Weight λ of the spectral rank-relaxation term (≥ 0; forced to 0 in
    /// supervised mode).
    pub lambda: f64,
    /// Neighbor count k for the similarity rows.
    pub k: usize,
    /// Target connected-component count c (columns of the spectral
    /// embedding).
    pub c: usize,
    /// Embedding dimension d.
    pub d: usize,
    /// Adam constants.
    pub adam: AdamParams,
    /// Inner (Adam) stop: |ΔL| ≤ tol_inner.
    pub tol_inner: f64,
    /// Outer (alternation) stop: |ΔL| ≤ tol_outer.
    pub tol_outer: f64,
    /// Inner step cap.
    pub max_inner: usize,
    /// Outer iteration cap.
    pub max_outer: usize,
    /// Seed for every randomized choice of the run.
    pub seed: u64,
    /// Keep the sample's own kernel value in the softmax denominator
    /// (the default objective does; switch off for ablation).
    pub include_self_softmax: bool,
    /// Double λ while the learned graph has fewer than c components and
    /// halve it while it has more. Off by default; λ then stays fixed.
    pub adaptive_lambda: bool,
    /// Start from a seeded random orthonormal P instead of the PCA basis.
    pub random_init: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            lambda: 1.0,
            k: 6,
            c: 2,
            d: 2,
            adam: AdamParams::default(),
            tol_inner: 1e-3,
            tol_outer: 1e-3,
            max_inner: 500,
            max_outer: 50,
            seed: 42,
            include_self_softmax: true,
            adaptive_lambda: false,
            random_init: false,
        }
    }
}

impl HyperParams {
    /// Check ranges against a dataset of `n` samples in `dim` dimensions.
    pub fn validate(&self, n: usize, dim: usize) -> Result<()> {
        self.adam.validate()?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidHyperParams(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidHyperParams(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.k < 1 || self.k + 2 > n {
            return Err(Error::InvalidHyperParams(format!(
                "k must satisfy 1 <= k <= n-2, got k={} with n={n}",
                self.k
            )));
        }
        if self.c < 1 || self.c > n {
            return Err(Error::InvalidHyperParams(format!(
                "c must satisfy 1 <= c <= n, got c={} with n={n}",
                self.c
            )));
        }
        if self.d < 1 || self.d > dim {
            return Err(Error::InvalidHyperParams(format!(
                "d must satisfy 1 <= d <= D, got d={} with D={dim}",
                self.d
            )));
        }
        if !(self.tol_inner > 0.0 && self.tol_outer > 0.0) {
            return Err(Error::InvalidHyperParams("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Copy with λ forced to 0 in supervised mode; every heterogeneous pair
    /// already has zero weight there, so the spectral term carries nothing.
    pub fn for_mode(&self, mode: SupervisionMode) -> HyperParams {
        let mut p = self.clone();
        if mode == SupervisionMode::Supervised {
            p.lambda = 0.0;
        }
        p
    }
}
