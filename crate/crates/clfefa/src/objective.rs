//! Contrastive kernel, loss, analytic gradient, and the mutual-information
//! bound diagnostic.
//!
//! The kernel scores a pair of embedded samples by their cosine similarity
//! pushed through `exp(cos/σ)`. Each sample's kernel row is normalized
//! softmax-style over all candidates, and the loss charges every weighted
//! positive pair the negative log of its normalized score:
//!
//! ```text
//! L = Σᵢ Σⱼ −H[i][j]·S[i][j]·log( f(yᵢ,yⱼ) / Σₖ f(yᵢ,yₖ) )
//! ```
//!
//! All softmax logs go through a max-shifted log-sum-exp so small σ cannot
//! overflow. The gradient with respect to `P` is derived by the chain rule
//! through `Y = PᵀX` and the cosine; the finite-difference routine is kept
//! as an independent check and never shares code with the analytic path.

use crate::dataset::Embedding;
use crate::error::{Error, Result};
use crate::graph::SimilarityMatrix;
use crate::params::HyperParams;
use crate::supervision::IndicatorMatrix;
use crate::{Matrix, Vector};

/// Norm guard: embeddings shorter than this are treated as having this norm
/// so cosines stay finite.
pub const NORM_GUARD: f64 = 1e-12;

/// Kernel configuration: temperature plus whether the softmax denominator
/// keeps the k = i self term (the default objective sums over all k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    sigma: f64,
    include_self: bool,
}

impl Kernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self { sigma, include_self: true })
        } else {
            Err(Error::InvalidHyperParams(format!("sigma must be positive, got {sigma}")))
        }
    }

    pub fn from_params(params: &HyperParams) -> Result<Self> {
        Ok(Self {
            include_self: params.include_self_softmax,
            ..Self::new(params.sigma)?
        })
    }

    pub fn with_include_self(mut self, include_self: bool) -> Self {
        self.include_self = include_self;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn includes_self(&self) -> bool {
        self.include_self
    }

    /// Pair score `exp(cos(yᵢ,yⱼ)/σ)` with guarded norms.
    pub fn value(&self, yi: &Vector, yj: &Vector) -> f64 {
        let ni = yi.norm().max(NORM_GUARD);
        let nj = yj.norm().max(NORM_GUARD);
        (yi.dot(yj) / (ni * nj * self.sigma)).exp()
    }
}

/// Free-function form of the pair score.
pub fn kernel(yi: &Vector, yj: &Vector, sigma: f64) -> Result<f64> {
    Ok(Kernel::new(sigma)?.value(yi, yj))
}

/// Cosine matrix of the embedding columns, with guarded norms.
fn cosine_matrix(y: &Matrix) -> Matrix {
    let n = y.ncols();
    let mut unit = y.clone();
    for mut col in unit.column_iter_mut() {
        let norm = col.norm().max(NORM_GUARD);
        col /= norm;
    }
    let mut c = Matrix::zeros(n, n);
    c.gemm_tr(1.0, &unit, &unit, 0.0); // c = unitᵀ · unit
    c
}

/// Row-wise log-softmax of the kernel logits: entry (i, j) is
/// `log( f(yᵢ,yⱼ) / Σₖ f(yᵢ,yₖ) )`.
///
/// With `include_self == false` the k = i term is dropped from the
/// denominator (the diagonal of the result is then meaningless and callers
/// must mask it).
pub(crate) fn log_softmax_rows(y: &Matrix, kernel: &Kernel) -> Matrix {
    let logits = cosine_matrix(y) / kernel.sigma;
    let n = logits.nrows();
    let mut out = logits.clone();
    for i in 0..n {
        let mut maxv = f64::NEG_INFINITY;
        for j in 0..n {
            if !kernel.include_self && j == i {
                continue;
            }
            maxv = maxv.max(logits[(i, j)]);
        }
        let mut sum = 0.0;
        for j in 0..n {
            if !kernel.include_self && j == i {
                continue;
            }
            sum += (logits[(i, j)] - maxv).exp();
        }
        let lse = maxv + sum.ln();
        for j in 0..n {
            out[(i, j)] = logits[(i, j)] - lse;
        }
    }
    out
}

/// Softmax probabilities per row (same masking rule as
/// [`log_softmax_rows`], but the excluded diagonal is set to 0).
fn softmax_rows(y: &Matrix, kernel: &Kernel) -> Matrix {
    let mut p = log_softmax_rows(y, kernel).map(f64::exp);
    if !kernel.include_self {
        p.fill_diagonal(0.0);
    }
    p
}

fn weights(h: &IndicatorMatrix, s: &SimilarityMatrix) -> Matrix {
    h.matrix().component_mul(s.matrix())
}

/// The contrastive double sum of the objective.
pub fn infonce_loss(
    y: &Embedding,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    kernel: &Kernel,
) -> Result<f64> {
    let n = y.len();
    if h.len() != n || s.len() != n {
        return Err(Error::DimensionMismatch {
            context: "infonce_loss".into(),
            expected: format!("H and S of size {n}"),
            got: format!("H {} / S {}", h.len(), s.len()),
        });
    }
    let log_sm = log_softmax_rows(y.matrix(), kernel);
    let w = weights(h, s);
    let mut loss = 0.0;
    for j in 0..n {
        for i in 0..n {
            let wij = w[(i, j)];
            if wij != 0.0 {
                loss -= wij * log_sm[(i, j)];
            }
        }
    }
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteIntermediate { context: "contrastive loss".into() })
    }
}

/// The three terms of the full objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    /// Σ −H∘S · log-softmax.
    pub contrastive: f64,
    /// γ‖S‖²_F with the global γ of the producing S-step.
    pub frobenius: f64,
    /// 2λ·Tr(FᵀL_S F).
    pub spectral: f64,
    /// Sum of the three.
    pub total: f64,
    /// The γ used for the Frobenius term.
    pub gamma: f64,
}

/// Evaluate the full objective at the current variables.
///
/// The Frobenius weight is the global γ recorded by the S update that
/// produced `s`; when `s` was built by hand the γ is recomputed from the
/// current distances via the per-row rule.
pub fn total_loss(
    y: &Embedding,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    f: &crate::graph::SpectralEmbedding,
    params: &HyperParams,
) -> Result<LossBreakdown> {
    let kernel = Kernel::from_params(params)?;
    let contrastive = infonce_loss(y, h, s, &kernel)?;
    let gamma = match s.gamma_global() {
        Some(g) => g,
        None => {
            let d = crate::graph::pairwise_distances(y, f, h, &kernel, params.lambda)?;
            crate::graph::gamma_global(&d, params.k)?
        }
    };
    let frobenius = gamma * s.matrix().norm_squared();
    let lap = crate::graph::laplacian(s)?;
    let spectral = 2.0 * params.lambda * (f.matrix().transpose() * lap.matrix() * f.matrix()).trace();
    let total = contrastive + frobenius + spectral;
    if !total.is_finite() {
        return Err(Error::NonFiniteIntermediate { context: "total loss".into() });
    }
    Ok(LossBreakdown { contrastive, frobenius, spectral, total, gamma })
}

/// Analytic gradient, optionally paired with its finite-difference check.
#[derive(Debug, Clone)]
pub struct GradientReport {
    /// ∂L/∂P of the contrastive term, D×d.
    pub grad: Matrix,
    /// Central-difference gradient when a check was requested.
    pub fd_grad: Option<Matrix>,
    /// max over entries of |g − g_fd| / (|g_fd| + 1e-8).
    pub max_rel_err: Option<f64>,
}

/// Gradient of the contrastive loss with respect to the projection.
///
/// Derivation: with logits a_ij = cos(yᵢ,yⱼ)/σ, the loss is
/// Σᵢⱼ W_ij (LSEᵢ − a_ij), so ∂L/∂a_ij = wᵢ·p_ij − W_ij with wᵢ the i-th
/// row sum of W and p the softmax. Backing through the cosine and
/// Y = PᵀX gives ∇P = X·Rᵀ where column i of R is
/// (1/(σ‖yᵢ‖))·[Σⱼ M_ij ŷⱼ − (Σⱼ M_ij cos_ij)·ŷᵢ] and M = G + Gᵀ.
pub fn gradient(
    x: &Matrix,
    p: &crate::dataset::Projection,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    kernel: &Kernel,
) -> Result<GradientReport> {
    let y = crate::dataset::project(x, p)?;
    let n = y.len();
    if h.len() != n || s.len() != n {
        return Err(Error::DimensionMismatch {
            context: "gradient".into(),
            expected: format!("H and S of size {n}"),
            got: format!("H {} / S {}", h.len(), s.len()),
        });
    }

    let ym = y.matrix();
    let mut unit = ym.clone();
    let mut norms = Vector::zeros(n);
    for (i, mut col) in unit.column_iter_mut().enumerate() {
        let norm = col.norm().max(NORM_GUARD);
        norms[i] = norm;
        col /= norm;
    }
    let mut cos = Matrix::zeros(n, n);
    cos.gemm_tr(1.0, &unit, &unit, 0.0);

    let prob = softmax_rows(ym, kernel);
    let w = weights(h, s);
    // G[i][j] = wᵢ·p_ij − W_ij, M = G + Gᵀ
    let mut g = prob.clone();
    for i in 0..n {
        let wi: f64 = w.row(i).sum();
        for j in 0..n {
            g[(i, j)] = wi * g[(i, j)] - w[(i, j)];
        }
    }
    let m = &g + g.transpose();

    // column i of (unit · Mᵀ) is Σⱼ M_ij ŷⱼ
    let mut lever = Matrix::zeros(unit.nrows(), n);
    lever.gemm(1.0, &unit, &m.transpose(), 0.0);
    for i in 0..n {
        let beta: f64 = m.row(i).dot(&cos.row(i));
        let scale = 1.0 / (kernel.sigma * norms[i]);
        let ui = unit.column(i).clone_owned();
        let mut col = lever.column_mut(i);
        col.axpy(-beta, &ui, 1.0);
        col *= scale;
    }
    let grad = x * lever.transpose();
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteIntermediate { context: "gradient".into() });
    }
    Ok(GradientReport { grad, fd_grad: None, max_rel_err: None })
}

/// Central-difference gradient of the contrastive loss, entry by entry.
///
/// Test oracle for [`gradient`]; deliberately routed through the plain loss
/// evaluation rather than any of the analytic intermediates.
pub fn fd_gradient(
    x: &Matrix,
    p: &crate::dataset::Projection,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    kernel: &Kernel,
    step: f64,
) -> Result<Matrix> {
    let loss_at = |pm: &Matrix| -> Result<f64> {
        let proj = crate::dataset::Projection::new(pm.clone())?;
        let y = crate::dataset::project(x, &proj)?;
        infonce_loss(&y, h, s, kernel)
    };
    let base = p.matrix();
    let mut out = Matrix::zeros(base.nrows(), base.ncols());
    for c in 0..base.ncols() {
        for r in 0..base.nrows() {
            let mut plus = base.clone();
            plus[(r, c)] += step;
            let mut minus = base.clone();
            minus[(r, c)] -= step;
            out[(r, c)] = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * step);
        }
    }
    Ok(out)
}

/// [`gradient`] plus the finite-difference comparison at step `h_step`.
pub fn gradient_with_check(
    x: &Matrix,
    p: &crate::dataset::Projection,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    kernel: &Kernel,
    h_step: f64,
) -> Result<GradientReport> {
    let mut report = gradient(x, p, h, s, kernel)?;
    let fd = fd_gradient(x, p, h, s, kernel, h_step)?;
    let max_rel = report
        .grad
        .iter()
        .zip(fd.iter())
        .map(|(g, gf)| (g - gf).abs() / (gf.abs() + 1e-8))
        .fold(0.0, f64::max);
    report.fd_grad = Some(fd);
    report.max_rel_err = Some(max_rel);
    Ok(report)
}

/// Per-sample mutual-information lower-bound diagnostic.
#[derive(Debug, Clone)]
pub struct MiBound {
    /// bᵢ = log((n−1)/nᵢ) − lᵢ; 0 for vacuous rows.
    pub values: Vec<f64>,
    /// Rows with no positive pair at all (nᵢ = 0).
    pub vacuous: Vec<bool>,
}

/// Bound each sample's mutual information with its positives from below.
///
/// nᵢ counts the off-diagonal positives of row i and lᵢ is the row's
/// contrastive loss. A diagnostic only; no training path consumes it.
pub fn mi_lower_bound(
    y: &Embedding,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    kernel: &Kernel,
) -> Result<MiBound> {
    let n = y.len();
    let log_sm = log_softmax_rows(y.matrix(), kernel);
    let w = weights(h, s);
    let mut values = Vec::with_capacity(n);
    let mut vacuous = Vec::with_capacity(n);
    for i in 0..n {
        let mut positives = 0usize;
        let mut row_loss = 0.0;
        for j in 0..n {
            let wij = w[(i, j)];
            if wij != 0.0 {
                row_loss -= wij * log_sm[(i, j)];
                if j != i && wij > 0.0 {
                    positives += 1;
                }
            }
        }
        if positives == 0 {
            values.push(0.0);
            vacuous.push(true);
        } else {
            values.push(((n - 1) as f64 / positives as f64).ln() - row_loss);
            vacuous.push(false);
        }
    }
    Ok(MiBound { values, vacuous })
}
