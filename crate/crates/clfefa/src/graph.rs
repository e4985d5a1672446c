//! The learned similarity graph and its spectral machinery.
//!
//! Each row of `S` solves a tiny strictly-convex problem on the probability
//! simplex whose closed form is a shifted, clamped copy of the row's
//! distance vector. Choosing the row's regularizer γᵢ from the gap between
//! the k-th and (k+1)-th smallest distances pins the solution's support to
//! exactly k neighbors, which is what makes the graph "adaptive": the
//! neighbor count is the tunable integer, not a continuous weight.
//!
//! The Laplacian of `S` feeds an eigen step whose c smallest eigenvectors
//! form the spectral embedding `F`; distances between rows of `F` are added
//! back into the next S update, nudging the graph toward exactly c
//! connected components.

use crate::dataset::Embedding;
use crate::error::{Error, Result};
use crate::objective::Kernel;
use crate::params::HyperParams;
use crate::supervision::IndicatorMatrix;
use crate::{Matrix, Vector};
use rayon::prelude::*;

/// Entries at or below this count as structural zeros when measuring a
/// row's support.
pub const SUPPORT_EPS: f64 = 1e-14;

/// Row-stochastic similarity graph with per-row bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    s: Matrix,
    row_support: Vec<usize>,
    /// γᵢ used by the update that produced each row; empty for hand-built
    /// matrices.
    row_gamma: Vec<f64>,
    /// Mean of the per-row γᵢ; `None` for hand-built matrices.
    gamma_global: Option<f64>,
}

impl SimilarityMatrix {
    /// Wrap an arbitrary square matrix (tests, initializers). No simplex
    /// checking; support is counted, γ bookkeeping is absent.
    pub fn from_matrix(s: Matrix) -> Self {
        let row_support = (0..s.nrows())
            .map(|i| s.row(i).iter().filter(|v| v.abs() > SUPPORT_EPS).count())
            .collect();
        Self { s, row_support, row_gamma: Vec::new(), gamma_global: None }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.nrows() == 0
    }

    /// Nonzero count of each row after the last update.
    pub fn row_support(&self) -> &[usize] {
        &self.row_support
    }

    /// Per-row γᵢ of the last update (empty when not produced by one).
    pub fn row_gamma(&self) -> &[f64] {
        &self.row_gamma
    }

    /// Mean per-row γ of the last update.
    pub fn gamma_global(&self) -> Option<f64> {
        self.gamma_global
    }

    /// Coordinate-list dump: `i j value`, 0-based, one triple per line,
    /// row-major order, entries above [`SUPPORT_EPS`] only.
    pub fn to_coo_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.s.nrows() {
            for j in 0..self.s.ncols() {
                let v = self.s[(i, j)];
                if v.abs() > SUPPORT_EPS {
                    out.push_str(&format!("{i} {j} {v}\n"));
                }
            }
        }
        out
    }
}

/// Symmetrized graph Laplacian `L = D − (S+Sᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    l: Matrix,
    degrees: Vector,
}

impl Laplacian {
    pub fn matrix(&self) -> &Matrix {
        &self.l
    }

    /// Diagonal of the degree matrix.
    pub fn degrees(&self) -> &Vector {
        &self.degrees
    }

    pub fn len(&self) -> usize {
        self.l.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.l.nrows() == 0
    }
}

/// Eigenvectors of the c smallest Laplacian eigenvalues, orthonormal
/// columns.
///
/// Unique only up to rotation inside exact eigenspaces; every downstream
/// use (row distances, the trace term) is invariant to that rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    f: Matrix,
    eigvals: Vec<f64>,
}

impl SpectralEmbedding {
    /// Wrap an arbitrary n×c matrix (tests, constant initializers).
    pub fn from_matrix(f: Matrix) -> Self {
        Self { f, eigvals: Vec::new() }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.f
    }

    /// Ascending eigenvalues matching the columns; empty for hand-built
    /// embeddings.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    /// Row i as an owned vector.
    pub fn row(&self, i: usize) -> Vector {
        self.f.row(i).transpose()
    }
}

/// Distance matrix driving the S update: contrastive part plus λ-weighted
/// spectral part, diagonal forced to +∞ so no sample neighbors itself.
///
/// `d[i][j] = −H[i][j]·log-softmax(i,j) + λ·‖fᵢ − fⱼ‖²`.
pub fn pairwise_distances(
    y: &Embedding,
    f: &SpectralEmbedding,
    h: &IndicatorMatrix,
    kernel: &Kernel,
    lambda: f64,
) -> Result<Matrix> {
    let n = y.len();
    if h.len() != n || f.matrix().nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "pairwise_distances".into(),
            expected: format!("H and F with {n} rows"),
            got: format!("H {} / F {}", h.len(), f.matrix().nrows()),
        });
    }
    let log_sm = crate::objective::log_softmax_rows(y.matrix(), kernel);
    let fm = f.matrix();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                d[(i, j)] = f64::INFINITY;
                continue;
            }
            let dy = -h.matrix()[(i, j)] * log_sm[(i, j)];
            let df = (fm.row(i) - fm.row(j)).norm_squared();
            let v = dy + lambda * df;
            if v.is_nan() {
                return Err(Error::NonFiniteIntermediate {
                    context: format!("pairwise distance ({i},{j})"),
                });
            }
            d[(i, j)] = v;
        }
    }
    Ok(d)
}

/// γᵢ giving the row's simplex solution exactly k nonzeros:
/// `(k/2)·d[k+1] − ½·Σ_{j≤k} d[j]` over the ascending distances, floored at
/// 1e-12 against all-tied rows.
pub fn gamma_for_row(d_sorted: &[f64], k: usize) -> Result<f64> {
    let finite = d_sorted.iter().take_while(|v| v.is_finite()).count();
    if finite < k + 1 {
        return Err(Error::InsufficientNeighbors { row: 0, finite, needed: k + 1 });
    }
    debug_assert!(d_sorted.windows(2).all(|w| w[0] <= w[1]), "distances must be ascending");
    let head: f64 = d_sorted[..k].iter().sum();
    let gamma = 0.5 * (k as f64) * d_sorted[k] - 0.5 * head;
    Ok(gamma.max(1e-12))
}

/// Mean of the per-row γᵢ over all rows of a distance matrix.
pub fn gamma_global(d: &Matrix, k: usize) -> Result<f64> {
    let n = d.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row: Vec<f64> = d.row(i).iter().cloned().collect();
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let g = gamma_for_row(&row, k).map_err(|e| match e {
            Error::InsufficientNeighbors { finite, needed, .. } => {
                Error::InsufficientNeighbors { row: i, finite, needed }
            }
            other => other,
        })?;
        acc += g;
    }
    Ok(acc / n as f64)
}

/// Closed-form row update: take the k smallest distances (ties broken by
/// original index), shift by the simplex multiplier, clamp at zero.
///
/// With γᵢ from [`gamma_for_row`] the result has exactly k nonzeros and
/// equals the Euclidean projection of −dᵢ/(2γᵢ) onto the simplex. For other
/// γᵢ the support shrinks as needed so the row still lands on the simplex
/// (never more than k nonzeros). An infinite γᵢ yields the uniform limit
/// over the k nearest.
pub fn update_similarity_row(d_i: &[f64], gamma_i: f64, k: usize) -> Result<Vec<f64>> {
    if gamma_i.is_nan() || gamma_i <= 0.0 {
        return Err(Error::InvalidHyperParams(format!("gamma must be positive, got {gamma_i}")));
    }
    let n = d_i.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d_i[a].partial_cmp(&d_i[b]).unwrap().then(a.cmp(&b)));
    let finite = order.iter().filter(|&&j| d_i[j].is_finite()).count();
    if finite == 0 {
        return Err(Error::DegenerateRow { row: 0 });
    }
    let mut out = vec![0.0; n];
    let cap = k.min(finite).max(1);
    if !gamma_i.is_finite() {
        for &j in &order[..cap] {
            out[j] = 1.0 / cap as f64;
        }
        return Ok(out);
    }
    // Largest support m ≤ cap whose multiplier keeps every kept entry
    // positive; m = cap whenever γ comes from the exact-k rule.
    let mut support = cap;
    while support > 1 {
        let head: f64 = order[..support].iter().map(|&j| d_i[j]).sum();
        let eta = 1.0 / support as f64 + head / (2.0 * support as f64 * gamma_i);
        if -d_i[order[support - 1]] / (2.0 * gamma_i) + eta > 0.0 {
            break;
        }
        support -= 1;
    }
    let head: f64 = order[..support].iter().map(|&j| d_i[j]).sum();
    let eta = 1.0 / support as f64 + head / (2.0 * support as f64 * gamma_i);
    for &j in &order[..support] {
        out[j] = (-d_i[j] / (2.0 * gamma_i) + eta).max(0.0);
    }
    Ok(out)
}

/// Full S update: distances, per-row γ, row-wise closed form. Rows are
/// independent and run in parallel; results land by index so the output is
/// deterministic.
///
/// Candidacy follows the indicator: pairs with `H[i][j] = 0` cannot carry
/// similarity mass (their loss weight `H∘S` would discard it anyway, and
/// their zero contrastive distance would otherwise soak up the entire
/// support in the labeled modes). Rows with fewer than k allowed candidates
/// fall back to the uniform limit over what remains; a row with none at all
/// spreads over its k nearest regardless of the mask.
pub fn update_similarity(
    y: &Embedding,
    f: &SpectralEmbedding,
    h: &IndicatorMatrix,
    params: &HyperParams,
) -> Result<SimilarityMatrix> {
    let kernel = Kernel::from_params(params)?;
    let d = pairwise_distances(y, f, h, &kernel, params.lambda)?;
    update_similarity_from_distances(&d, h, params.k)
}

/// The row-update stage of [`update_similarity`], reusable by the trainer
/// once it has distances for its live λ.
pub(crate) fn update_similarity_from_distances(
    d: &Matrix,
    h: &IndicatorMatrix,
    k: usize,
) -> Result<SimilarityMatrix> {
    let n = d.nrows();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, f64)> {
            let raw: Vec<f64> = d.row(i).iter().cloned().collect();
            let masked: Vec<f64> = raw
                .iter()
                .enumerate()
                .map(|(j, &v)| if h.allowed(i, j) { v } else { f64::INFINITY })
                .collect();
            let row = if masked.iter().any(|v| v.is_finite()) { &masked } else { &raw };
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let finite = sorted.iter().take_while(|v| v.is_finite()).count();
            if finite == 0 {
                return Err(Error::DegenerateRow { row: i });
            }
            // k+1 finite distances pin γ by the exact-k rule; with fewer the
            // rule's boundary term is +∞ and the uniform limit applies.
            let gamma = if finite > k {
                gamma_for_row(&sorted, k).map_err(|e| match e {
                    Error::InsufficientNeighbors { finite, needed, .. } => {
                        Error::InsufficientNeighbors { row: i, finite, needed }
                    }
                    other => other,
                })?
            } else {
                f64::INFINITY
            };
            let s_row = update_similarity_row(row, gamma, k).map_err(|e| match e {
                Error::DegenerateRow { .. } => Error::DegenerateRow { row: i },
                other => other,
            })?;
            Ok((s_row, gamma))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut s = Matrix::zeros(n, n);
    let mut row_gamma = Vec::with_capacity(n);
    let mut row_support = Vec::with_capacity(n);
    for (i, (row, gamma)) in rows.into_iter().enumerate() {
        row_support.push(row.iter().filter(|v| **v > SUPPORT_EPS).count());
        for (j, v) in row.into_iter().enumerate() {
            s[(i, j)] = v;
        }
        row_gamma.push(gamma);
    }
    // Mean over the rows the exact-k rule could price; uniform-limit rows
    // have no finite γ to average.
    let finite_gammas: Vec<f64> = row_gamma.iter().copied().filter(|g| g.is_finite()).collect();
    let gamma_global = if finite_gammas.is_empty() {
        None
    } else {
        Some(finite_gammas.iter().sum::<f64>() / finite_gammas.len() as f64)
    };
    Ok(SimilarityMatrix { s, row_support, row_gamma, gamma_global })
}

/// Value of the decoupled S subproblem: `Σᵢ (dᵢ·Sᵢ + γᵢ‖Sᵢ‖²)`.
///
/// This is the exact quantity each row update minimizes (the contrastive
/// and spectral terms enter through `d`, the Frobenius term through the
/// per-row γ), so an update can never increase it. Entries where S is zero
/// are skipped so the infinite diagonal contributes nothing.
pub fn s_subproblem_value(d: &Matrix, s: &Matrix, row_gamma: &[f64]) -> f64 {
    let n = d.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let sij = s[(i, j)];
            if sij != 0.0 {
                acc += d[(i, j)] * sij + row_gamma[i] * sij * sij;
            }
        }
    }
    acc
}

/// `L = D − (S+Sᵀ)/2` with `D` the diagonal of symmetrized row sums.
pub fn laplacian(s: &SimilarityMatrix) -> Result<Laplacian> {
    let sm = s.matrix();
    let n = sm.nrows();
    if sm.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "laplacian".into(),
            expected: "square S".into(),
            got: format!("{}x{}", n, sm.ncols()),
        });
    }
    let w = (sm + sm.transpose()) * 0.5;
    let degrees = Vector::from_iterator(n, (0..n).map(|i| w.row(i).sum()));
    let mut l = -w;
    for i in 0..n {
        l[(i, i)] += degrees[i];
    }
    Ok(Laplacian { l, degrees })
}

/// Eigenvectors of the c smallest eigenvalues, ascending, with a
/// deterministic sign (largest-magnitude component of each column made
/// positive, first index winning ties).
pub fn update_spectral(lap: &Laplacian, c: usize) -> Result<SpectralEmbedding> {
    let n = lap.len();
    if c < 1 || c > n {
        return Err(Error::InvalidHyperParams(format!("c must be in 1..=n, got {c} with n={n}")));
    }
    let eig = nalgebra::SymmetricEigen::try_new(lap.matrix().clone(), f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure { n })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut f = Matrix::zeros(n, c);
    let mut eigvals = Vec::with_capacity(c);
    for (col, &idx) in order[..c].iter().enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let mut pivot = 0;
        for r in 1..n {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        if v[pivot] < 0.0 {
            v = -v;
        }
        f.set_column(col, &v);
        eigvals.push(eig.eigenvalues[idx]);
    }
    Ok(SpectralEmbedding { f, eigvals })
}

/// Count components of the undirected graph with an edge wherever the
/// symmetrized weight exceeds `threshold`.
pub fn connected_components(s: &SimilarityMatrix, threshold: f64) -> usize {
    let sm = s.matrix();
    let n = sm.nrows();
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if 0.5 * (sm[(i, j)] + sm[(j, i)]) > threshold {
                dsu.union(i, j);
            }
        }
    }
    dsu.count()
}

/// Default edge threshold for component counting.
pub const COMPONENT_EPS: f64 = 1e-12;

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    fn count(&mut self) -> usize {
        let n = self.parent.len();
        (0..n).filter(|&i| self.find(i) == i).count()
    }
}

/// Heat-kernel k-NN graph in input space: the starting S of a fit.
///
/// Neighbors compatible with H are preferred; when a sample has fewer than
/// k compatible ones the nearest incompatible samples fill the remainder so
/// every row still has k entries. Bandwidth is the mean k-th neighbor
/// distance; rows are renormalized onto the simplex.
pub fn initial_similarity(x: &Matrix, h: &IndicatorMatrix, k: usize) -> Result<SimilarityMatrix> {
    let n = x.ncols();
    if k >= n {
        return Err(Error::InvalidHyperParams(format!("initial graph needs k < n, got k={k}, n={n}")));
    }
    let mut dist = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (x.column(i) - x.column(j)).norm();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    let mut chosen: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut kth_sum = 0.0;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[(i, a)].partial_cmp(&dist[(i, b)]).unwrap().then(a.cmp(&b)));
        let mut picks: Vec<usize> = order.iter().copied().filter(|&j| h.allowed(i, j)).take(k).collect();
        if picks.len() < k {
            for &j in &order {
                if !picks.contains(&j) {
                    picks.push(j);
                    if picks.len() == k {
                        break;
                    }
                }
            }
        }
        kth_sum += picks.iter().map(|&j| dist[(i, j)]).fold(0.0, f64::max);
        chosen.push(picks);
    }
    let bandwidth = (kth_sum / n as f64).max(1e-12);
    let mut s = Matrix::zeros(n, n);
    let mut row_support = Vec::with_capacity(n);
    for (i, picks) in chosen.iter().enumerate() {
        let mut weights: Vec<f64> = picks
            .iter()
            .map(|&j| (-(dist[(i, j)] / bandwidth).powi(2)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            weights = vec![1.0 / picks.len() as f64; picks.len()];
        } else {
            for w in &mut weights {
                *w /= total;
            }
        }
        for (&j, w) in picks.iter().zip(weights) {
            s[(i, j)] = w;
        }
        row_support.push(picks.len());
    }
    Ok(SimilarityMatrix { s, row_support, row_gamma: Vec::new(), gamma_global: None })
}
