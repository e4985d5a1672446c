//! Alternating training loop: eigen step for F, closed-form step for S,
//! Adam descent for P, repeated until the outer losses stop moving.
//!
//! Adam state is re-initialized at the top of every outer iteration, so each
//! projection subproblem starts with fresh moments. The loop stops when two
//! consecutive outer losses differ by at most `tol_outer` (the inner loop
//! uses the same rule with `tol_inner`), or at the iteration caps.

use crate::dataset::{Dataset, Projection, SupervisionMode, project};
use crate::error::{Error, Result};
use crate::graph::{
    COMPONENT_EPS, SimilarityMatrix, SpectralEmbedding, connected_components, laplacian,
    pairwise_distances, s_subproblem_value, update_similarity_from_distances, update_spectral,
};
use crate::objective::{Kernel, LossBreakdown, gradient, infonce_loss, total_loss};
use crate::params::{AdamParams, HyperParams};
use crate::supervision::{IndicatorMatrix, build_indicator};
use crate::Matrix;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

/// Adam moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// First moment, D×d.
    pub m: Matrix,
    /// Second raw moment, D×d, entry-wise nonnegative.
    pub v: Matrix,
    /// Steps taken.
    pub t: usize,
}

impl AdamState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { m: Matrix::zeros(rows, cols), v: Matrix::zeros(rows, cols), t: 0 }
    }
}

/// One Adam step: returns the advanced state and the update to subtract
/// from P. The step counter increments before bias correction.
pub fn adam_step(state: &AdamState, g: &Matrix, adam: &AdamParams) -> (AdamState, Matrix) {
    let t = state.t + 1;
    let m = &state.m * adam.beta1 + g * (1.0 - adam.beta1);
    let v = &state.v * adam.beta2 + g.component_mul(g) * (1.0 - adam.beta2);
    let m_hat = &m / (1.0 - adam.beta1.powi(t as i32));
    let v_hat = &v / (1.0 - adam.beta2.powi(t as i32));
    let delta = m_hat.zip_map(&v_hat, |mh, vh| adam.alpha * mh / (vh.sqrt() + adam.epsilon));
    (AdamState { m, v, t }, delta)
}

/// Outcome of one inner Adam run.
#[derive(Debug, Clone)]
pub struct InnerReport {
    /// Best-seen projection along the trajectory (including the start).
    pub projection: Projection,
    /// Adam steps executed.
    pub inner_steps: usize,
    /// Loss at the best-seen projection.
    pub final_loss: f64,
    /// Loss at the starting projection.
    pub start_loss: f64,
}

/// Minimize the contrastive loss over P with S, F fixed.
///
/// Stops when consecutive losses differ by at most `tol_inner` or after
/// `max_inner` steps, and returns the best projection seen (Adam is not
/// monotone, the stopping rule only compares neighbors).
pub fn optimize_projection(
    x: &Matrix,
    p0: &Projection,
    h: &IndicatorMatrix,
    s: &SimilarityMatrix,
    params: &HyperParams,
) -> Result<InnerReport> {
    let kernel = Kernel::from_params(params)?;
    let loss_of = |p: &Projection, step: usize| -> Result<f64> {
        let y = project(x, p)?;
        infonce_loss(&y, h, s, &kernel).map_err(|_| Error::NonFinite {
            context: "inner loss".into(),
            step,
        })
    };
    let start_loss = loss_of(p0, 0)?;
    let mut state = AdamState::zeros(p0.input_dim(), p0.output_dim());
    let mut current = p0.clone();
    let mut best = (p0.clone(), start_loss);
    let mut prev_loss = start_loss;
    let mut steps = 0;
    for t in 1..=params.max_inner {
        let g = gradient(x, &current, h, s, &kernel)
            .map_err(|_| Error::NonFinite { context: "gradient".into(), step: t })?
            .grad;
        let (next_state, delta) = adam_step(&state, &g, &params.adam);
        state = next_state;
        current = Projection::new(current.matrix() - delta)
            .map_err(|_| Error::NonFinite { context: "projection update".into(), step: t })?;
        let loss = loss_of(&current, t)?;
        steps = t;
        if loss < best.1 {
            best = (current.clone(), loss);
        }
        if (prev_loss - loss).abs() <= params.tol_inner {
            break;
        }
        prev_loss = loss;
    }
    Ok(InnerReport {
        projection: best.0,
        inner_steps: steps,
        final_loss: best.1,
        start_loss,
    })
}

/// Per-outer-iteration record of what each substep did to its own
/// objective, for monotonicity checks.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StepTrace {
    /// Tr(FᵀL F) of the previous F on this iteration's Laplacian; absent on
    /// the first iteration (no previous F exists).
    pub spectral_before: Option<f64>,
    /// Tr(FᵀL F) of the fresh eigenvectors.
    pub spectral_after: f64,
    /// Decoupled S objective at the old S under the new distances and γ.
    pub s_objective_before: f64,
    /// Same quantity at the updated S.
    pub s_objective_after: f64,
    /// Contrastive loss where the Adam run started.
    pub inner_start_loss: f64,
    /// Best contrastive loss the Adam run saw.
    pub inner_best_loss: f64,
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub projection: Projection,
    pub similarity: SimilarityMatrix,
    pub spectral: SpectralEmbedding,
    /// Final contrastive loss of each outer iteration (the quantity the
    /// stopping rule compares).
    pub loss_trace: Vec<f64>,
    /// Full objective breakdown at the end of each outer iteration.
    pub breakdowns: Vec<LossBreakdown>,
    /// Adam steps per outer iteration.
    pub inner_steps: Vec<usize>,
    /// Sum of `inner_steps`.
    pub total_adam_steps: usize,
    /// λ actually used at each outer iteration (varies only under the
    /// adaptive schedule).
    pub lambda_trace: Vec<f64>,
    /// Substep monotonicity records, one per outer iteration.
    pub step_trace: Vec<StepTrace>,
    /// Connected components of the final graph.
    pub components: usize,
    pub converged: bool,
    /// Wall-clock seconds spent in `fit`.
    pub wallclock: f64,
}

/// Serializable summary (everything except the matrices).
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitSummary {
    pub dataset: String,
    pub mode: String,
    pub samples: usize,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub loss_trace: Vec<f64>,
    pub breakdowns: Vec<LossBreakdown>,
    pub inner_steps: Vec<usize>,
    pub total_adam_steps: usize,
    pub lambda_trace: Vec<f64>,
    pub components: usize,
    pub converged: bool,
    pub wallclock_s: f64,
}

impl FitReport {
    pub fn summary(&self, dataset: &Dataset, mode: SupervisionMode) -> FitSummary {
        FitSummary {
            dataset: dataset.name().to_string(),
            mode: mode.to_string(),
            samples: dataset.len(),
            input_dim: dataset.dim(),
            embed_dim: self.projection.output_dim(),
            loss_trace: self.loss_trace.clone(),
            breakdowns: self.breakdowns.clone(),
            inner_steps: self.inner_steps.clone(),
            total_adam_steps: self.total_adam_steps,
            lambda_trace: self.lambda_trace.clone(),
            components: self.components,
            converged: self.converged,
            wallclock_s: self.wallclock,
        }
    }

    /// Loss trace as CSV, one outer iteration per row.
    pub fn loss_trace_csv(&self) -> String {
        let mut out = String::from("iteration,loss,contrastive,frobenius,spectral,total,inner_steps,lambda\n");
        for (i, loss) in self.loss_trace.iter().enumerate() {
            let b = &self.breakdowns[i];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                loss,
                b.contrastive,
                b.frobenius,
                b.spectral,
                b.total,
                self.inner_steps[i],
                self.lambda_trace[i],
            ));
        }
        out
    }
}

/// Top-d eigenvectors of the feature covariance, deterministic signs.
pub fn pca_projection(x: &Matrix, d: usize) -> Result<Projection> {
    let n = x.ncols();
    let dim = x.nrows();
    if d > dim {
        return Err(Error::InvalidHyperParams(format!("PCA dimension {d} exceeds input dim {dim}")));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = Matrix::zeros(dim, dim);
    cov.gemm(1.0 / n as f64, &centered, &centered.transpose(), 0.0);
    let eig = nalgebra::SymmetricEigen::try_new(cov, f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure { n: dim })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut p = Matrix::zeros(dim, d);
    for (col, &idx) in order[..d].iter().enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let mut pivot = 0;
        for r in 1..dim {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        if v[pivot] < 0.0 {
            v = -v;
        }
        p.set_column(col, &v);
    }
    Projection::new(p)
}

/// Seeded random orthonormal columns via QR.
pub fn random_projection(dim: usize, d: usize, seed: u64) -> Result<Projection> {
    let mut rng = crate::rng::from_seed(seed);
    let g = Matrix::from_fn(dim, d, |_, _| {
        rand::Rng::sample(&mut rng, rand_distr::StandardNormal)
    });
    Projection::new(g.qr().q())
}

/// Run the full alternation on a dataset.
///
/// Supervised mode forces λ = 0. Everything is deterministic given the
/// seed; the seed is only consumed at all when `random_init` is set.
pub fn fit(dataset: &Dataset, mode: SupervisionMode, params: &HyperParams) -> Result<FitReport> {
    let start = Instant::now();
    let params = params.for_mode(mode);
    params.validate(dataset.len(), dataset.dim())?;
    dataset.check_mode(mode)?;
    let x = dataset.x();
    let h = build_indicator(dataset, mode)?;
    let kernel = Kernel::from_params(&params)?;

    let mut p = if params.random_init {
        random_projection(dataset.dim(), params.d, params.seed)?
    } else {
        pca_projection(x, params.d)?
    };
    let mut s = crate::graph::initial_similarity(x, &h, params.k)?;
    let mut prev_f: Option<SpectralEmbedding> = None;
    let mut lambda = params.lambda;

    let mut loss_trace = Vec::new();
    let mut breakdowns = Vec::new();
    let mut inner_steps = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut step_trace = Vec::new();
    let mut converged = false;

    for _outer in 0..params.max_outer {
        // (1) spectral step on the current graph
        let lap = laplacian(&s)?;
        let f = update_spectral(&lap, params.c)?;
        let spectral_before = prev_f
            .as_ref()
            .map(|pf| (pf.matrix().transpose() * lap.matrix() * pf.matrix()).trace());
        let spectral_after = (f.matrix().transpose() * lap.matrix() * f.matrix()).trace();

        // (2) closed-form S step under the live λ
        let y = project(x, &p)?;
        let d = pairwise_distances(&y, &f, &h, &kernel, lambda)?;
        let s_new = update_similarity_from_distances(&d, &h, params.k)?;
        let s_objective_before = s_subproblem_value(&d, s.matrix(), s_new.row_gamma());
        let s_objective_after = s_subproblem_value(&d, s_new.matrix(), s_new.row_gamma());
        s = s_new;

        // (3) Adam descent on P against the fresh graph
        let mut inner_params = params.clone();
        inner_params.lambda = lambda;
        let inner = optimize_projection(x, &p, &h, &s, &inner_params)?;
        p = inner.projection.clone();

        step_trace.push(StepTrace {
            spectral_before,
            spectral_after,
            s_objective_before,
            s_objective_after,
            inner_start_loss: inner.start_loss,
            inner_best_loss: inner.final_loss,
        });
        inner_steps.push(inner.inner_steps);
        lambda_trace.push(lambda);
        loss_trace.push(inner.final_loss);

        let y_now = project(x, &p)?;
        breakdowns.push(total_loss(&y_now, &h, &s, &f, &inner_params)?);

        if params.adaptive_lambda && lambda > 0.0 {
            let comps = connected_components(&s, COMPONENT_EPS);
            if comps < params.c {
                lambda *= 2.0;
            } else if comps > params.c {
                lambda /= 2.0;
            }
        }
        prev_f = Some(f);

        let t = loss_trace.len();
        if t >= 2 && (loss_trace[t - 1] - loss_trace[t - 2]).abs() <= params.tol_outer {
            converged = true;
            break;
        }
    }

    let spectral = prev_f.expect("at least one outer iteration runs");
    let components = connected_components(&s, COMPONENT_EPS);
    let total_adam_steps = inner_steps.iter().sum();
    Ok(FitReport {
        projection: p,
        similarity: s,
        spectral,
        loss_trace,
        breakdowns,
        inner_steps,
        total_adam_steps,
        lambda_trace,
        step_trace,
        components,
        converged,
        wallclock: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Model artifact
// ---------------------------------------------------------------------------

/// File magic for serialized models.
pub const MODEL_MAGIC: &[u8; 7] = b"CLFEFA1";

/// Serialize a projection and its hyperparameters.
///
/// Layout: the 7 magic bytes, `D` and `d` as little-endian u32, the D×d
/// projection row-major as little-endian f64, then UTF-8 `key=value` lines
/// with the hyperparameters (floats printed in round-trip form).
pub fn save_model(path: &Path, p: &Projection, params: &HyperParams) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(MODEL_MAGIC)?;
    file.write_all(&(p.input_dim() as u32).to_le_bytes())?;
    file.write_all(&(p.output_dim() as u32).to_le_bytes())?;
    for r in 0..p.input_dim() {
        for c in 0..p.output_dim() {
            file.write_all(&p.matrix()[(r, c)].to_le_bytes())?;
        }
    }
    let mut text = String::new();
    text.push_str(&format!("sigma={}\n", params.sigma));
    text.push_str(&format!("lambda={}\n", params.lambda));
    text.push_str(&format!("k={}\n", params.k));
    text.push_str(&format!("c={}\n", params.c));
    text.push_str(&format!("d={}\n", params.d));
    text.push_str(&format!("alpha={}\n", params.adam.alpha));
    text.push_str(&format!("beta1={}\n", params.adam.beta1));
    text.push_str(&format!("beta2={}\n", params.adam.beta2));
    text.push_str(&format!("epsilon={}\n", params.adam.epsilon));
    text.push_str(&format!("tol_inner={}\n", params.tol_inner));
    text.push_str(&format!("tol_outer={}\n", params.tol_outer));
    text.push_str(&format!("max_inner={}\n", params.max_inner));
    text.push_str(&format!("max_outer={}\n", params.max_outer));
    text.push_str(&format!("seed={}\n", params.seed));
    text.push_str(&format!("include_self_softmax={}\n", params.include_self_softmax));
    text.push_str(&format!("adaptive_lambda={}\n", params.adaptive_lambda));
    text.push_str(&format!("random_init={}\n", params.random_init));
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Read back what [`save_model`] wrote.
pub fn load_model(path: &Path) -> Result<(Projection, HyperParams)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 15 {
        return Err(Error::BadModelFile("file shorter than header".into()));
    }
    if &bytes[..7] != MODEL_MAGIC {
        return Err(Error::BadModelFile(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[..7.min(bytes.len())],
            MODEL_MAGIC
        )));
    }
    let dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let matrix_bytes = dim
        .checked_mul(d)
        .and_then(|e| e.checked_mul(8))
        .ok_or_else(|| Error::BadModelFile("projection shape overflows".into()))?;
    if bytes.len() < 15 + matrix_bytes {
        return Err(Error::TruncatedPayload { expected: 15 + matrix_bytes, got: bytes.len() });
    }
    let mut p = Matrix::zeros(dim, d);
    let mut offset = 15;
    for r in 0..dim {
        for c in 0..d {
            p[(r, c)] = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
            offset += 8;
        }
    }
    let text = std::str::from_utf8(&bytes[offset..])
        .map_err(|_| Error::BadModelFile("hyperparameter block is not UTF-8".into()))?;
    let mut params = HyperParams::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::BadModelFile(format!("bad hyperparameter line {line:?}")))?;
        fn field<T: std::str::FromStr>(line: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::BadModelFile(format!("bad value in line {line:?}")))
        }
        match key {
            "sigma" => params.sigma = field(line, value)?,
            "lambda" => params.lambda = field(line, value)?,
            "k" => params.k = field(line, value)?,
            "c" => params.c = field(line, value)?,
            "d" => params.d = field(line, value)?,
            "alpha" => params.adam.alpha = field(line, value)?,
            "beta1" => params.adam.beta1 = field(line, value)?,
            "beta2" => params.adam.beta2 = field(line, value)?,
            "epsilon" => params.adam.epsilon = field(line, value)?,
            "tol_inner" => params.tol_inner = field(line, value)?,
            "tol_outer" => params.tol_outer = field(line, value)?,
            "max_inner" => params.max_inner = field(line, value)?,
            "max_outer" => params.max_outer = field(line, value)?,
            "seed" => params.seed = field(line, value)?,
            "include_self_softmax" => params.include_self_softmax = field(line, value)?,
            "adaptive_lambda" => params.adaptive_lambda = field(line, value)?,
            "random_init" => params.random_init = field(line, value)?,
            other => {
                return Err(Error::BadModelFile(format!("unknown hyperparameter key {other:?}")));
            }
        }
    }
    if params.d != d {
        return Err(Error::BadModelFile(format!(
            "hyperparameter d={} disagrees with stored projection width {d}",
            params.d
        )));
    }
    Ok((Projection::new(p)?, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::make_blobs;
    use approx::assert_abs_diff_eq;

    #[test]
    fn adam_zero_gradient_is_noop() {
        let state = AdamState::zeros(3, 2);
        let g = Matrix::zeros(3, 2);
        let (next, delta) = adam_step(&state, &g, &AdamParams::default());
        assert!(delta.iter().all(|v| *v == 0.0));
        assert_eq!(next.t, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // bias correction makes m̂ = v̂ = 1 after one unit-gradient step
        let adam = AdamParams::default();
        let state = AdamState::zeros(2, 2);
        let g = Matrix::repeat(2, 2, 1.0);
        let (_, delta) = adam_step(&state, &g, &adam);
        for v in delta.iter() {
            assert_abs_diff_eq!(*v, adam.alpha / (1.0 + adam.epsilon), epsilon = 1e-15);
        }
    }

    #[test]
    fn adam_matches_scalar_recurrence() {
        let adam = AdamParams::default();
        let mut state = AdamState::zeros(1, 1);
        let g = Matrix::repeat(1, 1, 0.37);
        let mut p = 1.0;
        for _ in 0..2 {
            let (next, delta) = adam_step(&state, &g, &adam);
            state = next;
            p -= delta[(0, 0)];
        }
        // hand-unrolled recurrence
        let (b1, b2, a, e) = (adam.beta1, adam.beta2, adam.alpha, adam.epsilon);
        let gv: f64 = 0.37;
        let mut m = 0.0;
        let mut v = 0.0;
        let mut expect = 1.0;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * gv;
            v = b2 * v + (1.0 - b2) * gv * gv;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            expect -= a * mh / (vh.sqrt() + e);
        }
        assert_abs_diff_eq!(p, expect, epsilon = 1e-15);
        assert_eq!(state.t, 2);
    }

    fn tiny_instance() -> (Matrix, Projection, IndicatorMatrix, SimilarityMatrix, HyperParams) {
        let mut rng = crate::rng::from_seed(21);
        let n = 10;
        let x = Matrix::from_fn(4, n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let p = pca_projection(&x, 2).unwrap();
        let h = IndicatorMatrix::from_matrix(Matrix::repeat(n, n, 1.0));
        let mut s = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        for mut row in s.row_iter_mut() {
            let total: f64 = row.iter().sum();
            row /= total;
        }
        let params = HyperParams { k: 3, d: 2, c: 2, max_inner: 50, ..Default::default() };
        (x, p, h, SimilarityMatrix::from_matrix(s), params)
    }

    #[test]
    fn inner_loop_stops_immediately_on_flat_loss() {
        // no positives anywhere: the loss is constant zero
        let (x, p, _, s, params) = tiny_instance();
        let h = IndicatorMatrix::from_matrix(Matrix::zeros(10, 10));
        let report = optimize_projection(&x, &p, &h, &s, &params).unwrap();
        assert_eq!(report.inner_steps, 1);
        assert_eq!(report.projection.matrix(), p.matrix());
    }

    #[test]
    fn inner_loop_never_worsens_best_loss() {
        let (x, p, h, s, params) = tiny_instance();
        let report = optimize_projection(&x, &p, &h, &s, &params).unwrap();
        assert!(report.final_loss <= report.start_loss + 1e-9);
    }

    #[test]
    fn inner_loop_zero_cap_returns_start() {
        let (x, p, h, s, mut params) = tiny_instance();
        params.max_inner = 0;
        let report = optimize_projection(&x, &p, &h, &s, &params).unwrap();
        assert_eq!(report.inner_steps, 0);
        assert_eq!(report.projection.matrix(), p.matrix());
        assert_eq!(report.final_loss, report.start_loss);
    }

    fn blob_params() -> HyperParams {
        HyperParams { k: 6, c: 3, d: 2, ..Default::default() }
    }

    #[test]
    fn fit_three_blobs_finds_three_components() {
        let ds = make_blobs(30, 3, 5, 10.0, 0.5, 7).unwrap();
        let report = fit(&ds, SupervisionMode::Unsupervised, &blob_params()).unwrap();
        assert!(report.converged);
        assert_eq!(report.components, 3);
    }

    #[test]
    fn fit_supervised_has_no_spectral_term() {
        let ds = make_blobs(8, 3, 5, 8.0, 0.5, 3).unwrap();
        let report = fit(&ds, SupervisionMode::Supervised, &blob_params()).unwrap();
        for b in &report.breakdowns {
            assert_eq!(b.spectral, 0.0);
        }
        for l in &report.lambda_trace {
            assert_eq!(*l, 0.0);
        }
    }

    #[test]
    fn fit_single_outer_iteration_cap() {
        let ds = make_blobs(8, 3, 5, 8.0, 0.5, 3).unwrap();
        let params = HyperParams { max_outer: 1, ..blob_params() };
        let report = fit(&ds, SupervisionMode::Unsupervised, &params).unwrap();
        assert_eq!(report.loss_trace.len(), 1);
        assert!(!report.converged);
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = make_blobs(10, 3, 5, 8.0, 0.5, 9).unwrap();
        let a = fit(&ds, SupervisionMode::Unsupervised, &blob_params()).unwrap();
        let b = fit(&ds, SupervisionMode::Unsupervised, &blob_params()).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.projection.matrix(), b.projection.matrix());
    }

    #[test]
    fn fit_counts_adam_steps() {
        let ds = make_blobs(10, 3, 5, 8.0, 0.5, 9).unwrap();
        let report = fit(&ds, SupervisionMode::Unsupervised, &blob_params()).unwrap();
        assert_eq!(report.total_adam_steps, report.inner_steps.iter().sum::<usize>());
        assert_eq!(report.inner_steps.len(), report.loss_trace.len());
    }

    #[test]
    fn fit_substeps_are_monotone() {
        let ds = make_blobs(10, 3, 5, 8.0, 0.8, 15).unwrap();
        let report = fit(&ds, SupervisionMode::Unsupervised, &blob_params()).unwrap();
        for t in &report.step_trace {
            if let Some(before) = t.spectral_before {
                assert!(t.spectral_after <= before + 1e-9);
            }
            assert!(t.s_objective_after <= t.s_objective_before + 1e-9);
            assert!(t.inner_best_loss <= t.inner_start_loss + 1e-9);
        }
    }

    #[test]
    fn random_init_differs_from_pca_but_is_seeded() {
        let ds = make_blobs(10, 3, 5, 8.0, 0.5, 9).unwrap();
        let params = HyperParams { random_init: true, ..blob_params() };
        let a = fit(&ds, SupervisionMode::Unsupervised, &params).unwrap();
        let b = fit(&ds, SupervisionMode::Unsupervised, &params).unwrap();
        assert_eq!(a.projection.matrix(), b.projection.matrix());
        let pca = fit(&ds, SupervisionMode::Unsupervised, &blob_params()).unwrap();
        assert_ne!(a.projection.matrix(), pca.projection.matrix());
    }

    #[test]
    fn adaptive_lambda_chases_component_target() {
        // three separable blobs but c = 5: the component count stays below
        // the target, so the schedule keeps doubling lambda
        let ds = make_blobs(8, 3, 5, 10.0, 0.3, 2).unwrap();
        let base = HyperParams { k: 4, c: 5, d: 2, lambda: 0.5, max_outer: 4, ..Default::default() };
        let fixed = fit(&ds, SupervisionMode::Unsupervised, &base).unwrap();
        assert!(fixed.lambda_trace.iter().all(|l| *l == 0.5));

        let adaptive = HyperParams { adaptive_lambda: true, ..base };
        let report = fit(&ds, SupervisionMode::Unsupervised, &adaptive).unwrap();
        assert!(
            report.lambda_trace.windows(2).any(|w| w[1] != w[0]),
            "lambda never moved: {:?}",
            report.lambda_trace
        );
    }

    #[test]
    fn model_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.clfefa");
        let mut rng = crate::rng::from_seed(4);
        let p = Projection::new(Matrix::from_fn(5, 3, |_, _| {
            rand::Rng::random_range(&mut rng, -2.0..2.0)
        }))
        .unwrap();
        let params = HyperParams { sigma: 0.125, lambda: 3.5, k: 4, c: 3, d: 3, ..Default::default() };
        save_model(&path, &p, &params).unwrap();
        let (p2, params2) = load_model(&path).unwrap();
        assert_eq!(p.matrix(), p2.matrix());
        assert_eq!(params, params2);
    }

    #[test]
    fn model_file_bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.clfefa");
        std::fs::write(&path, b"NOTAMAGIC_and_some_padding_bytes").unwrap();
        assert_eq!(load_model(&path).unwrap_err().name(), "BadModelFile");
    }
}
