//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured numbers.
//!
//! Criterion 6 needs the reference MNIST IDX pair; it looks under
//! `data/mnist/` in the repository root (override with `CLFEFA_MNIST_DIR`)
//! and reports a loud SKIP when the files are absent.

use clfefa::dataset::{Dataset, SupervisionMode};
use clfefa::eval::{SplitSpec, accuracy, recall_rate, run_experiment};
use clfefa::graph::{
    COMPONENT_EPS, SUPPORT_EPS, SimilarityMatrix, connected_components, gamma_for_row, laplacian,
    update_similarity_row, update_spectral,
};
use clfefa::ingest::{load_idx, make_blobs, subsample_and_rescale};
use clfefa::objective::{Kernel, gradient_with_check};
use clfefa::params::HyperParams;
use clfefa::supervision::IndicatorMatrix;
use clfefa::trainer::fit;
use clfefa::{Matrix, rng};
use clfefa_cli::{RunConfig, run_grid};
use rand::Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// Sort-based Euclidean projection onto the probability simplex
/// (cumulative-scan form; the oracle side of criterion 1).
fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut desc: Vec<f64> = v.iter().cloned().filter(|x| x.is_finite()).collect();
    desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (idx, &u) in desc.iter().enumerate() {
        cum += u;
        let candidate = (cum - 1.0) / (idx + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter()
        .map(|&x| if x.is_finite() { (x - tau).max(0.0) } else { 0.0 })
        .collect()
}

#[test]
fn acceptance_1_simplex_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = rng::from_seed(1001);
    let ks = [2usize, 6, 10];
    let mut max_diff: f64 = 0.0;
    for trial in 0..1000 {
        let k = ks[trial % ks.len()];
        let n = rng.random_range(k + 2..=50);
        let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        d[rng.random_range(0..n)] = f64::INFINITY;
        let mut sorted = d.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gamma = gamma_for_row(&sorted, k).unwrap();
        let ours = update_similarity_row(&d, gamma, k).unwrap();
        let target: Vec<f64> = d.iter().map(|v| -v / (2.0 * gamma)).collect();
        let oracle = simplex_project(&target);
        for (a, b) in ours.iter().zip(oracle.iter()) {
            max_diff = max_diff.max((a - b).abs());
        }
        let support = ours.iter().filter(|v| **v > SUPPORT_EPS).count();
        assert_eq!(support, k, "trial {trial}: support {support} != k {k}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        1,
        max_diff <= 1e-8 && elapsed < 5.0,
        &format!("1000 rows: max |ours - projection oracle| = {max_diff:.3e}, support always exact, {elapsed:.2}s"),
    );
}

#[test]
fn acceptance_2_gradient_check() {
    let started = Instant::now();
    let sigmas = [0.1, 1.0, 10.0];
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let mut rng = rng::from_seed(2000 + trial);
        let (n, dim, d) = (20, 10, 3);
        let x = Matrix::from_fn(dim, n, |_, _| rng.random_range(-1.0..1.0));
        let p = clfefa::dataset::Projection::new(Matrix::from_fn(dim, d, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let h = IndicatorMatrix::from_matrix(Matrix::from_fn(n, n, |i, j| {
            if i != j && (i + 2 * j) % 5 == 0 { 0.0 } else { 1.0 }
        }));
        let mut s = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
        for mut row in s.row_iter_mut() {
            let total: f64 = row.iter().sum();
            row /= total;
        }
        let s = SimilarityMatrix::from_matrix(s);
        let kernel = Kernel::new(sigmas[(trial % 3) as usize]).unwrap();
        let check = gradient_with_check(&x, &p, &h, &s, &kernel, 1e-5).unwrap();
        worst = worst.max(check.max_rel_err.unwrap());
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        2,
        worst <= 1e-4 && elapsed < 60.0,
        &format!("50 instances (n=20, D=10, d=3, sigma in {{0.1,1,10}}): max rel err = {worst:.3e}, {elapsed:.2}s"),
    );
}

fn random_block_graph(rng: &mut impl Rng) -> SimilarityMatrix {
    let blocks = rng.random_range(1..=4usize);
    let sizes: Vec<usize> = (0..blocks).map(|_| rng.random_range(2..=8usize)).collect();
    let n: usize = sizes.iter().sum();
    let mut s = Matrix::zeros(n, n);
    let mut start = 0;
    for &size in &sizes {
        for a in 0..size {
            for b in 0..size {
                if a != b {
                    s[(start + a, start + b)] = rng.random_range(0.2..1.0);
                }
            }
        }
        start += size;
    }
    for mut row in s.row_iter_mut() {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row /= total;
        }
    }
    SimilarityMatrix::from_matrix(s)
}

#[test]
fn acceptance_3_spectral_step() {
    let mut rng = rng::from_seed(3003);
    let mut worst_ortho: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    for _ in 0..100 {
        let s = random_block_graph(&mut rng);
        let n = s.len();
        let lap = laplacian(&s).unwrap();
        let c = rng.random_range(1..=n);
        let spec = update_spectral(&lap, c).unwrap();
        let gram = spec.matrix().transpose() * spec.matrix();
        for i in 0..c {
            for j in 0..c {
                let want = if i == j { 1.0 } else { 0.0 };
                worst_ortho = worst_ortho.max((gram[(i, j)] - want).abs());
            }
        }
        let trace = (spec.matrix().transpose() * lap.matrix() * spec.matrix()).trace();
        let eig_sum: f64 = spec.eigenvalues().iter().sum();
        worst_trace = worst_trace.max((trace - eig_sum).abs());

        let full = update_spectral(&lap, n).unwrap();
        let zero_mult = full.eigenvalues().iter().filter(|v| v.abs() < 1e-8).count();
        assert_eq!(
            connected_components(&s, COMPONENT_EPS),
            zero_mult,
            "component count disagrees with zero-eigenvalue multiplicity"
        );
    }
    report(
        3,
        worst_ortho <= 1e-10 && worst_trace <= 1e-8,
        &format!("100 random graphs: max |FᵀF - I| = {worst_ortho:.3e}, max |Tr - Σλ| = {worst_trace:.3e}, components = zero multiplicity"),
    );
}

#[test]
fn acceptance_4_alternation_monotonicity() {
    let mut violations = 0usize;
    let mut fits = 0usize;
    for trial in 0..20u64 {
        let mut trial_rng = rng::from_seed(4000 + trial);
        let classes = trial_rng.random_range(2..=4usize);
        let per_class = trial_rng.random_range(8..=14usize);
        let dim = classes + trial_rng.random_range(2..=4usize);
        let ds = make_blobs(per_class, classes, dim, 6.0, 1.0, 4100 + trial).unwrap();
        let mode = if trial % 2 == 0 {
            SupervisionMode::Unsupervised
        } else {
            SupervisionMode::SemiSupervised
        };
        let ds = if mode == SupervisionMode::SemiSupervised {
            // hide every other label
            let labels = ds
                .labels()
                .iter()
                .enumerate()
                .map(|(i, l)| if i % 2 == 0 { *l } else { None })
                .collect();
            ds.with_labels(labels).unwrap()
        } else {
            ds
        };
        let params = HyperParams {
            k: trial_rng.random_range(3..=6),
            c: classes,
            d: 2,
            lambda: [0.1, 1.0, 10.0][(trial % 3) as usize],
            sigma: [0.5, 1.0, 2.0][(trial % 3) as usize],
            max_outer: 8,
            seed: trial,
            ..Default::default()
        };
        let fit_report = fit(&ds, mode, &params).unwrap();
        fits += 1;
        for t in &fit_report.step_trace {
            if let Some(before) = t.spectral_before {
                if t.spectral_after > before + 1e-9 {
                    violations += 1;
                }
            }
            if t.s_objective_after > t.s_objective_before + 1e-9 {
                violations += 1;
            }
            if t.inner_best_loss > t.inner_start_loss + 1e-9 {
                violations += 1;
            }
        }
    }
    report(
        4,
        violations == 0 && fits == 20,
        &format!("20 random fits: {violations} substep monotonicity violations (slack 1e-9)"),
    );
}

#[test]
fn acceptance_5_synthetic_end_to_end() {
    let started = Instant::now();
    let ds = make_blobs(30, 3, 5, 10.0, 0.5, 55).unwrap();
    let params = HyperParams { k: 6, c: 3, d: 2, ..Default::default() };
    let fit_report = fit(&ds, SupervisionMode::Unsupervised, &params).unwrap();
    let split = SplitSpec { train_per_class: 10, repeats: 5, seed: 55, labeled_fraction: 0.5 };
    let eval = run_experiment(&ds, SupervisionMode::Unsupervised, &params, &split).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    report(
        5,
        fit_report.converged
            && fit_report.components == 3
            && eval.accuracy_mean >= 0.95
            && elapsed < 30.0,
        &format!(
            "3-blob fit: converged={}, components={}, 1-NN accuracy {:.4}±{:.4} over 5 repeats, {elapsed:.2}s",
            fit_report.converged, fit_report.components, eval.accuracy_mean, eval.accuracy_std
        ),
    );
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("CLFEFA_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let ok = dir.join("t10k-images-idx3-ubyte").exists() && dir.join("t10k-labels-idx1-ubyte").exists();
    ok.then_some(dir)
}

fn mnist_subset(dir: &Path) -> Dataset {
    let ds = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
    .expect("reference IDX pair parses");
    assert_eq!((ds.len(), ds.dim()), (10_000, 784));
    let sub = subsample_and_rescale(&ds, 2000, 16, 42).expect("subsample");
    assert_eq!((sub.len(), sub.dim()), (2000, 256));
    sub
}

fn mnist_grid_config(mode: SupervisionMode) -> RunConfig {
    RunConfig {
        mode,
        params: HyperParams { c: 10, d: 30, seed: 42, ..Default::default() },
        split: SplitSpec { train_per_class: 6, repeats: 5, seed: 42, labeled_fraction: 0.5 },
        grid_sigma: vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
        grid_lambda: vec![1e-4, 1e-2, 1.0, 1e2, 1e4],
        grid_k: vec![2, 6, 10],
        grid_d: vec![30],
        ..RunConfig::default()
    }
}

/// Criterion 6 is a reproduction target with bars of 0.75 (unsupervised)
/// and 0.80 (supervised) mean accuracy at the best grid cell. The faithful
/// protocol — every fit sees only the 60 training samples of its split —
/// plateaus at the PCA-initialization baseline (≈0.69 here): with 60
/// samples the contrastive descent overfits the projection and the
/// adaptively learned graph cannot exceed the purity of the embedding it
/// reads. The test runs the full protocol and reports the measured values;
/// it is expected to FAIL until that gap is closed. The reference results
/// this criterion tracks are consistent with representation learning over
/// the whole 2000-sample pool (transductive), which the split protocol
/// here deliberately does not allow.
#[test]
fn acceptance_6_mnist_subset_reproduction() {
    let Some(dir) = mnist_dir() else {
        println!(
            "ACCEPTANCE 6: SKIP — MNIST IDX pair not found; place t10k-images-idx3-ubyte and \
             t10k-labels-idx1-ubyte under data/mnist/ or set CLFEFA_MNIST_DIR"
        );
        return;
    };
    let started = Instant::now();
    let dataset = mnist_subset(&dir);

    let unsup = run_grid(&mnist_grid_config(SupervisionMode::Unsupervised), &dataset).unwrap();
    let u_best = unsup.iter().find(|c| c.best).unwrap();

    let mut sup_config = mnist_grid_config(SupervisionMode::Supervised);
    sup_config.grid_lambda = vec![0.0];
    let sup = run_grid(&sup_config, &dataset).unwrap();
    let s_best = sup.iter().find(|c| c.best).unwrap();

    let elapsed = started.elapsed().as_secs_f64();
    report(
        6,
        u_best.accuracy_mean >= 0.75 && s_best.accuracy_mean >= 0.80 && elapsed <= 1800.0,
        &format!(
            "MNIST 2000@16x16, 6/class, 5 repeats: unsupervised best {:.4}±{:.4} (sigma={}, lambda={}, k={}), \
             supervised best {:.4}±{:.4} (sigma={}, k={}), {:.0}s",
            u_best.accuracy_mean,
            u_best.accuracy_std,
            u_best.sigma,
            u_best.lambda,
            u_best.k,
            s_best.accuracy_mean,
            s_best.accuracy_std,
            s_best.sigma,
            s_best.k,
            elapsed
        ),
    );
}

#[test]
fn acceptance_7_metric_oracles() {
    let mut rng = rng::from_seed(7007);
    for _ in 0..1000 {
        let c = rng.random_range(2..=8usize);
        let n = rng.random_range(1..=60usize);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(1..=c)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(1..=c)).collect();
        // independent confusion-matrix computation
        let mut conf = vec![vec![0usize; c + 1]; c + 1];
        for (&p, &t) in pred.iter().zip(truth.iter()) {
            conf[t][p] += 1;
        }
        let acc_oracle = (1..=c).map(|k| conf[k][k]).sum::<usize>() as f64 / n as f64;
        let mut rec_oracle = 0.0;
        for class in 1..=c {
            let predicted: usize = (1..=c).map(|t| conf[t][class]).sum();
            if predicted > 0 {
                rec_oracle += conf[class][class] as f64 / predicted as f64;
            }
        }
        rec_oracle /= c as f64;

        assert_eq!(accuracy(&pred, &truth).unwrap(), acc_oracle);
        assert_eq!(recall_rate(&pred, &truth, c).unwrap().rate, rec_oracle);
    }
    report(7, true, "accuracy and recall match the confusion-matrix oracle exactly on 1000 random vectors");
}

#[test]
fn acceptance_8_determinism_of_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
data.source = blobs
blobs.n_per_class = 15
blobs.classes = 3
blobs.dim = 5
blobs.separation = 10
blobs.noise_std = 0.8
blobs.seed = 3
mode = unsupervised
k = 6
c = 3
d = 2
split.train_per_class = 6
split.repeats = 3
";
    let cfg_path = dir.path().join("run.config");
    std::fs::write(&cfg_path, config).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = Command::new(env!("CARGO_BIN_EXE_clfefa"))
            .args(["evaluate", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .expect("binary runs");
        assert!(status.success());
    }
    let csv_a = std::fs::read(out_a.join("eval_report.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("eval_report.csv")).unwrap();
    let json_a = std::fs::read(out_a.join("eval_report.json")).unwrap();
    let json_b = std::fs::read(out_b.join("eval_report.json")).unwrap();
    report(
        8,
        csv_a == csv_b && json_a == json_b,
        "two cmd_evaluate runs with the same config and seed produce byte-identical reports",
    );
}
