//! Benchmark protocol: repeated stratified splits, fit on the training
//! samples, 1-NN classification in the embedded space, accuracy and the
//! macro recall-rate metric.

use crate::dataset::{Dataset, SupervisionMode, project};
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::trainer::fit;
use crate::Matrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

/// Split protocol: per-class training count, repeat count, base seed, and
/// (semi-supervised only) the fraction of training samples that keep their
/// labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Used only in semi-supervised mode; at least one sample per class
    /// stays labeled.
    pub labeled_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_per_class: 6, repeats: 5, seed: 42, labeled_fraction: 0.5 }
    }
}

/// Per-repeat metrics with their aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub accuracies: Vec<f64>,
    pub recalls: Vec<f64>,
    pub accuracy_mean: f64,
    /// Population standard deviation of the per-repeat accuracies.
    pub accuracy_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    /// Embedding dimension the metrics were computed in.
    pub d: usize,
    /// Classes never predicted, per repeat (their recall terms were 0).
    pub unpredicted_classes: Vec<Vec<usize>>,
}

impl EvalReport {
    /// One CSV row per repeat.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("repeat,accuracy,recall_rate\n");
        for (i, (a, r)) in self.accuracies.iter().zip(self.recalls.iter()).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, a, r));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// k-nearest-neighbor labels for each query column (Euclidean, k = 1 in the
/// benchmark protocol). Distance ties resolve to the smallest training
/// index; vote ties for k > 1 resolve to the label of the nearest tied
/// neighbor.
pub fn knn_predict(
    train_y: &Matrix,
    train_labels: &[usize],
    query_y: &Matrix,
    k: usize,
) -> Result<Vec<usize>> {
    let m = train_y.ncols();
    if m == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if train_labels.len() != m {
        return Err(Error::LengthMismatch { pred: train_labels.len(), truth: m });
    }
    if k < 1 || k > m {
        return Err(Error::InvalidHyperParams(format!("knn k={k} with {m} training samples")));
    }
    if train_y.nrows() != query_y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "knn_predict".into(),
            expected: format!("{} rows", train_y.nrows()),
            got: format!("{} rows", query_y.nrows()),
        });
    }
    let mut out = Vec::with_capacity(query_y.ncols());
    for q in 0..query_y.ncols() {
        let qcol = query_y.column(q);
        if k == 1 {
            let mut best = (f64::INFINITY, 0usize);
            for t in 0..m {
                let d = (qcol - train_y.column(t)).norm_squared();
                if d < best.0 {
                    best = (d, t);
                }
            }
            out.push(train_labels[best.1]);
        } else {
            let mut dists: Vec<(f64, usize)> =
                (0..m).map(|t| ((qcol - train_y.column(t)).norm_squared(), t)).collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut votes: std::collections::BTreeMap<usize, usize> = Default::default();
            for &(_, t) in &dists[..k] {
                *votes.entry(train_labels[t]).or_default() += 1;
            }
            let top = votes.values().max().copied().unwrap();
            let winner = dists[..k]
                .iter()
                .map(|&(_, t)| train_labels[t])
                .find(|l| votes[l] == top)
                .unwrap();
            out.push(winner);
        }
    }
    Ok(out)
}

/// Fraction of exact matches.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Macro recall-rate value plus the classes that were never predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallOutcome {
    pub rate: f64,
    /// Classes c with no sample predicted as c; they contribute 0 to the
    /// average.
    pub unpredicted: Vec<usize>,
}

/// The benchmark's per-class rate: average over classes of
/// `T_c / n_c`, with `T_c` the correct predictions of class c and `n_c`
/// the count *predicted* as c (a precision-style denominator, kept under
/// the protocol's "recall rate" name).
pub fn recall_rate(pred: &[usize], truth: &[usize], class_count: usize) -> Result<RecallOutcome> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if class_count < 1 {
        return Err(Error::InvalidDataset("class_count must be >= 1".into()));
    }
    for &l in pred.iter().chain(truth.iter()) {
        if l < 1 || l > class_count {
            return Err(Error::InvalidDataset(format!("label {l} outside 1..={class_count}")));
        }
    }
    let mut predicted = vec![0usize; class_count + 1];
    let mut correct = vec![0usize; class_count + 1];
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        predicted[p] += 1;
        if p == t {
            correct[p] += 1;
        }
    }
    let mut acc = 0.0;
    let mut unpredicted = Vec::new();
    for c in 1..=class_count {
        if predicted[c] == 0 {
            unpredicted.push(c);
        } else {
            acc += correct[c] as f64 / predicted[c] as f64;
        }
    }
    Ok(RecallOutcome { rate: acc / class_count as f64, unpredicted })
}

/// Seeded stratified split: exactly `train_per_class` training indices per
/// class, everything else test, both sorted ascending.
pub fn stratified_split(
    dataset: &Dataset,
    train_per_class: usize,
    rng: &mut impl rand::Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count() + 1];
    for (i, l) in dataset.labels().iter().enumerate() {
        match l {
            Some(c) => by_class[*c].push(i),
            None => {
                return Err(Error::SplitInfeasible(
                    "evaluation needs every sample labeled".into(),
                ));
            }
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate().skip(1) {
        if members.is_empty() {
            continue;
        }
        if members.len() <= train_per_class {
            return Err(Error::SplitInfeasible(format!(
                "class {class} has {} samples, cannot keep a test sample with train_per_class={train_per_class}",
                members.len()
            )));
        }
        members.shuffle(rng);
        train.extend_from_slice(&members[..train_per_class]);
        test.extend_from_slice(&members[train_per_class..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Hide labels of part of each class's training samples, keeping at least
/// one labeled per class. Errors if nothing would remain unlabeled.
fn semi_supervised_labels(
    train: &Dataset,
    labeled_fraction: f64,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Option<usize>>> {
    if !(0.0..=1.0).contains(&labeled_fraction) {
        return Err(Error::SplitInfeasible(format!(
            "labeled_fraction must lie in [0,1], got {labeled_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); train.class_count() + 1];
    for (i, l) in train.labels().iter().enumerate() {
        if let Some(c) = l {
            by_class[*c].push(i);
        }
    }
    let mut labels = train.labels().to_vec();
    for members in by_class.iter_mut().skip(1) {
        if members.is_empty() {
            continue;
        }
        let keep = ((members.len() as f64 * labeled_fraction).round() as usize)
            .clamp(1, members.len());
        members.shuffle(rng);
        for &i in &members[keep..] {
            labels[i] = None;
        }
    }
    if labels.iter().all(|l| l.is_some()) {
        return Err(Error::SplitInfeasible(
            "labeled_fraction leaves no unlabeled training samples".into(),
        ));
    }
    Ok(labels)
}

/// Run the full protocol: for each repeat, split, fit on the training
/// samples, embed both sides, 1-NN classify, and aggregate.
///
/// Unsupervised and supervised fits vote with every training sample;
/// semi-supervised fits hide `1 − labeled_fraction` of each class during
/// training and only the still-labeled samples vote.
pub fn run_experiment(
    dataset: &Dataset,
    mode: SupervisionMode,
    params: &HyperParams,
    split: &SplitSpec,
) -> Result<EvalReport> {
    if split.repeats < 1 || split.train_per_class < 1 {
        return Err(Error::SplitInfeasible("repeats and train_per_class must be >= 1".into()));
    }
    let repeats: Vec<(f64, f64, Vec<usize>)> = (0..split.repeats)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64, Vec<usize>)> {
            let mut rng = crate::rng::derive(split.seed, r as u64);
            let (train_idx, test_idx) = stratified_split(dataset, split.train_per_class, &mut rng)?;
            let train = dataset.select(&train_idx, format!("{}-train{r}", dataset.name()))?;
            let test = dataset.select(&test_idx, format!("{}-test{r}", dataset.name()))?;

            let (fit_train, voter_mask): (Dataset, Vec<bool>) = match mode {
                SupervisionMode::SemiSupervised => {
                    let labels = semi_supervised_labels(&train, split.labeled_fraction, &mut rng)?;
                    let mask = labels.iter().map(|l| l.is_some()).collect();
                    (train.with_labels(labels)?, mask)
                }
                _ => {
                    let mask = vec![true; train.len()];
                    (train.clone(), mask)
                }
            };

            let mut run_params = params.clone();
            run_params.seed = params.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let report = fit(&fit_train, mode, &run_params)?;

            let train_y = project(train.x(), &report.projection)?;
            let test_y = project(test.x(), &report.projection)?;

            let voter_cols: Vec<usize> =
                (0..train.len()).filter(|&i| voter_mask[i]).collect();
            let voters = train_y.matrix().select_columns(voter_cols.iter());
            let voter_labels: Vec<usize> = voter_cols
                .iter()
                .map(|&i| train.labels()[i].expect("voters are labeled"))
                .collect();

            let pred = knn_predict(&voters, &voter_labels, test_y.matrix(), 1)?;
            let truth: Vec<usize> = test.labels().iter().map(|l| l.unwrap()).collect();
            let acc = accuracy(&pred, &truth)?;
            let rec = recall_rate(&pred, &truth, dataset.class_count())?;
            Ok((acc, rec.rate, rec.unpredicted))
        })
        .collect::<Result<Vec<_>>>()?;

    let accuracies: Vec<f64> = repeats.iter().map(|r| r.0).collect();
    let recalls: Vec<f64> = repeats.iter().map(|r| r.1).collect();
    let unpredicted: Vec<Vec<usize>> = repeats.into_iter().map(|r| r.2).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&accuracies);
    let (recall_mean, recall_std) = mean_std(&recalls);
    Ok(EvalReport {
        accuracies,
        recalls,
        accuracy_mean,
        accuracy_std,
        recall_mean,
        recall_std,
        d: params.d,
        unpredicted_classes: unpredicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::make_blobs;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::Rng;

    #[test]
    fn knn_exact_match_wins() {
        let train = dmatrix![0.0, 5.0, 9.0];
        let pred = knn_predict(&train, &[1, 2, 3], &dmatrix![5.0], 1).unwrap();
        assert_eq!(pred, vec![2]);
    }

    #[test]
    fn knn_tie_takes_lower_index() {
        let train = dmatrix![0.0, 2.0];
        let pred = knn_predict(&train, &[7, 9], &dmatrix![1.0], 1).unwrap();
        assert_eq!(pred, vec![7]);
    }

    #[test]
    fn knn_nearer_prototype() {
        let train = dmatrix![0.0, 10.0];
        let pred = knn_predict(&train, &[1, 2], &dmatrix![4.0], 1).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn knn_empty_training_set() {
        let train = Matrix::zeros(2, 0);
        let q = Matrix::zeros(2, 1);
        assert_eq!(knn_predict(&train, &[], &q, 1).unwrap_err().name(), "EmptyTrainingSet");
    }

    #[test]
    fn knn_matches_brute_force_loop() {
        let mut rng = crate::rng::from_seed(31);
        let train = Matrix::from_fn(3, 20, |_, _| rng.random_range(-5.0..5.0));
        let labels: Vec<usize> = (0..20).map(|_| rng.random_range(1..4usize)).collect();
        let query = Matrix::from_fn(3, 15, |_, _| rng.random_range(-5.0..5.0));
        let pred = knn_predict(&train, &labels, &query, 1).unwrap();
        for q in 0..15 {
            // scalar re-computation with explicit squared distances
            let mut best_t = 0usize;
            let mut best_d = f64::INFINITY;
            for t in 0..20 {
                let mut d = 0.0;
                for r in 0..3 {
                    let diff = query[(r, q)] - train[(r, t)];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best_t = t;
                }
            }
            assert_eq!(pred[q], labels[best_t]);
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[2, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1], &[1, 2]).unwrap_err().name(), "LengthMismatch");
    }

    #[test]
    fn recall_examples() {
        let perfect = recall_rate(&[1, 2, 3], &[1, 2, 3], 3).unwrap();
        assert_eq!(perfect.rate, 1.0);
        assert!(perfect.unpredicted.is_empty());

        let mixed = recall_rate(&[1, 1, 2, 2], &[1, 2, 2, 2], 2).unwrap();
        assert_abs_diff_eq!(mixed.rate, 0.75, epsilon = 1e-15);

        let missing = recall_rate(&[1, 1, 1], &[1, 2, 1], 2).unwrap();
        assert_eq!(missing.unpredicted, vec![2]);
        // class 2 contributes 0: (2/3 + 0) / 2
        assert_abs_diff_eq!(missing.rate, (2.0 / 3.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn metrics_match_confusion_matrix_oracle() {
        let mut rng = crate::rng::from_seed(63);
        for _ in 0..100 {
            let c = rng.random_range(2..6usize);
            let n = rng.random_range(1..40usize);
            let pred: Vec<usize> = (0..n).map(|_| rng.random_range(1..=c)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(1..=c)).collect();
            // independent confusion-matrix computation
            let mut conf = vec![vec![0usize; c + 1]; c + 1];
            for (&p, &t) in pred.iter().zip(truth.iter()) {
                conf[t][p] += 1;
            }
            let acc_oracle =
                (1..=c).map(|k| conf[k][k]).sum::<usize>() as f64 / n as f64;
            let mut rec_oracle = 0.0;
            for class in 1..=c {
                let n_c: usize = (1..=c).map(|t| conf[t][class]).sum();
                if n_c > 0 {
                    rec_oracle += conf[class][class] as f64 / n_c as f64;
                }
            }
            rec_oracle /= c as f64;

            assert_eq!(accuracy(&pred, &truth).unwrap(), acc_oracle);
            assert_eq!(recall_rate(&pred, &truth, c).unwrap().rate, rec_oracle);
        }
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = make_blobs(10, 3, 5, 10.0, 0.5, 3).unwrap();
        let mut rng = crate::rng::from_seed(8);
        let (train, test) = stratified_split(&ds, 4, &mut rng).unwrap();
        assert_eq!(train.len(), 12);
        assert_eq!(test.len(), 18);
        let mut counts = [0usize; 3];
        for &i in &train {
            counts[ds.labels()[i].unwrap() - 1] += 1;
        }
        assert_eq!(counts, [4, 4, 4]);
        for &i in &train {
            assert!(!test.contains(&i));
        }
    }

    #[test]
    fn split_deterministic_per_seed() {
        let ds = make_blobs(10, 3, 5, 10.0, 0.5, 3).unwrap();
        let a = stratified_split(&ds, 4, &mut crate::rng::from_seed(9)).unwrap();
        let b = stratified_split(&ds, 4, &mut crate::rng::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    fn blob_params() -> HyperParams {
        HyperParams { k: 6, c: 3, d: 2, ..Default::default() }
    }

    #[test]
    fn experiment_on_blobs_is_accurate() {
        let ds = make_blobs(30, 3, 5, 10.0, 0.5, 5).unwrap();
        let split = SplitSpec { train_per_class: 10, repeats: 1, ..Default::default() };
        let report = run_experiment(&ds, SupervisionMode::Unsupervised, &blob_params(), &split).unwrap();
        assert!(report.accuracies[0] >= 0.95, "accuracy {}", report.accuracies[0]);
    }

    #[test]
    fn experiment_is_deterministic() {
        let ds = make_blobs(12, 3, 5, 10.0, 0.5, 5).unwrap();
        let split = SplitSpec { train_per_class: 5, repeats: 2, ..Default::default() };
        let a = run_experiment(&ds, SupervisionMode::Unsupervised, &blob_params(), &split).unwrap();
        let b = run_experiment(&ds, SupervisionMode::Unsupervised, &blob_params(), &split).unwrap();
        assert_eq!(a.accuracies, b.accuracies);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn experiment_rejects_exhausting_split() {
        let ds = make_blobs(6, 3, 5, 10.0, 0.5, 5).unwrap();
        let split = SplitSpec { train_per_class: 6, repeats: 1, ..Default::default() };
        let err = run_experiment(&ds, SupervisionMode::Unsupervised, &blob_params(), &split).unwrap_err();
        assert_eq!(err.name(), "SplitInfeasible");
    }

    #[test]
    fn semi_supervised_hides_labels_but_still_works() {
        let ds = make_blobs(12, 3, 5, 10.0, 0.5, 5).unwrap();
        let split = SplitSpec { train_per_class: 6, repeats: 1, labeled_fraction: 0.5, ..Default::default() };
        let report = run_experiment(&ds, SupervisionMode::SemiSupervised, &blob_params(), &split).unwrap();
        assert!(report.accuracies[0] >= 0.9, "accuracy {}", report.accuracies[0]);
    }

    #[test]
    fn report_aggregates_match_lists() {
        let ds = make_blobs(12, 3, 5, 10.0, 0.8, 5).unwrap();
        let split = SplitSpec { train_per_class: 5, repeats: 3, ..Default::default() };
        let report = run_experiment(&ds, SupervisionMode::Unsupervised, &blob_params(), &split).unwrap();
        let (am, astd) = mean_std(&report.accuracies);
        assert_abs_diff_eq!(report.accuracy_mean, am, epsilon = 1e-12);
        assert_abs_diff_eq!(report.accuracy_std, astd, epsilon = 1e-12);
        let (rm, rstd) = mean_std(&report.recalls);
        assert_abs_diff_eq!(report.recall_mean, rm, epsilon = 1e-12);
        assert_abs_diff_eq!(report.recall_std, rstd, epsilon = 1e-12);
    }
}
