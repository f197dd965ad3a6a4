//! Balanced sampling, stratified k-fold assignment and fold-wise KNN
//! accuracy.
//!
//! Every random choice comes from a ChaCha8 stream seeded by the caller, so
//! a seed pins the whole evaluation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::gallery::{knn_classify, Gallery, GalleryEntry, KnnError, Metric, NeighborCount};
use crate::net::{LayerId, Scale};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("samples per instance ({per_instance}) exceeds minimum occurrences ({min_occurrences})")]
    BalanceConfig { per_instance: usize, min_occurrences: usize },
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("instance {label:?} has {count} samples, fewer than {folds} folds")]
    InstanceTooSmall { label: String, count: usize, folds: usize },
    #[error("fold assignment covers {assigned} samples but {samples} were given")]
    AssignmentLength { assigned: usize, samples: usize },
    #[error("fold {0} has no test samples")]
    EmptyFold(usize),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error("report line {line}: {reason}")]
    ReportFormat { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub label: String,
    pub frame: u32,
    pub scale: Scale,
    pub layer: LayerId,
    pub values: Vec<f32>,
}

/// Keeps instances with at least `min_occurrences` samples and draws exactly
/// `per_instance` of each without replacement. Output is sorted by label,
/// then by original position.
pub fn balance_dataset(
    samples: &[LabeledSample],
    per_instance: usize,
    min_occurrences: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>, EvalError> {
    if per_instance > min_occurrences {
        return Err(EvalError::BalanceConfig {
            per_instance,
            min_occurrences,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for members in group_by_label(samples).values() {
        if members.len() < min_occurrences {
            continue;
        }
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), per_instance)
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| samples[i].clone()));
    }
    Ok(out)
}

/// Sample indices per label, labels sorted, indices ascending.
fn group_by_label(samples: &[LabeledSample]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.label.as_str()).or_default().push(i);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FoldStrategy {
    /// Each instance's samples shuffled, then dealt round-robin.
    #[default]
    Shuffled,
    /// Each instance's samples sorted by frame and cut into contiguous
    /// blocks, so test frames are not interleaved with gallery frames.
    TemporalBlocks,
}

impl FoldStrategy {
    pub fn name(self) -> &'static str {
        match self {
            FoldStrategy::Shuffled => "stratified-shuffle",
            FoldStrategy::TemporalBlocks => "stratified-temporal",
        }
    }
}

impl FromStr for FoldStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stratified-shuffle" => Ok(FoldStrategy::Shuffled),
            "stratified-temporal" => Ok(FoldStrategy::TemporalBlocks),
            other => Err(format!("unknown fold strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: usize,
    seed: u64,
    strategy: FoldStrategy,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn strategy(&self) -> FoldStrategy {
        self.strategy
    }

    /// Fold index of every sample.
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Wraps a precomputed assignment.
    pub fn from_parts(folds: usize, seed: u64, strategy: FoldStrategy, fold_of: Vec<usize>) -> Result<Self, EvalError> {
        if folds < 2 {
            return Err(EvalError::TooFewFolds(folds));
        }
        if let Some(bad) = fold_of.iter().position(|&f| f >= folds) {
            return Err(EvalError::EmptyFold(fold_of[bad]));
        }
        Ok(Self {
            folds,
            seed,
            strategy,
            fold_of,
        })
    }
}

/// Per-instance shuffled round-robin assignment. Fold sizes within an
/// instance differ by at most one; a running offset spreads remainders
/// across folds.
pub fn stratified_kfold(samples: &[LabeledSample], folds: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    kfold(samples, folds, seed, FoldStrategy::Shuffled)
}

/// Stratified contiguous-in-time folds. `seed` is only echoed.
pub fn temporal_kfold(samples: &[LabeledSample], folds: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    kfold(samples, folds, seed, FoldStrategy::TemporalBlocks)
}

pub fn kfold(samples: &[LabeledSample], folds: usize, seed: u64, strategy: FoldStrategy) -> Result<FoldAssignment, EvalError> {
    if folds < 2 {
        return Err(EvalError::TooFewFolds(folds));
    }
    let groups = group_by_label(samples);
    if let Some((label, members)) = groups.iter().find(|(_, m)| m.len() < folds) {
        return Err(EvalError::InstanceTooSmall {
            label: label.to_string(),
            count: members.len(),
            folds,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; samples.len()];
    let mut offset = 0;
    for members in groups.values() {
        let mut order = members.clone();
        match strategy {
            FoldStrategy::Shuffled => {
                order.shuffle(&mut rng);
                for (pos, &i) in order.iter().enumerate() {
                    fold_of[i] = (offset + pos) % folds;
                }
                offset += order.len();
            }
            FoldStrategy::TemporalBlocks => {
                order.sort_by_key(|&i| (samples[i].frame, i));
                let n = order.len();
                for (pos, &i) in order.iter().enumerate() {
                    fold_of[i] = pos * folds / n;
                }
            }
        }
    }
    Ok(FoldAssignment {
        folds,
        seed,
        strategy,
        fold_of,
    })
}

/// Fold accuracies and their summary, with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n - 1 denominator) of the fold accuracies.
    pub std_accuracy: f64,
    pub k: NeighborCount,
    pub metric: Metric,
    /// `None` when samples come from more than one layer.
    pub layer: Option<LayerId>,
    pub seed: u64,
    pub strategy: FoldStrategy,
    pub samples: usize,
    pub instances: usize,
    pub samples_per_instance: Option<usize>,
    pub min_occurrences: Option<usize>,
}

/// Mean and n-1 standard deviation.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// For each fold, classifies its samples against a gallery of all other
/// samples (kept in input order) and records the fraction labelled
/// correctly. Folds run in parallel.
pub fn evaluate(
    samples: &[LabeledSample],
    assignment: &FoldAssignment,
    k: NeighborCount,
    metric: Metric,
) -> Result<EvalReport, EvalError> {
    if assignment.fold_of.len() != samples.len() {
        return Err(EvalError::AssignmentLength {
            assigned: assignment.fold_of.len(),
            samples: samples.len(),
        });
    }
    let fold_accuracies = (0..assignment.folds)
        .into_par_iter()
        .map(|fold| fold_accuracy(samples, assignment, fold, k, metric))
        .collect::<Result<Vec<f64>, EvalError>>()?;
    let (mean_accuracy, std_accuracy) = mean_and_sample_std(&fold_accuracies);
    let first_layer = samples.first().map(|s| s.layer);
    let layer = first_layer.filter(|l| samples.iter().all(|s| s.layer == *l));
    Ok(EvalReport {
        fold_accuracies,
        mean_accuracy,
        std_accuracy,
        k,
        metric,
        layer,
        seed: assignment.seed,
        strategy: assignment.strategy,
        samples: samples.len(),
        instances: group_by_label(samples).len(),
        samples_per_instance: None,
        min_occurrences: None,
    })
}

fn fold_accuracy(
    samples: &[LabeledSample],
    assignment: &FoldAssignment,
    fold: usize,
    k: NeighborCount,
    metric: Metric,
) -> Result<f64, EvalError> {
    let (test, train): (Vec<usize>, Vec<usize>) = (0..samples.len()).partition(|&i| assignment.fold_of[i] == fold);
    if test.is_empty() {
        return Err(EvalError::EmptyFold(fold));
    }
    let gallery = Gallery::build(train.iter().map(|&i| GalleryEntry {
        label: samples[i].label.clone(),
        values: samples[i].values.clone(),
    }))?;
    let mut correct = 0usize;
    for &i in &test {
        if knn_classify(&samples[i].values, &gallery, k, metric)?.label == samples[i].label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Copy of `samples` with labels permuted by a seeded shuffle.
pub fn shuffle_labels(samples: &[LabeledSample], seed: u64) -> Vec<LabeledSample> {
    let mut labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    samples
        .iter()
        .zip(labels)
        .map(|(s, label)| LabeledSample { label, ..s.clone() })
        .collect()
}

/// Mean accuracy of the same protocol after shuffling labels, averaged over
/// `seeds`. Fold assignment is redrawn per seed from the shuffled labels.
pub fn chance_baseline(
    samples: &[LabeledSample],
    folds: usize,
    k: NeighborCount,
    metric: Metric,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<f64, EvalError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for seed in seeds {
        let shuffled = shuffle_labels(samples, seed);
        let assignment = stratified_kfold(&shuffled, folds, seed)?;
        total += evaluate(&shuffled, &assignment, k, metric)?.mean_accuracy;
        n += 1;
    }
    Ok(total / n.max(1) as f64)
}

const REPORT_HEADER: &str = "# difs evaluation report";

impl EvalReport {
    /// Flat `key=value` text, one entry per line, fixed key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{REPORT_HEADER}");
        let _ = writeln!(s, "format=1");
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "metric={}", self.metric);
        match self.layer {
            Some(l) => {
                let _ = writeln!(s, "layer={l}");
            }
            None => {
                let _ = writeln!(s, "layer=mixed");
            }
        }
        let _ = writeln!(s, "folds={}", self.fold_accuracies.len());
        let _ = writeln!(s, "fold_strategy={}", self.strategy.name());
        let _ = writeln!(s, "seed={}", self.seed);
        if let Some(n) = self.samples_per_instance {
            let _ = writeln!(s, "samples_per_instance={n}");
        }
        if let Some(n) = self.min_occurrences {
            let _ = writeln!(s, "min_occurrences={n}");
        }
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "instances={}", self.instances);
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            let _ = writeln!(s, "fold.{i}.accuracy={a}");
        }
        let _ = writeln!(s, "mean_accuracy={}", self.mean_accuracy);
        let _ = writeln!(s, "std_accuracy={}", self.std_accuracy);
        let _ = writeln!(s, "std_ddof=1");
        s
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| EvalError::ReportFormat {
                line: n + 1,
                reason: "expected key=value".into(),
            })?;
            kv.insert(k, (n + 1, v));
        }
        fn get<T: FromStr>(kv: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<T, EvalError> {
            let (line, v) = kv.get(key).ok_or_else(|| EvalError::ReportFormat {
                line: 0,
                reason: format!("missing key {key}"),
            })?;
            v.parse().map_err(|_| EvalError::ReportFormat {
                line: *line,
                reason: format!("bad value for {key}: {v:?}"),
            })
        }
        let opt = |key: &str| kv.contains_key(key).then(|| get::<usize>(&kv, key)).transpose();
        let folds: usize = get(&kv, "folds")?;
        let fold_accuracies = (0..folds)
            .map(|i| get::<f64>(&kv, &format!("fold.{i}.accuracy")))
            .collect::<Result<Vec<_>, _>>()?;
        let k = NeighborCount::new(get(&kv, "k")?)?;
        let layer = match kv.get("layer") {
            Some((_, "mixed")) => None,
            _ => Some(get(&kv, "layer")?),
        };
        let strategy_line = kv.get("fold_strategy").map(|(l, _)| *l).unwrap_or(0);
        Ok(Self {
            fold_accuracies,
            mean_accuracy: get(&kv, "mean_accuracy")?,
            std_accuracy: get(&kv, "std_accuracy")?,
            k,
            metric: get::<String>(&kv, "metric")?.parse()?,
            layer,
            seed: get(&kv, "seed")?,
            strategy: get::<String>(&kv, "fold_strategy")?
                .parse()
                .map_err(|reason| EvalError::ReportFormat {
                    line: strategy_line,
                    reason,
                })?,
            samples: get(&kv, "samples")?,
            instances: get(&kv, "instances")?,
            samples_per_instance: opt("samples_per_instance")?,
            min_occurrences: opt("min_occurrences")?,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-fold {}NN ({}) accuracy {:.1}% +/- {:.1}% over {} samples, {} instances",
            self.fold_accuracies.len(),
            self.k,
            self.metric,
            self.mean_accuracy * 100.0,
            self.std_accuracy * 100.0,
            self.samples,
            self.instances
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample(label: &str, frame: u32, values: Vec<f32>) -> LabeledSample {
        LabeledSample {
            label: label.into(),
            frame,
            scale: Scale::Medium,
            layer: 29,
            values,
        }
    }

    fn instances(counts: &[usize]) -> Vec<LabeledSample> {
        let mut out = Vec::new();
        for (i, &n) in counts.iter().enumerate() {
            for f in 0..n {
                out.push(sample(&format!("v{i:02}"), f as u32, vec![i as f32, f as f32]));
            }
        }
        out
    }

    /// `instances` clusters, `per` samples each, centroids 1000 apart with
    /// spread 1.
    fn clusters(instances: usize, per: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..instances {
            for f in 0..per {
                let values = (0..8)
                    .map(|d| if d == i % 8 { 1000.0 * (1 + i / 8) as f32 } else { 0.0 } + rng.gen_range(-0.5f32..0.5))
                    .collect();
                out.push(sample(&format!("car_{i}"), f as u32, values));
            }
        }
        out
    }

    #[test]
    fn balance_matches_protocol_sizes() {
        let ds = instances(&[25; 17]);
        assert_eq!(balance_dataset(&ds, 20, 20, 1).unwrap().len(), 340);
        let ds = instances(&[30; 35]);
        assert_eq!(balance_dataset(&ds, 20, 20, 1).unwrap().len(), 700);
    }

    #[test]
    fn balance_drops_rare_instances() {
        let ds = instances(&[19, 20, 40]);
        let out = balance_dataset(&ds, 20, 20, 3).unwrap();
        assert_eq!(out.len(), 40);
        assert!(out.iter().all(|s| s.label != "v00"));
        assert!(balance_dataset(&ds, 21, 20, 3).is_err());
        assert!(balance_dataset(&[], 20, 20, 3).unwrap().is_empty());
    }

    #[test]
    fn balance_output_is_sorted_and_unique() {
        let mut ds = instances(&[30, 30]);
        ds.reverse();
        let out = balance_dataset(&ds, 20, 20, 9).unwrap();
        assert!(out.windows(2).all(|w| w[0].label <= w[1].label));
        for label in ["v00", "v01"] {
            let frames: Vec<u32> = out.iter().filter(|s| s.label == label).map(|s| s.frame).collect();
            let mut dedup = frames.clone();
            dedup.dedup();
            assert_eq!(dedup.len(), 20);
            // original positions ascend, and the input was reversed
            assert!(frames.windows(2).all(|w| w[0] > w[1]));
        }
        assert_eq!(out, balance_dataset(&ds, 20, 20, 9).unwrap());
        assert_ne!(out, balance_dataset(&ds, 20, 20, 10).unwrap());
    }

    #[test]
    fn folds_of_twenty_get_four_each() {
        let ds = instances(&[20; 17]);
        let a = stratified_kfold(&ds, 5, 4).unwrap();
        for fold in 0..5 {
            let test = a.test_indices(fold);
            assert_eq!(test.len(), 68);
            for inst in 0..17 {
                let label = format!("v{inst:02}");
                assert_eq!(test.iter().filter(|&&i| ds[i].label == label).count(), 4);
            }
        }
    }

    #[test]
    fn uneven_instances_stay_within_one() {
        let ds = instances(&[7, 11, 5, 13]);
        for strategy in [FoldStrategy::Shuffled, FoldStrategy::TemporalBlocks] {
            let a = kfold(&ds, 5, 1, strategy).unwrap();
            for inst in 0..4 {
                let label = format!("v{inst:02}");
                let mut sizes = [0usize; 5];
                for (i, s) in ds.iter().enumerate() {
                    if s.label == label {
                        sizes[a.fold_of()[i]] += 1;
                    }
                }
                assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{strategy:?} {sizes:?}");
            }
        }
    }

    #[test]
    fn seeds_change_assignment_deterministically() {
        let ds = instances(&[20; 5]);
        let a = stratified_kfold(&ds, 5, 1).unwrap();
        assert_eq!(a, stratified_kfold(&ds, 5, 1).unwrap());
        assert_ne!(a.fold_of(), stratified_kfold(&ds, 5, 2).unwrap().fold_of());
    }

    #[test]
    fn small_instance_is_named() {
        let ds = instances(&[20, 3]);
        assert_eq!(
            stratified_kfold(&ds, 5, 0),
            Err(EvalError::InstanceTooSmall {
                label: "v01".into(),
                count: 3,
                folds: 5
            })
        );
    }

    #[test]
    fn temporal_blocks_are_contiguous() {
        let ds = instances(&[20]);
        let a = temporal_kfold(&ds, 5, 0).unwrap();
        assert_eq!(a.fold_of()[..8], [0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn separable_clusters_are_perfect() {
        let ds = clusters(3, 20, 1);
        let a = stratified_kfold(&ds, 5, 11).unwrap();
        let r = evaluate(&ds, &a, NeighborCount::ONE, Metric::Manhattan).unwrap();
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.std_accuracy, 0.0);
        assert_eq!((r.samples, r.instances, r.layer), (60, 3, Some(29)));
    }

    #[test]
    fn shuffled_labels_sit_at_chance() {
        let ds = clusters(10, 20, 2);
        let chance = chance_baseline(&ds, 5, NeighborCount::ONE, Metric::Manhattan, 0..20).unwrap();
        assert!((chance - 0.1).abs() <= 0.05, "chance {chance}");
    }

    #[test]
    fn fixture_fold_accuracies_match_query_by_query() {
        // 50 samples, 5 instances, overlapping clusters so some queries miss
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ds: Vec<LabeledSample> = (0..50)
            .map(|i| {
                let inst = i % 5;
                let values = (0..4).map(|d| (inst * d) as f32 * 0.4 + rng.gen_range(-1.0f32..1.0)).collect();
                sample(&format!("id{inst}"), i as u32, values)
            })
            .collect();
        let fold_of: Vec<usize> = (0..50).map(|i| (i * 7 + i / 5) % 5).collect();
        let a = FoldAssignment::from_parts(5, 0, FoldStrategy::Shuffled, fold_of.clone()).unwrap();
        for k in [NeighborCount::ONE, NeighborCount::THREE] {
            let r = evaluate(&ds, &a, k, Metric::Euclidean).unwrap();
            for fold in 0..5 {
                // hand run: brute-force sorted neighbours, majority vote
                let train: Vec<usize> = (0..50).filter(|&i| fold_of[i] != fold).collect();
                let test: Vec<usize> = (0..50).filter(|&i| fold_of[i] == fold).collect();
                let mut correct = 0;
                for &q in &test {
                    let mut d: Vec<(f64, usize)> = train
                        .iter()
                        .enumerate()
                        .map(|(pos, &j)| {
                            let s: f64 = ds[q].values.iter().zip(&ds[j].values).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
                            (s.sqrt(), pos)
                        })
                        .collect();
                    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let top: Vec<&str> = d[..k.get()].iter().map(|&(_, pos)| ds[train[pos]].label.as_str()).collect();
                    let best = top
                        .iter()
                        .max_by_key(|l| (top.iter().filter(|m| m == l).count(), std::cmp::Reverse(top.iter().position(|m| m == *l))))
                        .unwrap();
                    if *best == ds[q].label {
                        correct += 1;
                    }
                }
                let expected = correct as f64 / test.len() as f64;
                assert_eq!(r.fold_accuracies[fold], expected, "k={k} fold {fold}");
            }
            let (mean, _) = mean_and_sample_std(&r.fold_accuracies);
            assert!((r.mean_accuracy - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_and_sample_std(&[0.9, 1.0, 0.8, 1.0, 0.9]);
        assert!((m - 0.92).abs() < 1e-12);
        assert!((s - 0.083_666_002_653_407_55).abs() < 1e-12);
    }

    #[test]
    fn reordering_samples_keeps_accuracy() {
        let ds = clusters(4, 10, 3);
        let a = stratified_kfold(&ds, 5, 8).unwrap();
        let r = evaluate(&ds, &a, NeighborCount::ONE, Metric::Manhattan).unwrap();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let ds2: Vec<_> = order.iter().map(|&i| ds[i].clone()).collect();
        let fold2: Vec<usize> = order.iter().map(|&i| a.fold_of()[i]).collect();
        let a2 = FoldAssignment::from_parts(5, 8, FoldStrategy::Shuffled, fold2).unwrap();
        let r2 = evaluate(&ds2, &a2, NeighborCount::ONE, Metric::Manhattan).unwrap();
        assert_eq!(r.fold_accuracies, r2.fold_accuracies);
    }

    #[test]
    fn report_text_round_trips() {
        let ds = clusters(3, 10, 4);
        let a = stratified_kfold(&ds, 5, 12).unwrap();
        let mut r = evaluate(&ds, &a, NeighborCount::THREE, Metric::Euclidean).unwrap();
        r.samples_per_instance = Some(10);
        r.min_occurrences = Some(10);
        let text = r.to_text();
        assert!(text.contains("mean_accuracy=1\n"));
        assert!(text.contains("metric=euclidean\n"));
        assert_eq!(EvalReport::parse(&text).unwrap(), r);
        assert!(matches!(EvalReport::parse("folds=x"), Err(EvalError::ReportFormat { line: 1, .. })));
    }
}
