//! Dataset-level evaluation: random 66% split and 10-fold cross-validation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::quantify::{ClassReport, ConfusionMatrix};

use super::forest::{grow_forest_trees, TrainingData};
use super::tree::seeded_rng;
use super::{ClassTag, ClassifierError, ForestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Seeded uniform shuffle, first two thirds train, the rest test.
    Split66,
    /// Seeded 10-fold partition; metrics averaged across folds.
    KFold10,
}

impl EvalMode {
    fn folds(self) -> usize {
        match self {
            EvalMode::Split66 => 1,
            EvalMode::KFold10 => 10,
        }
    }
}

pub type ClassMetrics = ClassReport;

/// Metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class: ClassTag,
    pub mode: EvalMode,
    pub folds: Vec<ClassMetrics>,
    /// Unweighted mean over folds (the fold itself for split66).
    pub mean: ClassMetrics,
    /// Confusion counts pooled over every test fold.
    pub pooled: ConfusionMatrix,
}

/// Trains on the fold complements and scores the held-out rows.
///
/// Everything is derived from the dataset, the config seed and the mode, so
/// repeated runs produce identical reports.
pub fn evaluate(
    dataset: &crate::features::Dataset,
    class: ClassTag,
    config: &ForestConfig,
    mode: EvalMode,
) -> Result<EvalReport, ClassifierError> {
    let data = TrainingData::from_dataset(dataset, class)?;
    let n = dataset.len();

    // the shuffle stream is separate from the tree streams
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut seeded_rng(config.seed ^ 0x73687566_666c65u64));

    let k = mode.folds();
    let mut fold_metrics = Vec::with_capacity(k);
    let mut pooled = ConfusionMatrix::default();
    match mode {
        EvalMode::Split66 => {
            let n_train = n * 2 / 3;
            if n_train == 0 || n_train == n {
                return Err(ClassifierError::EmptySplit(n));
            }
            let (train, test) = order.split_at(n_train);
            let cm = train_and_score(&data, config, config.seed, train, test);
            pooled.add(&cm);
            fold_metrics.push(ClassReport::from_confusion(&cm)?);
        }
        EvalMode::KFold10 => {
            if k > n {
                return Err(ClassifierError::FoldLargerThanDataset(k, n));
            }
            let base = n / k;
            let extra = n % k;
            let mut start = 0;
            for fold in 0..k {
                let size = base + usize::from(fold < extra);
                let test = &order[start..start + size];
                let mut train = Vec::with_capacity(n - size);
                train.extend_from_slice(&order[..start]);
                train.extend_from_slice(&order[start + size..]);
                start += size;
                // every fold gets its own tree seed block
                let fold_seed = config.seed.wrapping_add((fold as u64) << 32);
                let cm = train_and_score(&data, config, fold_seed, &train, test);
                pooled.add(&cm);
                fold_metrics.push(ClassReport::from_confusion(&cm)?);
            }
        }
    }

    let mean = crate::quantify::mean_class_report(&fold_metrics)?;
    Ok(EvalReport { class, mode, folds: fold_metrics, mean, pooled })
}

fn train_and_score(
    data: &TrainingData,
    config: &ForestConfig,
    seed: u64,
    train: &[u32],
    test: &[u32],
) -> ConfusionMatrix {
    let fold_config = ForestConfig { seed, ..*config };
    let trees = grow_forest_trees(data, &fold_config, Some(train));
    let mut cm = ConfusionMatrix::default();
    let mut features = vec![0.0f64; data.columns.len()];
    for &row in test {
        for (slot, column) in features.iter_mut().zip(&data.columns) {
            *slot = column[row as usize];
        }
        let votes = trees.iter().filter(|t| t.predict(&features)).count();
        let predicted = votes as f64 / trees.len() as f64 >= 0.5;
        match (predicted, data.labels[row as usize]) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Dataset, PixelSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: Vec<(Vec<f64>, bool)>) -> Dataset {
        let k = rows[0].0.len();
        Dataset {
            feature_names: (0..k).map(|i| format!("f{i}")).collect(),
            samples: rows
                .into_iter()
                .map(|(features, label)| PixelSample { features, labels: [label, false, false] })
                .collect(),
            provenance: Vec::new(),
        }
    }

    fn separable(n: usize) -> Dataset {
        // a wide margin between the classes keeps every bootstrap threshold
        // inside the gap
        dataset(
            (0..n)
                .map(|i| {
                    let positive = i < n / 2;
                    let v = if positive { i as f64 } else { 1000.0 + i as f64 };
                    (vec![v], positive)
                })
                .collect(),
        )
    }

    fn chance_level(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        dataset(
            (0..n)
                .map(|i| {
                    let features = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                    (features, i % 2 == 0) // balanced labels independent of features
                })
                .collect(),
        )
    }

    #[test]
    fn separable_data_is_perfect_in_both_modes() {
        let ds = separable(600);
        let config = ForestConfig { seed: 3, ..ForestConfig::default() };
        for mode in [EvalMode::Split66, EvalMode::KFold10] {
            let report = evaluate(&ds, ClassTag::Epicardial, &config, mode).unwrap();
            assert_eq!(report.mean.accuracy, 1.0, "{mode:?}");
            assert_eq!(report.folds.len(), mode.folds());
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let ds = chance_level(400, 71);
        let config = ForestConfig { seed: 11, ..ForestConfig::default() };
        let a = evaluate(&ds, ClassTag::Epicardial, &config, EvalMode::KFold10).unwrap();
        let b = evaluate(&ds, ClassTag::Epicardial, &config, EvalMode::KFold10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chance_level_data_scores_near_half() {
        let ds = chance_level(2000, 72);
        let config = ForestConfig { seed: 5, ..ForestConfig::default() };
        let report = evaluate(&ds, ClassTag::Epicardial, &config, EvalMode::Split66).unwrap();
        assert!(
            (report.mean.accuracy - 0.5).abs() <= 0.05,
            "accuracy {}",
            report.mean.accuracy
        );
        assert!(report.mean.kappa.abs() <= 0.1, "kappa {}", report.mean.kappa);
    }

    #[test]
    fn fold_larger_than_dataset_is_rejected() {
        let ds = separable(6);
        let config = ForestConfig::default();
        assert!(matches!(
            evaluate(&ds, ClassTag::Epicardial, &config, EvalMode::KFold10),
            Err(ClassifierError::FoldLargerThanDataset(10, 6))
        ));
    }

    #[test]
    fn pooled_counts_cover_every_sample_once_in_cv() {
        let ds = chance_level(137, 73);
        let config = ForestConfig { n_trees: 3, ..ForestConfig::default() };
        let report = evaluate(&ds, ClassTag::Epicardial, &config, EvalMode::KFold10).unwrap();
        assert_eq!(report.pooled.total(), 137);
    }
}
