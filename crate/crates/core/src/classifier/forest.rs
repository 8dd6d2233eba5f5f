//! Bagged forests: training, voting and model persistence.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{apply_normalization, schema_hash, Dataset};
use crate::pnm::write_atomic;

use super::tree::{grow_tree, seeded_rng, to_columns, TreeNode};
use super::{ClassTag, ClassifierError};

/// Weka 3.6 RandomForest-style default: floor(log2(k) + 1) features per node.
pub fn default_feature_subset(n_features: usize) -> usize {
    (((n_features as f64).log2() + 1.0).floor() as usize).clamp(1, n_features.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features drawn per node; `None` uses [`default_feature_subset`].
    pub feature_subset: Option<usize>,
    pub seed: u64,
    pub min_leaf: usize,
    /// When false every tree sees the full dataset (a single unbagged tree
    /// with `n_trees` = 1 is the plain decision-tree baseline).
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 10, feature_subset: None, seed: 0, min_leaf: 1, bootstrap: true }
    }
}

/// A trained one-vs-rest forest bound to its feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub trained_class: ClassTag,
    pub feature_names: Vec<String>,
    pub schema_hash: String,
    pub config: ForestConfig,
    /// Min-max ranges when the training data was normalized; replayed on
    /// every vector scored by this forest.
    pub normalization: Option<Vec<(f64, f64)>>,
}

impl Forest {
    /// Vote fraction in [0, 1]; the boolean label is `score >= 0.5`.
    pub fn score(&self, features: &[f64]) -> f64 {
        assert_eq!(
            features.len(),
            self.feature_names.len(),
            "feature count mismatch against the trained schema"
        );
        let positives = match &self.normalization {
            None => self.trees.iter().filter(|t| t.predict(features)).count(),
            Some(ranges) => {
                let mut scaled = features.to_vec();
                apply_normalization(&mut scaled, ranges);
                self.trees.iter().filter(|t| t.predict(&scaled)).count()
            }
        };
        positives as f64 / self.trees.len() as f64
    }

    pub fn label(&self, features: &[f64]) -> bool {
        self.score(features) >= 0.5
    }
}

/// Fraction of trees voting positive for this vector.
pub fn predict_score(forest: &Forest, features: &[f64]) -> f64 {
    forest.score(features)
}

pub(crate) struct TrainingData {
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl TrainingData {
    pub fn from_dataset(dataset: &Dataset, class: ClassTag) -> Result<Self, ClassifierError> {
        if dataset.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        Ok(Self {
            columns: to_columns(&dataset.samples, dataset.n_features()),
            labels: dataset
                .samples
                .iter()
                .map(|s| s.labels[class.label_index()])
                .collect(),
        })
    }
}

/// Grows the forest: tree i trains on a bootstrap resample drawn from
/// `seed + i` (or on the full dataset when bootstrap is off) and draws its
/// per-node feature subsets from the same stream, so the result is fully
/// determined by (dataset, seed, config) whatever the worker count.
pub fn train_forest(
    dataset: &Dataset,
    class: ClassTag,
    config: &ForestConfig,
) -> Result<Forest, ClassifierError> {
    let data = TrainingData::from_dataset(dataset, class)?;
    let trees = grow_forest_trees(&data, config, None);
    Ok(Forest {
        trees,
        trained_class: class,
        feature_names: dataset.feature_names.clone(),
        schema_hash: schema_hash(&dataset.feature_names),
        config: *config,
        normalization: None,
    })
}

/// Shared tree-growing over an optional row subset (used by the evaluation
/// harness to train on folds without copying the dataset).
pub(crate) fn grow_forest_trees(
    data: &TrainingData,
    config: &ForestConfig,
    rows: Option<&[u32]>,
) -> Vec<TreeNode> {
    let n = rows.map_or(data.labels.len(), <[u32]>::len);
    let subset = config
        .feature_subset
        .unwrap_or_else(|| default_feature_subset(data.columns.len()));
    (0..config.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = seeded_rng(config.seed.wrapping_add(tree_index as u64));
            let mut ids: Vec<u32> = if config.bootstrap {
                (0..n)
                    .map(|_| {
                        let pick = rng.gen_range(0..n);
                        rows.map_or(pick as u32, |r| r[pick])
                    })
                    .collect()
            } else {
                rows.map_or_else(|| (0..n as u32).collect(), <[u32]>::to_vec)
            };
            grow_tree(
                &data.columns,
                &data.labels,
                &mut ids,
                &mut rng,
                subset,
                config.min_leaf.max(1),
            )
        })
        .collect()
}

/// Trains a single tree on the full dataset (no bootstrap); the seed drives
/// only the per-node feature subsets.
pub fn train_tree(
    dataset: &Dataset,
    class: ClassTag,
    seed: u64,
    feature_subset: usize,
    min_leaf: usize,
) -> Result<TreeNode, ClassifierError> {
    let data = TrainingData::from_dataset(dataset, class)?;
    let mut rng = seeded_rng(seed);
    let mut ids: Vec<u32> = (0..data.labels.len() as u32).collect();
    Ok(grow_tree(&data.columns, &data.labels, &mut ids, &mut rng, feature_subset, min_leaf.max(1)))
}

/// On-disk model layout; version 1.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    forest: Forest,
}

pub fn save_model(forest: &Forest, path: &Path) -> Result<(), ClassifierError> {
    let file = ModelFile { format_version: 1, forest: forest.clone() };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| ClassifierError::ModelParse(path.display().to_string(), e.to_string()))?;
    write_atomic(path, json.as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Forest, ClassifierError> {
    let text = std::fs::read_to_string(path).map_err(|source| ClassifierError::ModelIo {
        path: path.display().to_string(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| ClassifierError::ModelParse(path.display().to_string(), e.to_string()))?;
    if file.format_version != 1 {
        return Err(ClassifierError::ModelParse(
            path.display().to_string(),
            format!("unsupported format version {}", file.format_version),
        ));
    }
    let expected = schema_hash(&file.forest.feature_names);
    if expected != file.forest.schema_hash {
        return Err(ClassifierError::ModelParse(
            path.display().to_string(),
            "schema hash does not match the stored feature names".into(),
        ));
    }
    Ok(file.forest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PixelSample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    pub(crate) fn dataset_from_rows(rows: Vec<(Vec<f64>, bool)>) -> Dataset {
        let n = rows[0].0.len();
        Dataset {
            feature_names: (0..n).map(|i| format!("f{i}")).collect(),
            samples: rows
                .into_iter()
                .map(|(features, label)| PixelSample {
                    features,
                    labels: [label, false, false],
                })
                .collect(),
            provenance: Vec::new(),
        }
    }

    fn blobs(n: usize, separation: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let rows = (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let center = if positive { separation } else { 0.0 };
                let x: f64 = rng.sample::<f64, _>(normal) + center;
                let y: f64 = rng.sample::<f64, _>(normal) + center;
                (vec![x, y], positive)
            })
            .collect();
        dataset_from_rows(rows)
    }

    #[test]
    fn default_subset_matches_weka_rule() {
        assert_eq!(default_feature_subset(15), 4);
        assert_eq!(default_feature_subset(31), 5);
        assert_eq!(default_feature_subset(2), 2);
        assert_eq!(default_feature_subset(1), 1);
    }

    #[test]
    fn single_unbagged_tree_equals_train_tree() {
        let ds = blobs(200, 2.0, 61);
        let config = ForestConfig {
            n_trees: 1,
            feature_subset: Some(2),
            seed: 9,
            min_leaf: 1,
            bootstrap: false,
        };
        let forest = train_forest(&ds, ClassTag::Epicardial, &config).unwrap();
        let tree = train_tree(&ds, ClassTag::Epicardial, 9, 2, 1).unwrap();
        assert_eq!(forest.trees, vec![tree]);
    }

    #[test]
    fn same_seed_same_forest_bitwise() {
        let ds = blobs(300, 3.0, 62);
        let config = ForestConfig::default();
        let a = train_forest(&ds, ClassTag::Epicardial, &config).unwrap();
        let b = train_forest(&ds, ClassTag::Epicardial, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn unlimited_tree_fits_consistent_training_data() {
        let ds = blobs(400, 1.0, 63); // overlapping blobs, still consistent rows
        let config = ForestConfig {
            n_trees: 1,
            feature_subset: Some(2),
            seed: 0,
            min_leaf: 1,
            bootstrap: false,
        };
        let forest = train_forest(&ds, ClassTag::Epicardial, &config).unwrap();
        let correct = ds
            .samples
            .iter()
            .filter(|s| forest.label(&s.features) == s.labels[0])
            .count();
        assert_eq!(correct, ds.len(), "training accuracy must be 1.0");
    }

    #[test]
    fn scores_are_vote_fractions() {
        let forest = Forest {
            trees: vec![
                TreeNode::Leaf { pos: 1, neg: 0 },
                TreeNode::Leaf { pos: 1, neg: 0 },
                TreeNode::Leaf { pos: 0, neg: 1 },
                TreeNode::Leaf { pos: 1, neg: 0 },
                TreeNode::Leaf { pos: 0, neg: 1 },
                TreeNode::Leaf { pos: 1, neg: 0 },
                TreeNode::Leaf { pos: 1, neg: 0 },
                TreeNode::Leaf { pos: 0, neg: 1 },
                TreeNode::Leaf { pos: 1, neg: 0 },
                TreeNode::Leaf { pos: 1, neg: 0 },
            ],
            trained_class: ClassTag::Epicardial,
            feature_names: vec!["f0".into()],
            schema_hash: schema_hash(&["f0".into()]),
            config: ForestConfig::default(),
            normalization: None,
        };
        assert!((predict_score(&forest, &[0.0]) - 0.7).abs() < 1e-12);
        let all_pos = Forest { trees: vec![TreeNode::Leaf { pos: 1, neg: 0 }; 3], ..forest.clone() };
        assert_eq!(predict_score(&all_pos, &[0.0]), 1.0);
        let all_neg = Forest { trees: vec![TreeNode::Leaf { pos: 0, neg: 1 }; 3], ..forest };
        assert_eq!(predict_score(&all_neg, &[0.0]), 0.0);
    }

    #[test]
    fn model_round_trip_preserves_predictions() {
        let ds = blobs(300, 3.0, 64);
        let forest = train_forest(&ds, ClassTag::Mediastinal, &ForestConfig::default()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&forest, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, forest);
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        for _ in 0..1000 {
            let fv = vec![rng.gen_range(-5.0..8.0), rng.gen_range(-5.0..8.0)];
            assert_eq!(forest.score(&fv), loaded.score(&fv));
        }
    }

    #[test]
    fn corrupted_model_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, b"{ not json").unwrap();
        assert!(matches!(load_model(&path), Err(ClassifierError::ModelParse(..))));
    }

    #[test]
    fn tampered_schema_hash_is_rejected() {
        let ds = blobs(50, 3.0, 66);
        let forest = train_forest(&ds, ClassTag::Epicardial, &ForestConfig::default()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut file = ModelFile { format_version: 1, forest };
        file.forest.schema_hash = "0".repeat(64);
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(load_model(&path), Err(ClassifierError::ModelParse(..))));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let ds = Dataset::default();
        assert!(matches!(
            train_forest(&ds, ClassTag::Epicardial, &ForestConfig::default()),
            Err(ClassifierError::EmptyDataset)
        ));
    }
}
