//! Per-class random forests over pixel feature vectors.
//!
//! Each of the three classes gets its own bagged set of Gini-split decision
//! trees (one-vs-rest). Predictions are vote fractions; the three binary
//! outcomes are merged under the pericardium priority rule and the masks
//! are finally dilated over fat pixels.

mod evaluate;
mod forest;
mod segment;
mod tree;

pub use evaluate::{evaluate, ClassMetrics, EvalMode, EvalReport};
pub use forest::{
    default_feature_subset, load_model, predict_score, save_model, train_forest, train_tree,
    Forest, ForestConfig,
};
pub use segment::{
    dilate, merge_priority, segment_slice, ClassMask, ForestTrio, ScorePlanes, SegmentationResult,
};
pub use tree::TreeNode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("schema mismatch: model trained on {model}, extractor produces {extractor}")]
    SchemaMismatch { model: String, extractor: String },
    #[error("forest for {0:?} expects {1} features, got {2}")]
    FeatureCountMismatch(ClassTag, usize, usize),
    #[error("{0}-fold split needs at least {0} samples, dataset has {1}")]
    FoldLargerThanDataset(usize, usize),
    #[error("split leaves an empty train or test side ({0} samples)")]
    EmptySplit(usize),
    #[error("model {path}: {source}")]
    ModelIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model {0}: parse error: {1}")]
    ModelParse(String, String),
    #[error(transparent)]
    Metric(#[from] crate::quantify::QuantifyError),
    #[error(transparent)]
    Pnm(#[from] crate::pnm::PnmError),
}

/// The binary class a forest is trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassTag {
    Epicardial,
    Mediastinal,
    Pericardium,
}

impl ClassTag {
    pub const ALL: [ClassTag; 3] = [ClassTag::Epicardial, ClassTag::Mediastinal, ClassTag::Pericardium];

    /// Column of this class in the dataset label triple.
    pub fn label_index(self) -> usize {
        match self {
            ClassTag::Epicardial => 0,
            ClassTag::Mediastinal => 1,
            ClassTag::Pericardium => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassTag::Epicardial => "epicardial",
            ClassTag::Mediastinal => "mediastinal",
            ClassTag::Pericardium => "pericardium",
        }
    }
}

impl std::str::FromStr for ClassTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "epicardial" => Ok(ClassTag::Epicardial),
            "mediastinal" => Ok(ClassTag::Mediastinal),
            "pericardium" => Ok(ClassTag::Pericardium),
            other => Err(format!(
                "unknown class {other:?} (expected epicardial, mediastinal or pericardium)"
            )),
        }
    }
}
