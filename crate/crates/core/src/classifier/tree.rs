//! A single Gini-split decision tree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One tree node; leaves carry the training label counts so vote majorities
/// and tie behavior stay inspectable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        pos: u32,
        neg: u32,
    },
}

impl TreeNode {
    /// Walks to a leaf; values strictly below the threshold go left.
    pub fn predict(&self, features: &[f64]) -> bool {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if features[*feature] < *threshold { left } else { right };
                }
                // a tied leaf counts as positive, consistent with the
                // score-threshold tie rule
                TreeNode::Leaf { pos, neg } => return pos >= neg,
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[inline]
fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    let q = 1.0 - p;
    1.0 - p * p - q * q
}

/// Grows a tree on the given sample indices.
///
/// At every node a uniformly random subset of `feature_subset` features is
/// drawn, the best midpoint threshold by Gini gain is taken (ties keep the
/// lowest feature index and smallest threshold), and recursion stops at
/// purity, at `min_leaf`, or when no split gains.
pub(crate) fn grow_tree(
    columns: &[Vec<f64>],
    labels: &[bool],
    indices: &mut [u32],
    rng: &mut ChaCha8Rng,
    feature_subset: usize,
    min_leaf: usize,
) -> TreeNode {
    let total = indices.len();
    let pos = indices.iter().filter(|&&i| labels[i as usize]).count();
    if pos == 0 || pos == total || total < 2 * min_leaf.max(1) {
        return TreeNode::Leaf { pos: pos as u32, neg: (total - pos) as u32 };
    }

    // uniformly random feature subset, scanned in index order so the
    // tie-break is independent of draw order
    let mut subset = rand::seq::index::sample(rng, columns.len(), feature_subset.min(columns.len()))
        .into_vec();
    subset.sort_unstable();

    let parent = gini(pos, total);
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(total);
    for &feature in &subset {
        let column = &columns[feature];
        sorted.clear();
        sorted.extend(indices.iter().map(|&i| (column[i as usize], labels[i as usize])));
        sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut pos_left = 0usize;
        for i in 1..total {
            if sorted[i - 1].1 {
                pos_left += 1;
            }
            if sorted[i].0 <= sorted[i - 1].0 {
                continue; // not a value boundary
            }
            if i < min_leaf || total - i < min_leaf {
                continue;
            }
            let threshold = (sorted[i - 1].0 + sorted[i].0) / 2.0;
            if threshold <= sorted[i - 1].0 {
                continue; // adjacent floats collapsed the midpoint
            }
            let weighted = (i as f64 * gini(pos_left, i)
                + (total - i) as f64 * gini(pos - pos_left, total - i))
                / total as f64;
            let gain = parent - weighted;
            if gain > 1e-12 && best.map_or(true, |(g, ..)| gain > g) {
                best = Some((gain, feature, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return TreeNode::Leaf { pos: pos as u32, neg: (total - pos) as u32 };
    };

    let column = &columns[feature];
    let split_at = stable_partition(indices, |&i| column[i as usize] < threshold);
    let (left_ids, right_ids) = indices.split_at_mut(split_at);
    let left = grow_tree(columns, labels, left_ids, rng, feature_subset, min_leaf);
    let right = grow_tree(columns, labels, right_ids, rng, feature_subset, min_leaf);
    TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
}

/// Stable in-place partition; returns the boundary index.
fn stable_partition(ids: &mut [u32], pred: impl Fn(&u32) -> bool) -> usize {
    let mut left: Vec<u32> = Vec::with_capacity(ids.len());
    let mut right: Vec<u32> = Vec::with_capacity(ids.len());
    for &id in ids.iter() {
        if pred(&id) {
            left.push(id);
        } else {
            right.push(id);
        }
    }
    let boundary = left.len();
    ids[..boundary].copy_from_slice(&left);
    ids[boundary..].copy_from_slice(&right);
    boundary
}

/// Column-major copy of the dataset features.
pub(crate) fn to_columns(samples: &[crate::features::PixelSample], n_features: usize) -> Vec<Vec<f64>> {
    let mut columns = vec![Vec::with_capacity(samples.len()); n_features];
    for sample in samples {
        for (column, &v) in columns.iter_mut().zip(&sample.features) {
            column.push(v);
        }
    }
    columns
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns_of(rows: &[(f64, bool)]) -> (Vec<Vec<f64>>, Vec<bool>) {
        let cols = vec![rows.iter().map(|r| r.0).collect()];
        let labels = rows.iter().map(|r| r.1).collect();
        (cols, labels)
    }

    #[test]
    fn pure_node_becomes_single_leaf() {
        let (cols, labels) = columns_of(&[(1.0, true), (2.0, true), (3.0, true)]);
        let mut ids = vec![0, 1, 2];
        let tree = grow_tree(&cols, &labels, &mut ids, &mut seeded_rng(1), 1, 1);
        assert_eq!(tree, TreeNode::Leaf { pos: 3, neg: 0 });
    }

    #[test]
    fn separable_data_yields_depth_one_split() {
        let rows: Vec<(f64, bool)> = (0..10).map(|i| (i as f64, i < 5)).collect();
        let (cols, labels) = columns_of(&rows);
        let mut ids: Vec<u32> = (0..10).collect();
        let tree = grow_tree(&cols, &labels, &mut ids, &mut seeded_rng(2), 1, 1);
        match &tree {
            TreeNode::Split { feature, threshold, left, right } => {
                assert_eq!(*feature, 0);
                assert!((*threshold - 4.5).abs() < 1e-12);
                assert_eq!(**left, TreeNode::Leaf { pos: 5, neg: 0 });
                assert_eq!(**right, TreeNode::Leaf { pos: 0, neg: 5 });
            }
            other => panic!("expected a split, got {other:?}"),
        }
        for (i, &(v, label)) in rows.iter().enumerate() {
            assert_eq!(tree.predict(&[v]), label, "row {i}");
        }
    }

    #[test]
    fn same_seed_grows_identical_trees() {
        let rows: Vec<(f64, bool)> = (0..40).map(|i| ((i * 7 % 13) as f64, i % 3 == 0)).collect();
        let (cols, labels) = columns_of(&rows);
        let mut a_ids: Vec<u32> = (0..40).collect();
        let mut b_ids = a_ids.clone();
        let a = grow_tree(&cols, &labels, &mut a_ids, &mut seeded_rng(5), 1, 1);
        let b = grow_tree(&cols, &labels, &mut b_ids, &mut seeded_rng(5), 1, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn min_leaf_limits_split_granularity() {
        let rows: Vec<(f64, bool)> = (0..8).map(|i| (i as f64, i == 0)).collect();
        let (cols, labels) = columns_of(&rows);
        let mut ids: Vec<u32> = (0..8).collect();
        // min_leaf 4 forbids carving off the single positive
        let tree = grow_tree(&cols, &labels, &mut ids, &mut seeded_rng(3), 1, 4);
        assert!(tree.depth() <= 2);
        if let TreeNode::Split { left, right, .. } = &tree {
            for child in [left.as_ref(), right.as_ref()] {
                if let TreeNode::Leaf { pos, neg } = *child {
                    assert!(pos + neg >= 4);
                }
            }
        }
    }

    #[test]
    fn tied_leaf_predicts_positive() {
        let leaf = TreeNode::Leaf { pos: 2, neg: 2 };
        assert!(leaf.predict(&[0.0]));
    }
}
