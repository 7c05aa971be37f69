//! Bagged ensemble of CART decision trees over meta-features.
//!
//! Each of the (default) 100 trees is fit on a bootstrap resample of the
//! rows with a per-tree random feature subset; prediction is the majority
//! vote of the trees' leaf classes. Feature importance sums, per feature,
//! each split's change in the tree-level impurity (the node's sample
//! fraction times its impurity decrease), normalized per tree by its
//! branch-node count and averaged over trees.
//!
//! Determinism contract: identical (data, seed, params) produce a
//! bit-identical serialized model regardless of fitting parallelism. All
//! ties — split scores, leaf classes, and ensemble votes — resolve toward
//! the lower feature index / earlier label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector48, FEATURE_COUNT};
use crate::signal::PostureLabel;
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("feature rows and labels differ in length: {rows} vs {labels}")]
    DimensionMismatch { rows: usize, labels: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature subset is empty")]
    EmptyFeatureSubset,
    #[error("label {0} is not in the declared label set")]
    UnknownLabel(PostureLabel),
    #[error("model has no fitted trees")]
    UnfittedModel,
    #[error("model (de)serialization failed: {0}")]
    Persist(#[from] serde_json::Error),
}

/// Ensemble hyperparameters. Defaults follow the published setup where
/// stated (100 trees); depth, leaf size, and subset size are this
/// artifact's documented choices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per tree (not per split); ceil(sqrt(48)) = 7.
    pub feature_subset_size: usize,
    /// Bootstrap resampling of rows; disable to make all trees identical.
    pub bootstrap: bool,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 1,
            feature_subset_size: 7,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Node {
    Split {
        /// 0-based slot into the 48-feature vector.
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u64>,
    },
}

/// One CART tree: greedy Gini splits, midpoint thresholds, grown until
/// purity, min-leaf, or max-depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    seed: u64,
    /// Summed impurity decrease per feature slot over this tree's splits.
    importance_sums: Vec<f64>,
    branch_count: usize,
}

fn gini(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn search_split(
    x: &[FeatureVector48],
    y: &[usize],
    rows: &[usize],
    n_classes: usize,
    feature_subset: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = rows.len();
    let mut parent_counts = vec![0u64; n_classes];
    for &r in rows {
        parent_counts[y[r]] += 1;
    }
    let parent_impurity = gini(&parent_counts, n as u64);
    if parent_impurity == 0.0 {
        return None;
    }

    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in feature_subset {
        order.sort_by(|&a, &b| {
            x[a].0[f]
                .partial_cmp(&x[b].0[f])
                .expect("finite feature values")
        });
        let mut left_counts = vec![0u64; n_classes];
        for i in 0..n - 1 {
            left_counts[y[order[i]]] += 1;
            let v_lo = x[order[i]].0[f];
            let v_hi = x[order[i + 1]].0[f];
            if v_lo == v_hi {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let mut right_counts = vec![0u64; n_classes];
            for c in 0..n_classes {
                right_counts[c] = parent_counts[c] - left_counts[c];
            }
            let weighted = (nl as f64 * gini(&left_counts, nl as u64)
                + nr as f64 * gini(&right_counts, nr as u64))
                / n as f64;
            let decrease = parent_impurity - weighted;
            // Strict improvement keeps the first (lowest feature index,
            // lowest threshold) candidate on exact ties.
            if decrease > 0.0 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                let mut threshold = 0.5 * (v_lo + v_hi);
                if threshold >= v_hi {
                    threshold = v_lo;
                }
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

impl DecisionTree {
    /// Fits one tree on the given rows. `feature_subset` holds 0-based
    /// feature slots; `y` holds class indices.
    pub fn fit(
        x: &[FeatureVector48],
        y: &[usize],
        n_classes: usize,
        feature_subset: &[usize],
        seed: u64,
        params: &EnsembleParams,
    ) -> Result<Self, EnsembleError> {
        if x.len() != y.len() {
            return Err(EnsembleError::DimensionMismatch {
                rows: x.len(),
                labels: y.len(),
            });
        }
        if x.is_empty() {
            return Err(EnsembleError::EmptyTrainingSet);
        }
        if feature_subset.is_empty() {
            return Err(EnsembleError::EmptyFeatureSubset);
        }
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            seed,
            importance_sums: vec![0.0; FEATURE_COUNT],
            branch_count: 0,
        };
        let rows: Vec<usize> = (0..x.len()).collect();
        let n_root = rows.len();
        tree.grow(x, y, n_classes, feature_subset, &rows, 0, n_root, params);
        Ok(tree)
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        x: &[FeatureVector48],
        y: &[usize],
        n_classes: usize,
        feature_subset: &[usize],
        rows: &[usize],
        depth: usize,
        n_root: usize,
        params: &EnsembleParams,
    ) -> usize {
        let make_leaf = |rows: &[usize]| {
            let mut counts = vec![0u64; n_classes];
            for &r in rows {
                counts[y[r]] += 1;
            }
            Node::Leaf { counts }
        };

        let split = if depth < params.max_depth {
            search_split(x, y, rows, n_classes, feature_subset, params.min_leaf)
        } else {
            None
        };
        let Some(split) = split else {
            let idx = self.nodes.len();
            self.nodes.push(make_leaf(rows));
            return idx;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| x[r].0[split.feature] <= split.threshold);
        // Change in the tree-level impurity: node fraction times the
        // node-local decrease.
        self.importance_sums[split.feature] += rows.len() as f64 / n_root as f64 * split.decrease;
        self.branch_count += 1;

        let idx = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(
            x,
            y,
            n_classes,
            feature_subset,
            &left_rows,
            depth + 1,
            n_root,
            params,
        );
        let right = self.grow(
            x,
            y,
            n_classes,
            feature_subset,
            &right_rows,
            depth + 1,
            n_root,
            params,
        );
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[idx]
        {
            *l = left;
            *r = right;
        }
        idx
    }

    /// Class index this tree votes for: the leaf's most frequent class,
    /// earliest index on ties.
    pub fn predict_class(&self, v: &FeatureVector48) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if v.0[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { counts } => {
                    return argmax_u64(counts);
                }
            }
        }
    }

    /// This tree's importance contribution: summed decreases divided by its
    /// branch-node count (zero vector for single-leaf trees).
    pub fn normalized_importance(&self) -> Vec<f64> {
        if self.branch_count == 0 {
            return vec![0.0; FEATURE_COUNT];
        }
        self.importance_sums
            .iter()
            .map(|s| s / self.branch_count as f64)
            .collect()
    }
}

fn argmax_u64(v: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

/// The fitted bagged ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaggedEnsemble {
    pub schema_version: u32,
    pub label_set: Vec<PostureLabel>,
    pub params: EnsembleParams,
    trees: Vec<DecisionTree>,
    per_tree_feature_subset: Vec<Vec<usize>>,
    importance: Vec<f64>,
}

impl BaggedEnsemble {
    /// Fits the ensemble: per tree, a bootstrap resample of the rows and a
    /// random feature subset, both drawn from a per-tree stream derived
    /// from `seed`. Trees are fit in parallel and combined in index order,
    /// so the result does not depend on scheduling.
    pub fn fit(
        x: &[FeatureVector48],
        labels: &[PostureLabel],
        label_set: &[PostureLabel],
        params: &EnsembleParams,
        seed: u64,
    ) -> Result<Self, EnsembleError> {
        if x.len() != labels.len() {
            return Err(EnsembleError::DimensionMismatch {
                rows: x.len(),
                labels: labels.len(),
            });
        }
        if x.is_empty() {
            return Err(EnsembleError::EmptyTrainingSet);
        }
        let y: Vec<usize> = labels
            .iter()
            .map(|l| {
                label_set
                    .iter()
                    .position(|s| s == l)
                    .ok_or(EnsembleError::UnknownLabel(*l))
            })
            .collect::<Result<_, _>>()?;
        let n_classes = label_set.len();

        let tree_seeds: Vec<u64> = (0..params.n_trees)
            .map(|t| crate::seeds::derive(seed, t as u64))
            .collect();

        let fitted: Vec<(DecisionTree, Vec<usize>)> = tree_seeds
            .par_iter()
            .map(|&tree_seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                let mut subset: Vec<usize> = rand::seq::index::sample(
                    &mut rng,
                    FEATURE_COUNT,
                    params.feature_subset_size.min(FEATURE_COUNT),
                )
                .into_vec();
                subset.sort_unstable();
                let bx: Vec<FeatureVector48> = rows.iter().map(|&r| x[r].clone()).collect();
                let by: Vec<usize> = rows.iter().map(|&r| y[r]).collect();
                let tree = DecisionTree::fit(&bx, &by, n_classes, &subset, tree_seed, params)
                    .expect("non-empty bootstrap");
                (tree, subset)
            })
            .collect();

        let mut importance = vec![0.0; FEATURE_COUNT];
        for (tree, _) in &fitted {
            for (acc, v) in importance.iter_mut().zip(tree.normalized_importance()) {
                *acc += v;
            }
        }
        for v in importance.iter_mut() {
            *v /= fitted.len() as f64;
        }

        let (trees, per_tree_feature_subset) = fitted.into_iter().unzip();
        Ok(BaggedEnsemble {
            schema_version: SCHEMA_VERSION,
            label_set: label_set.to_vec(),
            params: params.clone(),
            trees,
            per_tree_feature_subset,
            importance,
        })
    }

    /// Majority vote over the trees; ties go to the earlier label in the
    /// label set.
    pub fn predict(&self, v: &FeatureVector48) -> Result<PostureLabel, EnsembleError> {
        if self.trees.is_empty() {
            return Err(EnsembleError::UnfittedModel);
        }
        let mut votes = vec![0u64; self.label_set.len()];
        for tree in &self.trees {
            votes[tree.predict_class(v)] += 1;
        }
        Ok(self.label_set[argmax_u64(&votes)])
    }

    /// Mean over trees of the per-tree normalized impurity decreases, one
    /// value per feature slot (0-based slot `i` is table number `i + 1`).
    pub fn feature_importance(&self) -> Result<&[f64], EnsembleError> {
        if self.trees.is_empty() {
            return Err(EnsembleError::UnfittedModel);
        }
        Ok(&self.importance)
    }

    /// Feature slots (0-based) ordered by descending importance.
    pub fn importance_ranking(&self) -> Result<Vec<usize>, EnsembleError> {
        let imp = self.feature_importance()?;
        let mut idx: Vec<usize> = (0..imp.len()).collect();
        idx.sort_by(|&a, &b| imp[b].partial_cmp(&imp[a]).expect("finite").then(a.cmp(&b)));
        Ok(idx)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn to_json(&self) -> Result<String, EnsembleError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        Ok(serde_json::from_str(text)?)
    }
}
