//! From-scratch CART regression trees and the random-forest ensemble,
//! including hyperparameter grid search and the tree-count selection rule.
//!
//! Trees are grown by greedy variance reduction: every candidate split is a
//! midpoint between consecutive distinct values of one feature, scored by
//! the weighted child squared error `SSE_L + SSE_R`. Ties break toward the
//! lowest feature index, then the lowest threshold.
//!
//! Reproducibility contract: a fitted forest is a pure function of
//! `(data, hyperparameters, seed)`. Tree `t` draws from a stream derived
//! from `(seed, t)` only; the bootstrap sample is drawn first, then node
//! feature subsets in depth-first, left-first order. Trees may therefore be
//! trained on any number of threads without changing the result.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Variable};
use crate::matrix::Matrix;
use crate::metrics::{self, CvScore};
use crate::resample::{kfold_indices, sample_with_replacement, FoldPlan};
use crate::rng::{purpose, stream_rng, sub_seed};
use crate::scalar::{from_count, Scalar};
use crate::{Error, Result};

/// Target variance below which a node counts as pure.
const PURE_TOLERANCE: f64 = 1e-12;

/// How many features each split may choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsetRule {
    /// Every feature (called "auto" by some libraries).
    All,
    /// ⌈√p⌉ features drawn uniformly without replacement.
    Sqrt,
    /// ⌈log₂p⌉ features drawn uniformly without replacement.
    Log2,
}

impl FeatureSubsetRule {
    fn subset_size(self, p: usize) -> usize {
        if p == 0 {
            return 0;
        }
        match self {
            FeatureSubsetRule::All => p,
            FeatureSubsetRule::Sqrt => (p as f64).sqrt().ceil() as usize,
            FeatureSubsetRule::Log2 => ((p as f64).log2().ceil() as usize).max(1),
        }
        .clamp(1, p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub bootstrap: bool,
    pub feature_subset_rule: FeatureSubsetRule,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub n_trees: usize,
    pub seed: u64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::data("max_depth must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::data("min_samples_split must be at least 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::data("min_samples_leaf must be at least 1"));
        }
        if self.n_trees < 1 {
            return Err(Error::data("n_trees must be at least 1"));
        }
        Ok(())
    }

    pub fn with_n_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Binary regression-tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode<T> {
    Internal {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        value: T,
        n: usize,
        mse: T,
    },
}

impl<T: Scalar> TreeNode<T> {
    /// Route one row to its leaf value; any missing value on the way makes
    /// the prediction missing.
    pub fn predict_row(&self, row: &[T]) -> T {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let v = row[*feature];
                if v.is_nan() {
                    T::nan()
                } else if v <= *threshold {
                    left.predict_row(row)
                } else {
                    right.predict_row(row)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// One accepted split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<T> {
    pub feature: usize,
    pub threshold: T,
    /// Reduction in summed squared error relative to the unsplit node.
    pub gain: T,
}

fn node_moments<T: Scalar>(y: &[T], rows: &[usize]) -> (T, T, T) {
    let nf = from_count::<T>(rows.len());
    let sum: T = rows.iter().map(|&r| y[r]).sum();
    let mean = sum / nf;
    let sse: T = rows
        .iter()
        .map(|&r| {
            let d = y[r] - mean;
            d * d
        })
        .sum();
    (mean, sse, sse / nf)
}

/// Best variance-reduction split over the candidate features.
///
/// Thresholds are midpoints between consecutive distinct sorted values; both
/// children must hold at least `min_samples_leaf` rows. Returns `None` when
/// no valid split exists or no split improves on the parent.
pub fn best_split<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    rows: &[usize],
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Option<Split<T>> {
    let n = rows.len();
    if n < 2 || n < 2 * min_samples_leaf {
        return None;
    }
    let (_, parent_sse, _) = node_moments(y, rows);

    let mut best: Option<Split<T>> = None;
    let mut best_score = T::infinity();
    let mut pairs: Vec<(T, T)> = Vec::with_capacity(n);
    for &feature in candidate_features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x.get(r, feature), y[r])));
        // Lexicographic (x, y) order makes the prefix sums a function of the
        // node's values alone, independent of row order or sort algorithm.
        pairs.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite feature values")
                .then_with(|| a.1.partial_cmp(&b.1).expect("finite targets"))
        });

        let sy_tot: T = pairs.iter().map(|p| p.1).sum();
        let syy_tot: T = pairs.iter().map(|p| p.1 * p.1).sum();
        let mut sy_l = T::zero();
        let mut syy_l = T::zero();
        for i in 0..n - 1 {
            sy_l = sy_l + pairs[i].1;
            syy_l = syy_l + pairs[i].1 * pairs[i].1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_samples_leaf || nr < min_samples_leaf {
                continue;
            }
            let nlf = from_count::<T>(nl);
            let nrf = from_count::<T>(nr);
            let sse_l = (syy_l - sy_l * sy_l / nlf).max(T::zero());
            let sy_r = sy_tot - sy_l;
            let sse_r = ((syy_tot - syy_l) - sy_r * sy_r / nrf).max(T::zero());
            let score = sse_l + sse_r;
            if score < best_score {
                let two = T::one() + T::one();
                let mut threshold = (pairs[i].0 + pairs[i + 1].0) / two;
                // Midpoints of adjacent floats can round up to the right
                // value; pin the threshold so `<=` keeps the partition.
                if !(threshold < pairs[i + 1].0) {
                    threshold = pairs[i].0;
                }
                best_score = score;
                best = Some(Split {
                    feature,
                    threshold,
                    gain: parent_sse - score,
                });
            }
        }
    }
    best.filter(|s| s.gain > T::zero())
}

fn draw_features(p: usize, rule: FeatureSubsetRule, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = rule.subset_size(p);
    if m >= p {
        return (0..p).collect();
    }
    let mut pool: Vec<usize> = (0..p).collect();
    for i in 0..m {
        let j = rng.gen_range(i..p);
        pool.swap(i, j);
    }
    let mut subset = pool[..m].to_vec();
    subset.sort_unstable();
    subset
}

fn grow<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    rows: &[usize],
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
    depth: usize,
) -> TreeNode<T> {
    debug_assert!(!rows.is_empty());
    let (mean, _, mse) = node_moments(y, rows);
    let leaf = |mean, mse| TreeNode::Leaf {
        value: mean,
        n: rows.len(),
        mse,
    };
    if depth >= hp.max_depth
        || rows.len() < hp.min_samples_split
        || mse < T::from_f64(PURE_TOLERANCE).unwrap()
    {
        return leaf(mean, mse);
    }
    let features = draw_features(x.n_cols(), hp.feature_subset_rule, rng);
    let Some(split) = best_split(x, y, rows, &features, hp.min_samples_leaf) else {
        return leaf(mean, mse);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| x.get(r, split.feature) <= split.threshold);
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, y, &left_rows, hp, rng, depth + 1)),
        right: Box::new(grow(x, y, &right_rows, hp, rng, depth + 1)),
    }
}

/// Grow a single tree on the given sample rows, consuming the caller's RNG
/// stream for per-node feature draws.
pub fn grow_tree<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    rows: &[usize],
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode<T> {
    grow(x, y, rows, hp, rng, 0)
}

/// Fit the trees of a forest. Tree `t` draws a bootstrap sample (when
/// enabled) and its feature subsets from the stream `(hp.seed, t)`.
fn grow_forest<T: Scalar>(x: &Matrix<T>, y: &[T], hp: &HyperParams) -> Result<Vec<TreeNode<T>>> {
    hp.validate()?;
    let n = x.n_rows();
    if n == 0 || y.is_empty() {
        return Err(Error::data("cannot fit a forest on empty data"));
    }
    if y.len() != n {
        return Err(Error::data(format!(
            "target has {} values for {n} rows",
            y.len()
        )));
    }
    if n < hp.min_samples_split {
        return Err(Error::data(format!(
            "need at least min_samples_split={} rows, got {n}",
            hp.min_samples_split
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("design matrix or target contains missing values"));
    }
    // Without bootstrap and with every feature in play the trees consume no
    // randomness at all, so the ensemble is n_trees copies of one tree.
    if !hp.bootstrap && hp.feature_subset_rule.subset_size(x.n_cols()) >= x.n_cols() {
        let mut rng = stream_rng(hp.seed, purpose::TREE, 0);
        let rows: Vec<usize> = (0..n).collect();
        let tree = grow(x, y, &rows, hp, &mut rng, 0);
        return Ok(vec![tree; hp.n_trees]);
    }
    Ok((0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(hp.seed, purpose::TREE, t as u64);
            let rows: Vec<usize> = if hp.bootstrap {
                sample_with_replacement(&mut rng, n, n)
            } else {
                (0..n).collect()
            };
            grow(x, y, &rows, hp, &mut rng, 0)
        })
        .collect())
}

fn predict_trees<T: Scalar>(trees: &[TreeNode<T>], x: &Matrix<T>) -> Vec<T> {
    let nf = from_count::<T>(trees.len());
    (0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            let sum: T = trees.iter().map(|t| t.predict_row(row)).sum();
            sum / nf
        })
        .collect()
}

/// Random-forest soft-sensor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<T> {
    pub trees: Vec<TreeNode<T>>,
    pub hyperparams: HyperParams,
    pub predictor_names: Vec<Variable>,
    pub seed: u64,
}

impl<T: Scalar> ForestModel<T> {
    /// Per-row arithmetic mean of the tree predictions. Rows with a missing
    /// predictor value predict as missing.
    pub fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        assert_eq!(x.n_cols(), self.predictor_names.len());
        (0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                if row.iter().any(|v| v.is_nan()) {
                    return T::nan();
                }
                let sum: T = self.trees.iter().map(|t| t.predict_row(row)).sum();
                sum / from_count(self.trees.len())
            })
            .collect()
    }

    pub fn predict_dataset(&self, d: &Dataset<T>) -> Result<Vec<T>> {
        Ok(self.predict(&d.design_matrix(&self.predictor_names)?))
    }

    /// Indented text rendering of one tree, with the per-leaf sample count,
    /// mean value and node MSE annotations.
    pub fn dump_tree(&self, index: usize) -> Result<String> {
        let tree = self
            .trees
            .get(index)
            .ok_or_else(|| Error::data(format!("tree index {index} out of range")))?;
        let mut out = String::new();
        dump_node(tree, &self.predictor_names, 0, &mut out);
        Ok(out)
    }
}

fn dump_node<T: Scalar>(node: &TreeNode<T>, names: &[Variable], indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node {
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push_str(&format!("{pad}{} <= {threshold}\n", names[*feature]));
            dump_node(left, names, indent + 1, out);
            dump_node(right, names, indent + 1, out);
        }
        TreeNode::Leaf { value, n, mse } => {
            out.push_str(&format!("{pad}leaf samples={n} value={value} mse={mse}\n"));
        }
    }
}

/// Fit a random forest over named predictors.
pub fn fit_forest<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    predictor_names: &[Variable],
    hp: &HyperParams,
) -> Result<ForestModel<T>> {
    if predictor_names.len() != x.n_cols() {
        return Err(Error::data(format!(
            "{} predictor names for {} columns",
            predictor_names.len(),
            x.n_cols()
        )));
    }
    Ok(ForestModel {
        trees: grow_forest(x, y, hp)?,
        hyperparams: hp.clone(),
        predictor_names: predictor_names.to_vec(),
        seed: hp.seed,
    })
}

/// Hyperparameter lattice for the grid search. Iteration is row-major in
/// field order with values in listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub bootstrap: Vec<bool>,
    pub feature_subset_rule: Vec<FeatureSubsetRule>,
    pub max_depth: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for HyperGrid {
    /// The standard search lattice: bootstrap on/off, three subset rules,
    /// depths {10,20,30}, split minima {6,12,20}, leaf minima {6,12,20} —
    /// 162 combinations.
    fn default() -> Self {
        HyperGrid {
            bootstrap: vec![true, false],
            feature_subset_rule: vec![
                FeatureSubsetRule::All,
                FeatureSubsetRule::Sqrt,
                FeatureSubsetRule::Log2,
            ],
            max_depth: vec![10, 20, 30],
            min_samples_split: vec![6, 12, 20],
            min_samples_leaf: vec![6, 12, 20],
        }
    }
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.bootstrap.len()
            * self.feature_subset_rule.len()
            * self.max_depth.len()
            * self.min_samples_split.len()
            * self.min_samples_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn combinations(&self, n_trees: usize, seed: u64) -> Vec<HyperParams> {
        let mut out = Vec::with_capacity(self.len());
        for &bootstrap in &self.bootstrap {
            for &rule in &self.feature_subset_rule {
                for &max_depth in &self.max_depth {
                    for &min_samples_split in &self.min_samples_split {
                        for &min_samples_leaf in &self.min_samples_leaf {
                            out.push(HyperParams {
                                bootstrap,
                                feature_subset_rule: rule,
                                max_depth,
                                min_samples_split,
                                min_samples_leaf,
                                n_trees,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cross-validated score of one grid combination.
#[derive(Debug, Clone)]
pub struct GridScore<T> {
    pub hyperparams: HyperParams,
    pub mean_rmse: T,
    pub sd_rmse: T,
    /// One held-out RMSE per fold (one fit each).
    pub per_fold: Vec<T>,
}

/// Cross-validated RMSE of one hyperparameter combination on fixed folds.
/// The per-fold fit seed depends only on `(hp.seed, fold)`, so identical
/// combinations always score identically.
pub fn cv_rmse_forest<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    hp: &HyperParams,
    folds: &FoldPlan,
) -> Result<CvScore<T>> {
    metrics::cross_val_rmse(x, y, folds, |train_x, train_y, test_x, fold| {
        let fold_hp = hp
            .clone()
            .with_seed(sub_seed(hp.seed, purpose::FOLD_FIT, fold as u64));
        let trees = grow_forest(train_x, train_y, &fold_hp)?;
        Ok(predict_trees(&trees, test_x))
    })
}

/// Exhaustive grid search by mean k-fold CV RMSE with a reduced tree count.
///
/// Folds are fixed once for the whole search so combinations are compared
/// on identical splits. Ties keep the earliest combination in grid order.
pub fn grid_search<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    grid: &HyperGrid,
    k: usize,
    search_n_trees: usize,
    seed: u64,
) -> Result<(HyperParams, Vec<GridScore<T>>)> {
    if grid.is_empty() {
        return Err(Error::data("hyperparameter grid is empty"));
    }
    let folds = kfold_indices(x.n_rows(), k, sub_seed(seed, purpose::GRID, 0))?;
    let combos = grid.combinations(search_n_trees, seed);
    let scores: Vec<GridScore<T>> = combos
        .into_par_iter()
        .map(|hp| {
            let score = cv_rmse_forest(x, y, &hp, &folds)?;
            Ok(GridScore {
                hyperparams: hp,
                mean_rmse: score.mean,
                sd_rmse: score.sd,
                per_fold: score.per_fold,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_rmse < scores[best].mean_rmse {
            best = i;
        }
    }
    Ok((scores[best].hyperparams.clone(), scores))
}

/// Walk the candidate tree counts in order, keeping each candidate while it
/// improves the CV RMSE by more than `threshold` relative to the previous
/// one; return the last candidate that cleared the bar (the first candidate
/// when none does).
fn scan_tree_candidates<T: Scalar, F>(
    candidates: &[usize],
    threshold: T,
    mut score: F,
) -> Result<usize>
where
    F: FnMut(usize) -> Result<T>,
{
    if candidates.is_empty() {
        return Err(Error::data("tree-count candidates must be non-empty"));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data("tree-count candidates must be strictly increasing"));
    }
    let mut chosen = candidates[0];
    let mut prev = score(candidates[0])?;
    for &cand in &candidates[1..] {
        let cur = score(cand)?;
        if prev > T::zero() && (prev - cur) / prev > threshold {
            chosen = cand;
            prev = cur;
        } else {
            break;
        }
    }
    Ok(chosen)
}

/// Choose the number of trees by the relative-improvement rule over
/// cross-validated RMSE on fixed folds.
pub fn select_n_trees<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    hp: &HyperParams,
    candidates: &[usize],
    threshold: f64,
    folds: &FoldPlan,
) -> Result<usize> {
    scan_tree_candidates(candidates, T::from_f64(threshold).unwrap(), |n_trees| {
        let cand_hp = hp.clone().with_n_trees(n_trees);
        Ok(cv_rmse_forest(x, y, &cand_hp, folds)?.mean)
    })
}
