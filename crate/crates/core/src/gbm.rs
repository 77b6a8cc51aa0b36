//! Histogram gradient-boosted regression trees with squared-error loss,
//! leaf-wise growth, L2/per-leaf regularization, and optional
//! gradient-based one-side sampling (GOSS).
//!
//! Training minimizes, at each boosting step, the penalized objective
//! `sum_i L(y_i, yhat_i + f(x_i)) + gamma*T + (lambda/2) * sum_j w_j^2`
//! with `L` the half squared error, so per-sample gradient is
//! `yhat - y` and the hessian is 1.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binning::{bin_features, BinEdges};
use crate::error::CoreError;
use crate::matrix::FeatureMatrix;
use crate::rng::CounterRng;

/// GOSS fractions: keep the top `a` fraction by |gradient|, subsample a
/// `b` fraction of the rest reweighted by `(1 - a) / b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub max_bins: usize,
    pub goss: Option<GossParams>,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_trees: 400,
            learning_rate: 0.05,
            num_leaves: 31,
            min_samples_leaf: 20,
            lambda: 1.0,
            gamma: 0.0,
            max_bins: 255,
            goss: None,
            seed: 0,
        }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(CoreError::InvalidParam(alloc::format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.num_leaves < 1 {
            return Err(CoreError::InvalidParam(String::from("num_leaves must be >= 1")));
        }
        if self.lambda < 0.0 || self.gamma < 0.0 {
            return Err(CoreError::InvalidParam(String::from("lambda and gamma must be >= 0")));
        }
        if !(2..=255).contains(&self.max_bins) {
            return Err(CoreError::InvalidParam(String::from("max_bins must be in [2, 255]")));
        }
        if let Some(g) = &self.goss {
            if !(g.a > 0.0 && g.a < 1.0 && g.b > 0.0 && g.a + g.b <= 1.0) {
                return Err(CoreError::InvalidParam(alloc::format!(
                    "GOSS requires 0 < a < 1, b > 0, a + b <= 1, got a={}, b={}",
                    g.a, g.b
                )));
            }
        }
        Ok(())
    }
}

/// One node of a fitted tree. Internal nodes split on a bin id: samples with
/// `bin <= threshold_bin` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold_bin: u8,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        weight: f64,
        cover: f64,
        sum_gradient: f64,
        sum_hessian: f64,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Internal { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }
}

/// A regression tree stored as an arena with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Regularization term of this tree: gamma*T + (lambda/2) * sum w_j^2.
    pub fn omega(&self, gamma: f64, lambda: f64) -> f64 {
        let mut t = 0usize;
        let mut sum_w2 = 0.0;
        for n in &self.nodes {
            if let TreeNode::Leaf { weight, .. } = n {
                t += 1;
                sum_w2 += weight * weight;
            }
        }
        gamma * t as f64 + 0.5 * lambda * sum_w2
    }

    /// Route a row of bin ids to its leaf value.
    pub fn predict_bins(&self, bins: &[u8]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { weight, .. } => return *weight,
                TreeNode::Internal { feature, threshold_bin, left, right, .. } => {
                    idx = if bins[*feature] <= *threshold_bin { *left } else { *right };
                }
            }
        }
    }

    /// Route a raw-value row using the ensemble's bin edges.
    pub fn predict_row(&self, row: &[f64], edges: &BinEdges) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { weight, .. } => return *weight,
                TreeNode::Internal { feature, threshold_bin, left, right, .. } => {
                    let bin = edges.bin_value(*feature, row[*feature]);
                    idx = if bin <= *threshold_bin { *left } else { *right };
                }
            }
        }
    }
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub params: GbmParams,
    pub feature_names: Vec<String>,
    pub bin_edges: BinEdges,
}

/// Leaf weight at the penalized optimum: -G / (H + lambda).
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64, CoreError> {
    let denom = h + lambda;
    if denom == 0.0 {
        return Err(CoreError::DegenerateLeaf);
    }
    Ok(-g / denom)
}

/// Objective reduction of a candidate split, minus the per-leaf penalty:
/// `0.5 * [G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)] - gamma`.
pub fn split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> f64 {
    let part = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (part(g_l, h_l) + part(g_r, h_r) - part(g_l + g_r, h_l + h_r)) - gamma
}

/// Result of gradient-based one-side sampling.
#[derive(Debug, Clone)]
pub struct GossSample {
    /// Kept sample indices (top-gradient group first, then the subsample).
    pub indices: Vec<usize>,
    /// Per-kept-sample multiplier aligned with `indices`.
    pub weights: Vec<f64>,
    /// True when n was too small (n < 1/b) and full data was used instead.
    pub fell_back: bool,
}

/// Keep the `ceil(a*n)` largest-|gradient| samples at weight 1 and a uniform
/// `ceil(b*n)` of the remainder at weight `(1-a)/b`.
pub fn goss_sample(gradients: &[f64], a: f64, b: f64, rng: &mut CounterRng) -> GossSample {
    let n = gradients.len();
    if (n as f64) < 1.0 / b {
        return GossSample {
            indices: (0..n).collect(),
            weights: alloc::vec![1.0; n],
            fell_back: true,
        };
    }
    let n_top = ceil_frac(a, n);
    let n_rest = ceil_frac(b, n);
    let mut order: Vec<usize> = (0..n).collect();
    // stable index tie-break keeps the selection deterministic
    order.sort_by(|&i, &j| {
        gradients[j]
            .abs()
            .partial_cmp(&gradients[i].abs())
            .expect("finite gradients")
            .then(i.cmp(&j))
    });
    let mut indices: Vec<usize> = order[..n_top].to_vec();
    let mut weights = alloc::vec![1.0; n_top];
    let rest = &order[n_top..];
    let picked = rng.sample_indices(rest.len(), n_rest.min(rest.len()));
    let w_rest = (1.0 - a) / b;
    for k in picked {
        indices.push(rest[k]);
        weights.push(w_rest);
    }
    GossSample { indices, weights, fell_back: false }
}

fn ceil_frac(frac: f64, n: usize) -> usize {
    let exact = frac * n as f64;
    let c = exact as usize;
    if (c as f64) < exact { c + 1 } else { c }
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold_bin: u8,
    g_l: f64,
    h_l: f64,
    g_r: f64,
    h_r: f64,
    cover_l: f64,
    cover_r: f64,
}

/// A leaf under construction during leaf-wise growth.
struct GrowLeaf {
    /// Positions into the canonical sample order.
    samples: Vec<u32>,
    g: f64,
    h: f64,
    cover: f64,
    best: Option<SplitCandidate>,
    /// Slot in the final node arena.
    slot: usize,
}

/// Fit a boosted ensemble on an already-validated matrix and target.
pub fn fit(x: &FeatureMatrix, y: &[f64], params: &GbmParams) -> Result<BoostedEnsemble, CoreError> {
    params.validate()?;
    x.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(CoreError::EmptyData(String::from("gbm fit")));
    }
    if y.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: String::from("gbm fit target"),
            left: y.len(),
            right: n,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite { context: String::from("gbm fit target") });
    }
    if n < 2 * params.min_samples_leaf.max(1) {
        return Err(CoreError::InvalidParam(alloc::format!(
            "need at least 2*min_samples_leaf = {} rows, got {n}",
            2 * params.min_samples_leaf.max(1)
        )));
    }

    // Canonical row order: histogram accumulation then follows a row-content
    // order, so permuting the input rows cannot change the fitted model.
    let order = canonical_order(x, y);

    let binned = bin_features(x, params.max_bins)?;
    let p = x.n_features();
    // bins in canonical order, column-major
    let bins: Vec<Vec<u8>> = (0..p)
        .map(|f| order.iter().map(|&r| binned.bins[f][r]).collect())
        .collect();
    let y_ord: Vec<f64> = order.iter().map(|&r| y[r]).collect();

    let base_score = y_ord.iter().sum::<f64>() / n as f64;
    let mut preds = alloc::vec![base_score; n];
    let mut trees: Vec<Tree> = Vec::with_capacity(params.n_trees);
    let goss_rng = CounterRng::new(params.seed, b"goss");

    for m in 0..params.n_trees {
        let gradients: Vec<f64> = preds.iter().zip(&y_ord).map(|(p, y)| p - y).collect();

        let (sample_pos, sample_w): (Vec<u32>, Vec<f64>) = match &params.goss {
            Some(gp) => {
                let mut rng = goss_rng.substream(m as u64);
                let s = goss_sample(&gradients, gp.a, gp.b, &mut rng);
                (s.indices.iter().map(|&i| i as u32).collect(), s.weights)
            }
            None => ((0..n as u32).collect(), alloc::vec![1.0; n]),
        };
        // weight lookup aligned with canonical positions (0 = not sampled)
        let mut w_of = alloc::vec![0.0; n];
        for (pos, w) in sample_pos.iter().zip(&sample_w) {
            w_of[*pos as usize] = *w;
        }

        let tree = grow_tree(&bins, &gradients, &w_of, &sample_pos, params)?;

        // update predictions over the full data
        for i in 0..n {
            let row_bins: Vec<u8> = (0..p).map(|f| bins[f][i]).collect();
            preds[i] += params.learning_rate * tree.predict_bins(&row_bins);
        }
        trees.push(tree);
    }

    Ok(BoostedEnsemble {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        params: params.clone(),
        feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
        bin_edges: binned.edges,
    })
}

/// Total order on rows by (target, feature values) bit patterns.
fn canonical_order(x: &FeatureMatrix, y: &[f64]) -> Vec<usize> {
    let p = x.n_features();
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| {
        y[a].total_cmp(&y[b]).then_with(|| {
            for f in 0..p {
                let c = x.value(a, f).total_cmp(&x.value(b, f));
                if c != core::cmp::Ordering::Equal {
                    return c;
                }
            }
            core::cmp::Ordering::Equal
        })
    });
    order
}

fn grow_tree(
    bins: &[Vec<u8>],
    gradients: &[f64],
    w_of: &[f64],
    root_samples: &[u32],
    params: &GbmParams,
) -> Result<Tree, CoreError> {
    let mut g_root = 0.0;
    let mut h_root = 0.0;
    let mut cover_root = 0.0;
    for &posu in root_samples {
        let pos = posu as usize;
        let w = w_of[pos];
        g_root += w * gradients[pos];
        h_root += w; // hessian of half squared error is 1
        cover_root += w;
    }

    let mut nodes: Vec<TreeNode> = Vec::new();
    nodes.push(TreeNode::Leaf {
        weight: leaf_weight(g_root, h_root, params.lambda)?,
        cover: cover_root,
        sum_gradient: g_root,
        sum_hessian: h_root,
    });

    let mut leaves: Vec<GrowLeaf> = Vec::new();
    let mut root = GrowLeaf {
        samples: root_samples.to_vec(),
        g: g_root,
        h: h_root,
        cover: cover_root,
        best: None,
        slot: 0,
    };
    root.best = best_split(&root, bins, w_of, gradients, params);
    leaves.push(root);

    let mut n_leaves = 1usize;
    while n_leaves < params.num_leaves {
        // expand the leaf with the largest positive gain; ties go to the
        // earliest-created leaf for determinism
        let mut chosen: Option<usize> = None;
        let mut best_gain = 0.0;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(c) = &leaf.best {
                if c.gain > best_gain {
                    best_gain = c.gain;
                    chosen = Some(i);
                }
            }
        }
        let Some(leaf_idx) = chosen else { break };

        let leaf = leaves.swap_remove(leaf_idx);
        let cand = leaf.best.expect("chosen leaf has a split");

        // partition samples; canonical order is preserved within children
        let mut left_samples = Vec::new();
        let mut right_samples = Vec::new();
        for &pos in &leaf.samples {
            if bins[cand.feature][pos as usize] <= cand.threshold_bin {
                left_samples.push(pos);
            } else {
                right_samples.push(pos);
            }
        }

        let left_slot = nodes.len();
        nodes.push(TreeNode::Leaf {
            weight: leaf_weight(cand.g_l, cand.h_l, params.lambda)?,
            cover: cand.cover_l,
            sum_gradient: cand.g_l,
            sum_hessian: cand.h_l,
        });
        let right_slot = nodes.len();
        nodes.push(TreeNode::Leaf {
            weight: leaf_weight(cand.g_r, cand.h_r, params.lambda)?,
            cover: cand.cover_r,
            sum_gradient: cand.g_r,
            sum_hessian: cand.h_r,
        });
        nodes[leaf.slot] = TreeNode::Internal {
            feature: cand.feature,
            threshold_bin: cand.threshold_bin,
            left: left_slot,
            right: right_slot,
            cover: leaf.cover,
        };

        let mut left = GrowLeaf {
            samples: left_samples,
            g: cand.g_l,
            h: cand.h_l,
            cover: cand.cover_l,
            best: None,
            slot: left_slot,
        };
        left.best = best_split(&left, bins, w_of, gradients, params);
        let mut right = GrowLeaf {
            samples: right_samples,
            g: cand.g_r,
            h: cand.h_r,
            cover: cand.cover_r,
            best: None,
            slot: right_slot,
        };
        right.best = best_split(&right, bins, w_of, gradients, params);
        leaves.push(left);
        leaves.push(right);
        n_leaves += 1;
    }

    Ok(Tree { nodes })
}

/// Best split over all features and bins, or `None` when no split clears
/// zero gain and the min-leaf constraint. Ties break toward the lowest
/// feature index, then the lowest bin id (strict `>` during the scan).
fn best_split(
    leaf: &GrowLeaf,
    bins: &[Vec<u8>],
    w_of: &[f64],
    gradients: &[f64],
    params: &GbmParams,
) -> Option<SplitCandidate> {
    if leaf.samples.len() < 2 * params.min_samples_leaf.max(1) {
        return None;
    }
    let mut best: Option<SplitCandidate> = None;
    for (feature, col) in bins.iter().enumerate() {
        let n_bins = 256usize; // u8 bin ids; unused tail bins stay empty
        let mut hist_g = alloc::vec![0.0f64; n_bins];
        let mut hist_h = alloc::vec![0.0f64; n_bins];
        let mut hist_c = alloc::vec![0usize; n_bins];
        let mut max_bin = 0usize;
        for &posu in &leaf.samples {
            let pos = posu as usize;
            let b = col[pos] as usize;
            let w = w_of[pos];
            hist_g[b] += w * gradients[pos];
            hist_h[b] += w;
            hist_c[b] += 1;
            if b > max_bin {
                max_bin = b;
            }
        }
        let mut g_l = 0.0;
        let mut h_l = 0.0;
        let mut c_l = 0usize;
        for t in 0..max_bin {
            g_l += hist_g[t];
            h_l += hist_h[t];
            c_l += hist_c[t];
            if c_l < params.min_samples_leaf {
                continue;
            }
            let c_r = leaf.samples.len() - c_l;
            if c_r < params.min_samples_leaf {
                break;
            }
            let g_r = leaf.g - g_l;
            let h_r = leaf.h - h_l;
            let gain = split_gain(g_l, h_l, g_r, h_r, params.lambda, params.gamma);
            if gain > 0.0 && best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(SplitCandidate {
                    gain,
                    feature,
                    threshold_bin: t as u8,
                    g_l,
                    h_l,
                    g_r,
                    h_r,
                    cover_l: h_l,
                    cover_r: h_r,
                });
            }
        }
    }
    best
}

impl BoostedEnsemble {
    /// Predict ages for a matrix sharing the fit-time feature schema.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, CoreError> {
        let names: Vec<&str> = x.columns.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.feature_names.len()
            || names.iter().zip(&self.feature_names).any(|(a, b)| *a != b.as_str())
        {
            return Err(CoreError::SchemaMismatch(alloc::format!(
                "expected {} features matching fit-time names",
                self.feature_names.len()
            )));
        }
        x.validate()?;
        Ok((0..x.n_rows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    /// Predict a single raw-value row (no name check).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate
                * self.trees.iter().map(|t| t.predict_row(row, &self.bin_edges)).sum::<f64>()
    }

    /// Per-tree contributions (learning rate applied) for one row.
    pub fn tree_contributions(&self, row: &[f64]) -> Vec<f64> {
        self.trees
            .iter()
            .map(|t| self.learning_rate * t.predict_row(row, &self.bin_edges))
            .collect()
    }

    /// Step objective after each tree at the recorded learning rate:
    /// `sum_i 0.5*(y_i - yhat_i^{(m)})^2 + Omega(f_m)`.
    pub fn staged_objectives(&self, x: &FeatureMatrix, y: &[f64]) -> Result<Vec<f64>, CoreError> {
        if y.len() != x.n_rows() {
            return Err(CoreError::DimensionMismatch {
                context: String::from("staged_objectives"),
                left: y.len(),
                right: x.n_rows(),
            });
        }
        let mut preds = alloc::vec![self.base_score; x.n_rows()];
        let mut out = Vec::with_capacity(self.trees.len());
        for tree in &self.trees {
            for (r, pred) in preds.iter_mut().enumerate() {
                *pred += self.learning_rate * tree.predict_row(x.row(r), &self.bin_edges);
            }
            let loss: f64 = preds
                .iter()
                .zip(y)
                .map(|(p, yi)| 0.5 * (yi - p) * (yi - p))
                .sum();
            out.push(loss + tree.omega(self.params.gamma, self.params.lambda));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{FeatureKind, FeatureMeta, SystemTag};
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn matrix_of(cols: Vec<Vec<f64>>, target: Vec<f64>) -> FeatureMatrix {
        let n = cols[0].len();
        let p = cols.len();
        let mut values = vec![0.0; n * p];
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                values[r * p + c] = *v;
            }
        }
        FeatureMatrix {
            columns: (0..p)
                .map(|i| FeatureMeta {
                    name: alloc::format!("f{i}"),
                    kind: FeatureKind::Baseline,
                    system: SystemTag::Other,
                    unit: String::new(),
                })
                .collect(),
            row_ids: (0..n).map(|i| i.to_string()).collect(),
            values,
            target,
        }
    }

    #[test]
    fn leaf_weight_formula() {
        assert!((leaf_weight(10.0, 5.0, 1.0).unwrap() + 10.0 / 6.0).abs() < 1e-12);
        assert_eq!(leaf_weight(0.0, 3.0, 0.0).unwrap(), 0.0);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn leaf_weight_shrinks_with_lambda() {
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1.0, 10.0, 100.0] {
            let w = leaf_weight(10.0, 5.0, lambda).unwrap().abs();
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn split_gain_formula() {
        let g = split_gain(-4.0, 2.0, 4.0, 2.0, 1.0, 0.0);
        assert!((g - 16.0 / 3.0).abs() < 1e-12);
        let g5 = split_gain(-4.0, 2.0, 4.0, 2.0, 1.0, 5.0);
        assert!((g5 - (16.0 / 3.0 - 5.0)).abs() < 1e-12);
        // symmetric halves give no reduction (lambda = 0)
        let sym = split_gain(3.0, 2.0, 3.0, 2.0, 0.0, 0.7);
        assert!((sym + 0.7).abs() < 1e-12);
    }

    #[test]
    fn stump_closed_form() {
        let y = vec![1.0, 3.0, 7.0, 9.0];
        let x = matrix_of(vec![vec![0.0, 1.0, 2.0, 3.0]], y.clone());
        let params = GbmParams {
            n_trees: 1,
            num_leaves: 1,
            min_samples_leaf: 1,
            learning_rate: 0.3,
            lambda: 2.0,
            ..GbmParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let base = 5.0;
        // gradients from the base score: g_i = base - y_i
        let sum_g: f64 = y.iter().map(|yi| base - yi).sum();
        let expected = base + 0.3 * (-sum_g / (4.0 + 2.0));
        for pred in model.predict(&x).unwrap() {
            assert!((pred - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_target_zero_weights() {
        let y = vec![4.5; 10];
        let x = matrix_of(vec![(0..10).map(|i| i as f64).collect()], y.clone());
        let params = GbmParams {
            n_trees: 5,
            min_samples_leaf: 1,
            ..GbmParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        for pred in model.predict(&x).unwrap() {
            assert_eq!(pred, 4.5);
        }
    }

    #[test]
    fn zero_trees_returns_base_score() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let x = matrix_of(vec![vec![0.0, 1.0, 2.0, 3.0]], y.clone());
        let params = GbmParams { n_trees: 0, min_samples_leaf: 1, ..GbmParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        for pred in model.predict(&x).unwrap() {
            assert_eq!(pred, 2.5);
        }
    }

    #[test]
    fn single_tree_memorizes_leaf_means() {
        // lambda=0, gamma=0, unlimited leaves, 1 sample per leaf, lr=1:
        // training predictions equal per-leaf target means (here: exact y)
        let n = 32;
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = xs.iter().map(|x| (x * 0.7).sin() * 10.0 + x).collect();
        let x = matrix_of(vec![xs], y.clone());
        let params = GbmParams {
            n_trees: 1,
            learning_rate: 1.0,
            num_leaves: n,
            min_samples_leaf: 1,
            lambda: 0.0,
            gamma: 0.0,
            max_bins: 255,
            goss: None,
            seed: 0,
        };
        let model = fit(&x, &y, &params).unwrap();
        let preds = model.predict(&x).unwrap();
        for (p, yi) in preds.iter().zip(&y) {
            assert!((p - yi).abs() < 1e-9, "pred {p} vs {yi}");
        }
    }

    #[test]
    fn row_permutation_invariance() {
        let n = 200;
        let mut rng = CounterRng::new(5, b"perm");
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.normal()).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| xs[0][i] * 2.0 + xs[1][i].powi(2) + 0.1 * rng.normal())
            .collect();
        let x = matrix_of(xs.clone(), y.clone());
        let params = GbmParams {
            n_trees: 10,
            min_samples_leaf: 5,
            goss: Some(GossParams { a: 0.3, b: 0.3 }),
            ..GbmParams::default()
        };
        let model_a = fit(&x, &y, &params).unwrap();

        // reversed row order
        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = x.select_rows(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let model_b = fit(&xp, &yp, &params).unwrap();
        assert_eq!(model_a.trees, model_b.trees);
        assert_eq!(model_a.base_score, model_b.base_score);
    }

    #[test]
    fn goss_counts_and_weights() {
        let gradients: Vec<f64> = (0..100).map(|i| i as f64 - 50.0).collect();
        let mut rng = CounterRng::new(9, b"goss-test");
        let s = goss_sample(&gradients, 0.2, 0.1, &mut rng);
        assert!(!s.fell_back);
        assert_eq!(s.indices.len(), 30);
        assert_eq!(s.weights.iter().filter(|&&w| w == 1.0).count(), 20);
        assert_eq!(s.weights.iter().filter(|&&w| (w - 8.0).abs() < 1e-12).count(), 10);
        // the top-20 group really is the largest-|g| set
        for &i in &s.indices[..20] {
            assert!(gradients[i].abs() >= 40.0, "index {i} gradient {}", gradients[i]);
        }
    }

    #[test]
    fn goss_boundary_keeps_everything() {
        let gradients: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut rng = CounterRng::new(1, b"goss-all");
        let s = goss_sample(&gradients, 0.5, 0.5, &mut rng);
        assert_eq!(s.indices.len(), 50);
        assert!(s.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn goss_small_n_falls_back() {
        let gradients = vec![1.0, -2.0, 3.0];
        let mut rng = CounterRng::new(2, b"goss-small");
        let s = goss_sample(&gradients, 0.2, 0.1, &mut rng);
        assert!(s.fell_back);
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert!(s.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn predict_rejects_schema_drift() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let x = matrix_of(vec![vec![0.0, 1.0, 2.0, 3.0]], y.clone());
        let params = GbmParams { n_trees: 1, min_samples_leaf: 1, ..GbmParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let mut other = x.clone();
        other.columns[0].name = "renamed".to_string();
        assert!(matches!(model.predict(&other), Err(CoreError::SchemaMismatch(_))));
    }
}
