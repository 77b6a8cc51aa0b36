//! Shapley attribution for boosted tree ensembles.
//!
//! Two independent routes compute the same quantity:
//!
//! * [`tree_shap`] — polynomial-time exact TreeSHAP using unique-path
//!   bookkeeping (Lundberg et al.'s Algorithm 2).
//! * [`brute_force_shap`] — direct subset enumeration of the Shapley
//!   formula, feasible up to 15 features, kept as the oracle the fast
//!   path is verified against.
//!
//! Both use the same value function: the tree-conditional expectation
//! where features outside the coalition split expectations by training
//! cover proportions.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::gbm::{BoostedEnsemble, Tree, TreeNode};
use crate::matrix::FeatureMatrix;

/// Attribution for a single row: `phi0 + sum(phi) == prediction`.
#[derive(Debug, Clone)]
pub struct ShapAttribution {
    pub row_id: String,
    pub phi: Vec<f64>,
    pub phi0: f64,
}

/// Mean-|phi| importance ranking across rows.
#[derive(Debug, Clone)]
pub struct ImportanceSummary {
    pub feature_names: Vec<String>,
    pub mean_abs_phi: Vec<f64>,
    /// 1-based ranks forming a permutation of 1..=p.
    pub rank: Vec<usize>,
    /// Fraction of rows whose phi sign matches the feature's majority sign.
    pub sign_consistency: Vec<f64>,
}

/// One point of the beeswarm-source table behind the summary plot.
#[derive(Debug, Clone)]
pub struct ShapPoint {
    pub row_id: String,
    pub feature: String,
    pub phi: f64,
    pub value: f64,
}

/// Expected leaf value of a tree under cover weighting (the v(empty) term).
pub fn tree_expected_value(tree: &Tree) -> Result<f64, CoreError> {
    fn descend(tree: &Tree, idx: usize) -> Result<f64, CoreError> {
        match &tree.nodes[idx] {
            TreeNode::Leaf { weight, cover, .. } => {
                if *cover <= 0.0 {
                    return Err(CoreError::ModelIntegrity(String::from(
                        "leaf with zero or negative cover",
                    )));
                }
                Ok(*weight * *cover)
            }
            TreeNode::Internal { left, right, cover, .. } => {
                if *cover <= 0.0 {
                    return Err(CoreError::ModelIntegrity(String::from(
                        "internal node with zero or negative cover",
                    )));
                }
                Ok(descend(tree, *left)? + descend(tree, *right)?)
            }
        }
    }
    Ok(descend(tree, 0)? / tree.nodes[0].cover())
}

#[derive(Clone, Copy)]
struct PathElement {
    /// Feature index, or usize::MAX for the synthetic root element.
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let l = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if l == 0 { 1.0 } else { 0.0 },
    });
    let l = path.len();
    for i in (1..l).rev() {
        path[i].pweight += one_fraction * path[i - 1].pweight * i as f64 / l as f64;
        path[i - 1].pweight = zero_fraction * path[i - 1].pweight * (l - i) as f64 / l as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let l = path.len();
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next = path[l - 1].pweight;
    for i in (0..l - 1).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next * l as f64 / ((i + 1) as f64 * one);
            next = tmp - path[i].pweight * zero * (l - 1 - i) as f64 / l as f64;
        } else {
            path[i].pweight = path[i].pweight * l as f64 / (zero * (l - 1 - i) as f64);
        }
    }
    // shift the split descriptors down; the recomputed pweights stay in place
    for i in index..l - 1 {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let l = path.len();
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next = path[l - 1].pweight;
    let mut total = 0.0;
    for i in (0..l - 1).rev() {
        if one != 0.0 {
            let tmp = next * l as f64 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].pweight - tmp * zero * (l - 1 - i) as f64 / l as f64;
        } else if zero != 0.0 {
            total += path[i].pweight / zero * (l as f64 / (l - 1 - i) as f64);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn shap_recurse(
    tree: &Tree,
    row: &[f64],
    edges: &crate::binning::BinEdges,
    phi: &mut [f64],
    node_idx: usize,
    path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
) {
    let mut path = path;
    extend(&mut path, zero_fraction, one_fraction, feature);
    match &tree.nodes[node_idx] {
        TreeNode::Leaf { weight, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * weight;
            }
        }
        TreeNode::Internal { feature: split_feature, threshold_bin, left, right, cover } => {
            let bin = edges.bin_value(*split_feature, row[*split_feature]);
            let (hot, cold) = if bin <= *threshold_bin {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let hot_cover = tree.nodes[hot].cover();
            let cold_cover = tree.nodes[cold].cover();
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            // condense consecutive splits on the same feature along the path
            if let Some(k) = path.iter().position(|el| el.feature == *split_feature) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            shap_recurse(
                tree,
                row,
                edges,
                phi,
                hot,
                path.clone(),
                incoming_zero * hot_cover / cover,
                incoming_one,
                *split_feature,
            );
            shap_recurse(
                tree,
                row,
                edges,
                phi,
                cold,
                path,
                incoming_zero * cold_cover / cover,
                0.0,
                *split_feature,
            );
        }
    }
}

/// Exact TreeSHAP for one raw-value row against a single tree
/// (no learning-rate scaling).
pub fn tree_shap_single(
    tree: &Tree,
    row: &[f64],
    edges: &crate::binning::BinEdges,
    n_features: usize,
) -> Result<Vec<f64>, CoreError> {
    // validates covers up front
    tree_expected_value(tree)?;
    let mut phi = alloc::vec![0.0; n_features];
    shap_recurse(tree, row, edges, &mut phi, 0, Vec::new(), 1.0, 1.0, usize::MAX - 1);
    Ok(phi)
}

/// Exact TreeSHAP attributions for every row of a matrix.
///
/// `phi0` is the model expectation `base_score + lr * sum_m E[f_m]`, shared
/// by all rows; per-tree attributions are scaled by the learning rate and
/// summed (Shapley values are additive across trees).
pub fn tree_shap(
    model: &BoostedEnsemble,
    x: &FeatureMatrix,
) -> Result<Vec<ShapAttribution>, CoreError> {
    let names: Vec<&str> = x.columns.iter().map(|c| c.name.as_str()).collect();
    if names.len() != model.feature_names.len()
        || names.iter().zip(&model.feature_names).any(|(a, b)| *a != b.as_str())
    {
        return Err(CoreError::SchemaMismatch(String::from(
            "SHAP input must share fit-time feature names",
        )));
    }
    x.validate()?;
    let p = x.n_features();
    let mut phi0 = model.base_score;
    for tree in &model.trees {
        phi0 += model.learning_rate * tree_expected_value(tree)?;
    }
    let mut out = Vec::with_capacity(x.n_rows());
    for r in 0..x.n_rows() {
        let row = x.row(r);
        let mut phi = alloc::vec![0.0; p];
        for tree in &model.trees {
            let tree_phi = tree_shap_single(tree, row, &model.bin_edges, p)?;
            for (acc, v) in phi.iter_mut().zip(tree_phi) {
                *acc += model.learning_rate * v;
            }
        }
        out.push(ShapAttribution {
            row_id: x.row_ids[r].clone(),
            phi,
            phi0,
        });
    }
    Ok(out)
}

const BRUTE_FORCE_MAX_FEATURES: usize = 15;

/// Tree-conditional expectation with the coalition `mask` of known features:
/// in-coalition features route by the row's value, the rest mix children by
/// cover proportion.
fn coalition_value(
    tree: &Tree,
    row: &[f64],
    edges: &crate::binning::BinEdges,
    mask: u32,
    idx: usize,
) -> f64 {
    match &tree.nodes[idx] {
        TreeNode::Leaf { weight, .. } => *weight,
        TreeNode::Internal { feature, threshold_bin, left, right, cover } => {
            if mask & (1 << *feature) != 0 {
                let bin = edges.bin_value(*feature, row[*feature]);
                let next = if bin <= *threshold_bin { *left } else { *right };
                coalition_value(tree, row, edges, mask, next)
            } else {
                let lc = tree.nodes[*left].cover();
                let rc = tree.nodes[*right].cover();
                (lc * coalition_value(tree, row, edges, mask, *left)
                    + rc * coalition_value(tree, row, edges, mask, *right))
                    / cover
            }
        }
    }
}

/// Brute-force Shapley values by exhaustive subset enumeration.
///
/// Evaluates `phi_j = sum_{S subset of F\{j}} |S|!(p-|S|-1)!/p! *
/// [v(S u {j}) - v(S)]` exactly. Refuses for p > 15.
pub fn brute_force_shap(model: &BoostedEnsemble, row: &[f64]) -> Result<Vec<f64>, CoreError> {
    let p = model.feature_names.len();
    if p > BRUTE_FORCE_MAX_FEATURES {
        return Err(CoreError::TooManyFeatures { p, max: BRUTE_FORCE_MAX_FEATURES });
    }
    if row.len() != p {
        return Err(CoreError::DimensionMismatch {
            context: String::from("brute_force_shap row"),
            left: row.len(),
            right: p,
        });
    }
    for tree in &model.trees {
        tree_expected_value(tree)?;
    }
    let n_masks = 1usize << p;
    // v over the whole ensemble for every coalition
    let mut values = alloc::vec![0.0f64; n_masks];
    for (mask, slot) in values.iter_mut().enumerate() {
        let mut v = model.base_score;
        for tree in &model.trees {
            v += model.learning_rate
                * coalition_value(tree, row, &model.bin_edges, mask as u32, 0);
        }
        *slot = v;
    }
    let mut factorial = alloc::vec![1.0f64; p + 1];
    for i in 1..=p {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = alloc::vec![0.0; p];
    for j in 0..p {
        let bit = 1usize << j;
        for mask in 0..n_masks {
            if mask & bit != 0 {
                continue;
            }
            let s = (mask as u32).count_ones() as usize;
            let weight = factorial[s] * factorial[p - s - 1] / factorial[p];
            phi[j] += weight * (values[mask | bit] - values[mask]);
        }
    }
    Ok(phi)
}

/// The row-independent v(empty) of the ensemble (the brute-force base value).
pub fn expected_value(model: &BoostedEnsemble) -> Result<f64, CoreError> {
    let mut v = model.base_score;
    for tree in &model.trees {
        v += model.learning_rate * tree_expected_value(tree)?;
    }
    Ok(v)
}

/// Mean-|phi| ranking plus the long-format point table for external plotting.
pub fn summarize(
    attrs: &[ShapAttribution],
    x: &FeatureMatrix,
) -> Result<(ImportanceSummary, Vec<ShapPoint>), CoreError> {
    if attrs.is_empty() {
        return Err(CoreError::EmptyData(String::from("summarize")));
    }
    let p = attrs[0].phi.len();
    let n = attrs.len();
    let mut mean_abs = alloc::vec![0.0; p];
    let mut pos_counts = alloc::vec![0usize; p];
    let mut neg_counts = alloc::vec![0usize; p];
    for a in attrs {
        for (j, &v) in a.phi.iter().enumerate() {
            mean_abs[j] += v.abs();
            if v > 0.0 {
                pos_counts[j] += 1;
            } else if v < 0.0 {
                neg_counts[j] += 1;
            }
        }
    }
    for m in mean_abs.iter_mut() {
        *m /= n as f64;
    }
    // rank 1 = largest mean |phi|; ties resolved by feature order
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| mean_abs[b].partial_cmp(&mean_abs[a]).expect("finite").then(a.cmp(&b)));
    let mut rank = alloc::vec![0usize; p];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    let sign_consistency: Vec<f64> = (0..p)
        .map(|j| {
            let signed = pos_counts[j] + neg_counts[j];
            if signed == 0 {
                1.0
            } else {
                pos_counts[j].max(neg_counts[j]) as f64 / signed as f64
            }
        })
        .collect();
    let mut points = Vec::with_capacity(n * p);
    for (r, a) in attrs.iter().enumerate() {
        for j in 0..p {
            points.push(ShapPoint {
                row_id: a.row_id.clone(),
                feature: x.columns[j].name.clone(),
                phi: a.phi[j],
                value: x.value(r, j),
            });
        }
    }
    Ok((
        ImportanceSummary {
            feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
            mean_abs_phi: mean_abs,
            rank,
            sign_consistency,
        },
        points,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbm::{fit, GbmParams};
    use crate::matrix::{FeatureKind, FeatureMeta, SystemTag};
    use crate::rng::CounterRng;
    use alloc::string::ToString;
    use alloc::vec;

    fn matrix_of(cols: Vec<Vec<f64>>, target: Vec<f64>) -> FeatureMatrix {
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

    fn random_problem(seed: u64, n: usize, p: usize) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = CounterRng::new(seed, b"shap-test");
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                cols[0][i] * 3.0
                    + if p > 1 { cols[1][i] * cols[1][i] } else { 0.0 }
                    + 0.2 * rng.normal()
            })
            .collect();
        (matrix_of(cols, y.clone()), y)
    }

    #[test]
    fn zero_tree_model_attributes_nothing() {
        let (x, y) = random_problem(1, 20, 3);
        let params = GbmParams { n_trees: 0, min_samples_leaf: 1, ..GbmParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let attrs = tree_shap(&model, &x).unwrap();
        for a in &attrs {
            assert!(a.phi.iter().all(|&v| v == 0.0));
            assert_eq!(a.phi0, model.base_score);
        }
    }

    #[test]
    fn dummy_features_get_zero_phi() {
        // only f0 carries signal; a single split on f0 must leave f1, f2 at 0
        let n = 40;
        let f0: Vec<f64> = (0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect();
        let noise: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let y: Vec<f64> = f0.iter().map(|v| v * 10.0).collect();
        let x = matrix_of(vec![f0, noise.clone(), noise], y.clone());
        let params = GbmParams {
            n_trees: 1,
            num_leaves: 2,
            min_samples_leaf: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            ..GbmParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let attrs = tree_shap(&model, &x).unwrap();
        for a in &attrs {
            assert_eq!(a.phi[1], 0.0);
            assert_eq!(a.phi[2], 0.0);
            assert!(a.phi[0].abs() > 0.0);
        }
    }

    #[test]
    fn local_accuracy() {
        let (x, y) = random_problem(7, 120, 4);
        let params = GbmParams {
            n_trees: 8,
            num_leaves: 8,
            min_samples_leaf: 2,
            ..GbmParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let attrs = tree_shap(&model, &x).unwrap();
        let preds = model.predict(&x).unwrap();
        for (a, pred) in attrs.iter().zip(&preds) {
            let total = a.phi0 + a.phi.iter().sum::<f64>();
            assert!((total - pred).abs() < 1e-8, "{total} vs {pred}");
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        for seed in 0..4 {
            let (x, y) = random_problem(100 + seed, 80, 5);
            let params = GbmParams {
                n_trees: 3,
                num_leaves: 6,
                min_samples_leaf: 3,
                ..GbmParams::default()
            };
            let model = fit(&x, &y, &params).unwrap();
            let attrs = tree_shap(&model, &x).unwrap();
            for r in 0..10 {
                let oracle = brute_force_shap(&model, x.row(r)).unwrap();
                for (fast, slow) in attrs[r].phi.iter().zip(&oracle) {
                    assert!((fast - slow).abs() < 1e-9, "seed {seed} row {r}: {fast} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn brute_force_single_feature_identity() {
        let (x, y) = random_problem(11, 30, 1);
        let params = GbmParams { n_trees: 2, num_leaves: 3, min_samples_leaf: 2, ..GbmParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let v0 = expected_value(&model).unwrap();
        for r in 0..5 {
            let phi = brute_force_shap(&model, x.row(r)).unwrap();
            let pred = model.predict_row(x.row(r));
            assert!((phi[0] - (pred - v0)).abs() < 1e-10);
        }
    }

    #[test]
    fn brute_force_refuses_large_p() {
        let (x, y) = random_problem(2, 40, 2);
        let params = GbmParams { n_trees: 1, min_samples_leaf: 1, ..GbmParams::default() };
        let mut model = fit(&x, &y, &params).unwrap();
        model.feature_names = (0..16).map(|i| alloc::format!("f{i}")).collect();
        let row = vec![0.0; 16];
        assert!(matches!(
            brute_force_shap(&model, &row),
            Err(CoreError::TooManyFeatures { .. })
        ));
    }

    #[test]
    fn summarize_ranks_are_permutation() {
        let (x, y) = random_problem(9, 60, 4);
        let params = GbmParams { n_trees: 5, num_leaves: 4, min_samples_leaf: 2, ..GbmParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let attrs = tree_shap(&model, &x).unwrap();
        let (summary, points) = summarize(&attrs, &x).unwrap();
        let mut ranks = summary.rank.clone();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
        assert_eq!(points.len(), 60 * 4);
        // f0 carries the dominant linear signal
        assert_eq!(summary.rank[0], 1);
    }

    #[test]
    fn all_zero_attrs_rank_by_feature_order() {
        let (x, y) = random_problem(3, 20, 3);
        let params = GbmParams { n_trees: 0, min_samples_leaf: 1, ..GbmParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let attrs = tree_shap(&model, &x).unwrap();
        let (summary, _) = summarize(&attrs, &x).unwrap();
        assert_eq!(summary.rank, vec![1, 2, 3]);
        assert!(summary.mean_abs_phi.iter().all(|&m| m == 0.0));
    }
}
