//! Random-forest regression baseline: bagged variance-reduction CART trees
//! over the shared histogram binning.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binning::{bin_features, BinEdges};
use crate::error::CoreError;
use crate::gbm::{Tree, TreeNode};
use crate::matrix::FeatureMatrix;
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features considered per split.
    pub feature_subsample: f64,
    pub bootstrap: bool,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 300,
            max_depth: None,
            min_samples_leaf: 5,
            feature_subsample: 1.0 / 3.0,
            bootstrap: true,
            max_bins: 255,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(CoreError::InvalidParam(alloc::format!(
                "feature_subsample must be in (0, 1], got {}",
                self.feature_subsample
            )));
        }
        if self.n_trees == 0 {
            return Err(CoreError::InvalidParam(String::from("n_trees must be >= 1")));
        }
        if !(2..=255).contains(&self.max_bins) {
            return Err(CoreError::InvalidParam(String::from("max_bins must be in [2, 255]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub bin_edges: BinEdges,
}

/// Fit a bagged forest of variance-reduction CART trees.
pub fn rf_fit(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<ForestModel, CoreError> {
    params.validate()?;
    x.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(CoreError::EmptyData(String::from("rf fit")));
    }
    if y.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: String::from("rf fit target"),
            left: y.len(),
            right: n,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite { context: String::from("rf fit target") });
    }

    let binned = bin_features(x, params.max_bins)?;
    let p = x.n_features();
    let n_sub = ceil_frac(params.feature_subsample, p).max(1);
    let tree_rng = CounterRng::new(params.seed, b"rf");

    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = tree_rng.substream(t as u64);
        let samples: Vec<u32> = if params.bootstrap {
            (0..n).map(|_| rng.below(n as u64) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut nodes = Vec::new();
        grow_node(&binned.bins, y, &samples, params, n_sub, p, 0, &mut rng, &mut nodes);
        trees.push(Tree { nodes });
    }
    Ok(ForestModel {
        trees,
        params: params.clone(),
        feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
        bin_edges: binned.edges,
    })
}

fn ceil_frac(frac: f64, n: usize) -> usize {
    let exact = frac * n as f64;
    let c = exact as usize;
    if (c as f64) < exact { c + 1 } else { c }
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    bins: &[Vec<u8>],
    y: &[f64],
    samples: &[u32],
    params: &ForestParams,
    n_sub: usize,
    p: usize,
    depth: usize,
    rng: &mut CounterRng,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let n = samples.len();
    let sum: f64 = samples.iter().map(|&i| y[i as usize]).sum();
    let mean = sum / n as f64;

    let depth_ok = params.max_depth.map_or(true, |d| depth < d);
    let mut best: Option<(f64, usize, u8, Vec<u32>, Vec<u32>)> = None;

    if depth_ok && n >= 2 * params.min_samples_leaf.max(1) {
        let features = if n_sub < p {
            rng.sample_indices(p, n_sub)
        } else {
            (0..p).collect()
        };
        // variance reduction = sum_L^2/n_L + sum_R^2/n_R - sum^2/n
        let parent_score = sum * sum / n as f64;
        for &f in &features {
            let mut hist_sum = [0.0f64; 256];
            let mut hist_cnt = [0usize; 256];
            let mut max_bin = 0usize;
            for &i in samples {
                let b = bins[f][i as usize] as usize;
                hist_sum[b] += y[i as usize];
                hist_cnt[b] += 1;
                if b > max_bin {
                    max_bin = b;
                }
            }
            let mut sum_l = 0.0;
            let mut cnt_l = 0usize;
            for t in 0..max_bin {
                sum_l += hist_sum[t];
                cnt_l += hist_cnt[t];
                if cnt_l < params.min_samples_leaf {
                    continue;
                }
                let cnt_r = n - cnt_l;
                if cnt_r < params.min_samples_leaf {
                    break;
                }
                let sum_r = sum - sum_l;
                let reduction =
                    sum_l * sum_l / cnt_l as f64 + sum_r * sum_r / cnt_r as f64 - parent_score;
                if reduction > 1e-12 && best.as_ref().map_or(true, |b| reduction > b.0) {
                    best = Some((reduction, f, t as u8, Vec::new(), Vec::new()));
                }
            }
        }
    }

    match best {
        Some((_, feature, threshold_bin, ..)) => {
            let mut left_samples = Vec::new();
            let mut right_samples = Vec::new();
            for &i in samples {
                if bins[feature][i as usize] <= threshold_bin {
                    left_samples.push(i);
                } else {
                    right_samples.push(i);
                }
            }
            let slot = nodes.len();
            nodes.push(TreeNode::Internal {
                feature,
                threshold_bin,
                left: 0,
                right: 0,
                cover: n as f64,
            });
            let left = grow_node(bins, y, &left_samples, params, n_sub, p, depth + 1, rng, nodes);
            let right = grow_node(bins, y, &right_samples, params, n_sub, p, depth + 1, rng, nodes);
            if let TreeNode::Internal { left: l, right: r, .. } = &mut nodes[slot] {
                *l = left;
                *r = right;
            }
            slot
        }
        None => {
            let slot = nodes.len();
            nodes.push(TreeNode::Leaf {
                weight: mean,
                cover: n as f64,
                sum_gradient: -sum,
                sum_hessian: n as f64,
            });
            slot
        }
    }
}

impl ForestModel {
    /// Mean of per-tree predictions.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, CoreError> {
        let names: Vec<&str> = x.columns.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.feature_names.len()
            || names.iter().zip(&self.feature_names).any(|(a, b)| *a != b.as_str())
        {
            return Err(CoreError::SchemaMismatch(String::from(
                "rf predict input must share fit-time feature names",
            )));
        }
        x.validate()?;
        Ok((0..x.n_rows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row, &self.bin_edges)).sum();
        sum / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{FeatureKind, FeatureMeta, SystemTag};
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

    #[test]
    fn single_unbagged_tree_memorizes_distinct_rows() {
        let n = 50;
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = xs.iter().map(|v| (v * 0.3).sin() * 5.0 + v).collect();
        let x = matrix_of(vec![xs], y.clone());
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            feature_subsample: 1.0,
            min_samples_leaf: 1,
            max_depth: None,
            ..ForestParams::default()
        };
        let model = rf_fit(&x, &y, &params).unwrap();
        let preds = model.predict(&x).unwrap();
        let r2 = crate::metrics::r2(&y, &preds).unwrap();
        assert!((r2 - 1.0).abs() < 1e-12, "r2 = {r2}");
    }

    #[test]
    fn constant_target_constant_predictions() {
        let y = vec![3.3; 20];
        let x = matrix_of(vec![(0..20).map(|i| i as f64).collect()], y.clone());
        let params = ForestParams { n_trees: 10, min_samples_leaf: 1, ..ForestParams::default() };
        let model = rf_fit(&x, &y, &params).unwrap();
        for pred in model.predict(&x).unwrap() {
            assert!((pred - 3.3).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = CounterRng::new(2, b"rf-test");
        let n = 100;
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| xs[0][i] * 2.0 + xs[2][i] + 0.1 * rng.normal()).collect();
        let x = matrix_of(xs, y.clone());
        let params = ForestParams { n_trees: 20, seed: 7, ..ForestParams::default() };
        let a = rf_fit(&x, &y, &params).unwrap();
        let b = rf_fit(&x, &y, &params).unwrap();
        assert_eq!(a.trees, b.trees);
    }
}
