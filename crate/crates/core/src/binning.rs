//! Quantile histogram binning for tree models.
//!
//! Bin edges are computed once on training data; both training and any
//! later prediction route values through the same edges. A value equal to
//! an edge falls in the bin to the right (lower-inclusive convention).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::FeatureMatrix;

/// Per-feature bin boundaries. `edges[k]` separates bin `k` from bin `k+1`,
/// so a feature with `m` edges has `m + 1` bins; a constant feature has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub per_feature: Vec<Vec<f64>>,
}

impl BinEdges {
    pub fn n_bins(&self, feature: usize) -> usize {
        self.per_feature[feature].len() + 1
    }

    /// Map a raw value to its bin id for a feature.
    #[inline]
    pub fn bin_value(&self, feature: usize, value: f64) -> u8 {
        let edges = &self.per_feature[feature];
        // edges are sorted; count edges <= value
        let mut lo = 0usize;
        let mut hi = edges.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if edges[mid] <= value {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo as u8
    }
}

/// Column-major matrix of bin ids.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    /// `bins[feature][row]`
    pub bins: Vec<Vec<u8>>,
    pub edges: BinEdges,
}

/// Compute quantile bin edges on training data and bin it.
///
/// Edges sit at the sorted values closest to the i/max_bins quantiles,
/// deduplicated, so no feature gets more than `max_bins` bins and heavily
/// tied features get fewer.
pub fn bin_features(x: &FeatureMatrix, max_bins: usize) -> Result<BinnedMatrix, CoreError> {
    if !(2..=255).contains(&max_bins) {
        return Err(CoreError::InvalidParam(alloc::format!(
            "max_bins must be in [2, 255], got {max_bins}"
        )));
    }
    x.validate()?;
    let n = x.n_rows();
    let p = x.n_features();
    if n == 0 {
        return Err(CoreError::EmptyData(alloc::string::String::from("bin_features")));
    }
    let mut per_feature = Vec::with_capacity(p);
    for f in 0..p {
        let mut sorted = x.column_values(f);
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut edges: Vec<f64> = Vec::new();
        for i in 1..max_bins {
            let idx = (n * i) / max_bins;
            if idx == 0 || idx >= n {
                continue;
            }
            let e = sorted[idx];
            // skip degenerate edges (would create an empty bin)
            if e > sorted[0] && edges.last().map_or(true, |&last| e > last) {
                edges.push(e);
            }
        }
        per_feature.push(edges);
    }
    let edges = BinEdges { per_feature };
    let bins = bin_with_edges(x, &edges);
    Ok(BinnedMatrix { n_rows: n, bins, edges })
}

/// Bin a matrix using previously fitted edges (prediction path).
pub fn bin_with_edges(x: &FeatureMatrix, edges: &BinEdges) -> Vec<Vec<u8>> {
    let n = x.n_rows();
    let p = x.n_features();
    let mut bins = Vec::with_capacity(p);
    for f in 0..p {
        let mut col = Vec::with_capacity(n);
        for r in 0..n {
            col.push(edges.bin_value(f, x.value(r, f)));
        }
        bins.push(col);
    }
    bins
}
