//! Elastic-net linear regression by cyclic coordinate descent with
//! soft-thresholding, on internally standardized features.
//!
//! Minimizes `(1/2n)||y - Xw - b||^2 + alpha*(rho*||w||_1 +
//! (1-rho)/2*||w||^2)`; coefficients are reported back on the original
//! feature scale.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetParams {
    /// Total penalty strength, >= 0.
    pub alpha: f64,
    /// L1 share rho in [0, 1]; 1 = lasso, 0 = ridge.
    pub l1_ratio: f64,
    pub max_iter: usize,
    /// Convergence threshold on the max standardized-coefficient change.
    pub tol: f64,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        ElasticNetParams {
            alpha: 0.1,
            l1_ratio: 0.5,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

impl ElasticNetParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.alpha < 0.0 {
            return Err(CoreError::InvalidParam(String::from("alpha must be >= 0")));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(CoreError::InvalidParam(String::from("l1_ratio must be in [0, 1]")));
        }
        if self.tol <= 0.0 {
            return Err(CoreError::InvalidParam(String::from("tol must be > 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub intercept: f64,
    /// Coefficients on the original feature scale.
    pub coefficients: Vec<f64>,
    /// Coefficients on the standardized scale (the optimization variables).
    pub std_coefficients: Vec<f64>,
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
    pub feature_names: Vec<String>,
    pub params: ElasticNetParams,
    pub converged: bool,
    /// Max coefficient change of the final sweep.
    pub final_delta: f64,
    pub n_iter: usize,
}

#[inline]
fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

/// Penalized least-squares objective on standardized data.
pub fn objective(
    x_std: &[Vec<f64>],
    y_centered: &[f64],
    w: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> f64 {
    let n = y_centered.len();
    let mut sse = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for (j, col) in x_std.iter().enumerate() {
            fit += col[i] * w[j];
        }
        let r = y_centered[i] - fit;
        sse += r * r;
    }
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    sse / (2.0 * n as f64) + alpha * (l1_ratio * l1 + 0.5 * (1.0 - l1_ratio) * l2)
}

pub fn enet_fit(
    x: &FeatureMatrix,
    y: &[f64],
    params: &ElasticNetParams,
) -> Result<ElasticNetModel, CoreError> {
    params.validate()?;
    x.validate()?;
    let n = x.n_rows();
    let p = x.n_features();
    if n < 2 {
        return Err(CoreError::EmptyData(String::from("enet fit needs n >= 2")));
    }
    if y.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: String::from("enet fit target"),
            left: y.len(),
            right: n,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite { context: String::from("enet fit target") });
    }

    // standardize columns; constant columns get sd 1 and stay at coefficient 0
    let mut means = alloc::vec![0.0; p];
    let mut sds = alloc::vec![0.0; p];
    let mut x_std: Vec<Vec<f64>> = alloc::vec![alloc::vec![0.0; n]; p];
    for j in 0..p {
        let col = x.column_values(j);
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        means[j] = m;
        sds[j] = sd;
        for i in 0..n {
            x_std[j][i] = (col[i] - m) / sd;
        }
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_c: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // per-column curvature z_j = (1/n) sum x_ij^2 (1 up to rounding, 0 for
    // constant columns)
    let z: Vec<f64> = x_std
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>() / n as f64)
        .collect();

    let l1_pen = params.alpha * params.l1_ratio;
    let l2_pen = params.alpha * (1.0 - params.l1_ratio);

    let mut w = alloc::vec![0.0; p];
    let mut residual = y_c.clone();
    let mut final_delta = f64::INFINITY;
    let mut converged = false;
    let mut n_iter = 0;
    for sweep in 0..params.max_iter {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if z[j] == 0.0 {
                continue;
            }
            let col = &x_std[j];
            // rho_j = (1/n) <x_j, r + x_j w_j>
            let mut dot = 0.0;
            for i in 0..n {
                dot += col[i] * residual[i];
            }
            let rho_j = dot / n as f64 + z[j] * w[j];
            let new_w = soft_threshold(rho_j, l1_pen) / (z[j] + l2_pen);
            let delta = new_w - w[j];
            if delta != 0.0 {
                for i in 0..n {
                    residual[i] -= delta * col[i];
                }
                w[j] = new_w;
            }
            max_delta = max_delta.max(delta.abs());
        }
        n_iter = sweep + 1;
        final_delta = max_delta;
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }

    let coefficients: Vec<f64> = (0..p).map(|j| w[j] / sds[j]).collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(ElasticNetModel {
        intercept,
        coefficients,
        std_coefficients: w,
        feature_means: means,
        feature_sds: sds,
        feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
        params: params.clone(),
        converged,
        final_delta,
        n_iter,
    })
}

impl ElasticNetModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, CoreError> {
        let names: Vec<&str> = x.columns.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.feature_names.len()
            || names.iter().zip(&self.feature_names).any(|(a, b)| *a != b.as_str())
        {
            return Err(CoreError::SchemaMismatch(String::from(
                "enet predict input must share fit-time feature names",
            )));
        }
        x.validate()?;
        Ok((0..x.n_rows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum::<f64>()
    }
}
