//! Coordinate-descent elastic net checked against an independent ordinary
//! least squares solver (normal equations + Gaussian elimination) when both
//! penalties vanish.

use bioclock_core::linear::{enet_fit, ElasticNetParams};
use bioclock_core::matrix::{FeatureKind, FeatureMatrix, FeatureMeta, SystemTag};
use bioclock_core::rng::CounterRng;

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
                name: format!("f{i}"),
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

/// Solve min ||y - [1 X] beta||^2 by normal equations with partial-pivot
/// Gaussian elimination. Returns (intercept, coefficients).
fn ols_oracle(cols: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let p = cols.len();
    let d = p + 1;
    // design matrix rows: [1, x_1, ..., x_p]
    let design: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(d);
            row.push(1.0);
            for col in cols {
                row.push(col[i]);
            }
            row
        })
        .collect();
    // A = X'X, b = X'y
    let mut a = vec![vec![0.0; d + 1]; d];
    for (j, row_a) in a.iter_mut().enumerate() {
        for k in 0..d {
            row_a[k] = design.iter().map(|r| r[j] * r[k]).sum();
        }
        row_a[d] = design.iter().zip(y).map(|(r, &yi)| r[j] * yi).sum();
    }
    // forward elimination with partial pivoting
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-12, "singular oracle system");
        for row in col + 1..d {
            let factor = a[row][col] / a[col][col];
            for k in col..=d {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    // back substitution
    let mut beta = vec![0.0; d];
    for row in (0..d).rev() {
        let mut acc = a[row][d];
        for k in row + 1..d {
            acc -= a[row][k] * beta[k];
        }
        beta[row] = acc / a[row][row];
    }
    (beta[0], beta[1..].to_vec())
}

#[test]
fn zero_penalty_elastic_net_recovers_ols() {
    for case in 0u64..5 {
        let mut rng = CounterRng::new(case, b"enet-ols");
        let n = 200;
        let p = 4;
        let cols: Vec<Vec<f64>> =
            (0..p).map(|j| (0..n).map(|_| rng.normal() * (1.0 + j as f64)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                2.5 - 1.2 * cols[0][i] + 0.4 * cols[1][i] + 3.0 * cols[3][i] + 0.5 * rng.normal()
            })
            .collect();
        let (oracle_b0, oracle_coef) = ols_oracle(&cols, &y);
        let x = matrix_of(cols, y.clone());
        let params = ElasticNetParams { alpha: 0.0, l1_ratio: 0.0, max_iter: 200_000, tol: 1e-12 };
        let model = enet_fit(&x, &y, &params).unwrap();
        assert!(
            (model.intercept - oracle_b0).abs() < 1e-6,
            "case {case}: intercept {} vs OLS {oracle_b0}",
            model.intercept
        );
        for (j, (&c, &o)) in model.coefficients.iter().zip(&oracle_coef).enumerate() {
            assert!((c - o).abs() < 1e-6, "case {case} coef {j}: {c} vs OLS {o}");
        }
    }
}

#[test]
fn l1_dominant_fit_is_sparser_than_ridge_dominant() {
    let mut rng = CounterRng::new(9, b"enet-sparse");
    let n = 300;
    let p = 10;
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
    // only two informative features
    let y: Vec<f64> =
        (0..n).map(|i| 4.0 * cols[0][i] - 3.0 * cols[5][i] + 0.5 * rng.normal()).collect();
    let x = matrix_of(cols, y.clone());
    let lasso = enet_fit(
        &x,
        &y,
        &ElasticNetParams { alpha: 0.5, l1_ratio: 1.0, ..ElasticNetParams::default() },
    )
    .unwrap();
    let ridge = enet_fit(
        &x,
        &y,
        &ElasticNetParams { alpha: 0.5, l1_ratio: 0.0, ..ElasticNetParams::default() },
    )
    .unwrap();
    let nz = |c: &[f64]| c.iter().filter(|v| v.abs() > 1e-9).count();
    assert!(nz(&lasso.coefficients) < nz(&ridge.coefficients));
    assert!(lasso.coefficients[0] > 1.0 && lasso.coefficients[5] < -1.0);
}
