//! Evaluation metrics and the permutation test used for group comparisons.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::rng::CounterRng;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Coefficient of determination: 1 - SS_res / SS_tot.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64, CoreError> {
    if y.len() != yhat.len() {
        return Err(CoreError::DimensionMismatch {
            context: String::from("r2"),
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.len() < 2 {
        return Err(CoreError::EmptyData(String::from("r2 needs at least 2 points")));
    }
    let ybar = mean(y);
    let ss_tot: f64 = y.iter().map(|yi| (yi - ybar) * (yi - ybar)).sum();
    if ss_tot == 0.0 {
        return Err(CoreError::Undefined(String::from(
            "r2 with constant target (zero variance)",
        )));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(yi, pi)| (yi - pi) * (yi - pi)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, CoreError> {
    if y.len() != yhat.len() {
        return Err(CoreError::DimensionMismatch {
            context: String::from("rmse"),
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(CoreError::EmptyData(String::from("rmse")));
    }
    let mse: f64 =
        y.iter().zip(yhat).map(|(yi, pi)| (yi - pi) * (yi - pi)).sum::<f64>() / y.len() as f64;
    Ok(libm::sqrt(mse))
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CoreError> {
    if x.len() != y.len() {
        return Err(CoreError::DimensionMismatch {
            context: String::from("pearson"),
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(CoreError::EmptyData(String::from("pearson needs at least 3 points")));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CoreError::Undefined(String::from(
            "correlation with zero-variance input",
        )));
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// Mid-rank transform: ties receive the average of the ranks they span.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut ranks = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block [i, j] shares the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on mid-ranked data.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, CoreError> {
    if x.len() != y.len() {
        return Err(CoreError::DimensionMismatch {
            context: String::from("spearman"),
            left: x.len(),
            right: y.len(),
        });
    }
    pearson(&midranks(x), &midranks(y))
}

/// Two-sided permutation test for a difference in group means.
///
/// Pools both groups, redraws the group-a labels `n_perm` times, and returns
/// the fraction of permutations whose |mean difference| meets or exceeds the
/// observed one (with the +1 small-sample correction).
pub fn permutation_pvalue(a: &[f64], b: &[f64], n_perm: usize, rng: &mut CounterRng) -> f64 {
    let observed = (mean(a) - mean(b)).abs();
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let na = a.len();
    let mut at_least = 0usize;
    for _ in 0..n_perm {
        rng.shuffle(&mut pooled);
        let pa = mean(&pooled[..na]);
        let pb = mean(&pooled[na..]);
        if (pa - pb).abs() >= observed {
            at_least += 1;
        }
    }
    (at_least + 1) as f64 / (n_perm + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn r2_perfect_and_mean() {
        let y = vec![1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        let ybar = vec![2.0, 2.0, 2.0];
        assert_eq!(r2(&y, &ybar).unwrap(), 0.0);
    }

    #[test]
    fn r2_hand_example() {
        let y = vec![1.0, 2.0, 3.0];
        let yhat = vec![1.0, 2.0, 4.0];
        assert!((r2(&y, &yhat).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn r2_constant_target_undefined() {
        let y = vec![5.0, 5.0, 5.0];
        assert!(matches!(r2(&y, &y), Err(CoreError::Undefined(_))));
    }

    #[test]
    fn rmse_cases() {
        let y = vec![1.0, 2.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let yhat = vec![4.0, 6.0];
        assert!((rmse(&y, &yhat).unwrap() - libm::sqrt(12.5)).abs() < 1e-15);
        let off = vec![3.5, 4.5];
        assert!((rmse(&y, &off).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn pearson_antisymmetric() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_monotone_and_quadratic() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![1.0, 4.0, 9.0, 16.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        // product-moment value computed by hand oracle in tests/metrics_oracle.rs
        assert!((pearson(&x, &y).unwrap() - 0.984_374_9).abs() < 1e-6);
    }

    #[test]
    fn midranks_handle_ties() {
        let v = vec![3.0, 1.0, 3.0, 2.0];
        assert_eq!(midranks(&v), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn permutation_detects_separation() {
        let a: Vec<f64> = (0..40).map(|i| 10.0 + i as f64 * 0.01).collect();
        let b: Vec<f64> = (0..40).map(|i| 0.0 + i as f64 * 0.01).collect();
        let mut rng = CounterRng::new(42, b"perm-test");
        let p = permutation_pvalue(&a, &b, 2000, &mut rng);
        assert!(p < 0.001, "p = {p}");
        // identical groups: p should be large
        let mut rng2 = CounterRng::new(42, b"perm-test-2");
        let p2 = permutation_pvalue(&a, &a, 2000, &mut rng2);
        assert!(p2 > 0.5, "p2 = {p2}");
    }
}
