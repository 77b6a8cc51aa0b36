//! Annualized-slope arithmetic: the per-biomarker rate of change between
//! two visits, in units per year.

use crate::error::CoreError;

/// (y2 - y1) / (t2 - t1), exactly, with times in fractional years.
pub fn compute_slope(y1: f64, y2: f64, t1: f64, t2: f64) -> Result<f64, CoreError> {
    if t2 <= t1 {
        return Err(CoreError::Chronology { t1, t2 });
    }
    if !y1.is_finite() || !y2.is_finite() {
        return Err(CoreError::NonFinite {
            context: alloc::string::String::from("slope inputs"),
        });
    }
    Ok((y2 - y1) / (t2 - t1))
}

/// Slope over optionally-missing values: `None` when either visit lacks the
/// biomarker, so a participant can contribute some slopes but not others.
pub fn compute_slope_opt(
    y1: Option<f64>,
    y2: Option<f64>,
    t1: f64,
    t2: f64,
) -> Result<Option<f64>, CoreError> {
    match (y1, y2) {
        (Some(a), Some(b)) => compute_slope(a, b, t1, t2).map(Some),
        _ => {
            if t2 <= t1 {
                return Err(CoreError::Chronology { t1, t2 });
            }
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_rate() {
        assert_eq!(compute_slope(80.0, 84.0, 0.0, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn zero_change() {
        assert_eq!(compute_slope(5.5, 5.5, 1.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn chronology_rejected() {
        assert!(matches!(
            compute_slope(1.0, 2.0, 3.0, 3.0),
            Err(CoreError::Chronology { .. })
        ));
        assert!(matches!(
            compute_slope_opt(None, Some(2.0), 3.0, 2.0),
            Err(CoreError::Chronology { .. })
        ));
    }

    #[test]
    fn missing_propagates_as_none() {
        assert_eq!(compute_slope_opt(None, Some(2.0), 0.0, 2.0).unwrap(), None);
        assert_eq!(compute_slope_opt(Some(1.0), None, 0.0, 2.0).unwrap(), None);
        assert_eq!(
            compute_slope_opt(Some(1.0), Some(2.0), 0.0, 2.0).unwrap(),
            Some(0.5)
        );
    }
}
