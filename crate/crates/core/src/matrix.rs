//! The assembled design matrix shared by every model.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// How a feature column was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Baseline,
    Interaction,
    Slope,
}

/// Physiological system a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemTag {
    Cardiovascular,
    BloodLipids,
    Sleep,
    BodyComposition,
    Lifestyle,
    Diet,
    Renal,
    Other,
}

impl SystemTag {
    pub const ALL: [SystemTag; 8] = [
        SystemTag::Cardiovascular,
        SystemTag::BloodLipids,
        SystemTag::Sleep,
        SystemTag::BodyComposition,
        SystemTag::Lifestyle,
        SystemTag::Diet,
        SystemTag::Renal,
        SystemTag::Other,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SystemTag::Cardiovascular => "Cardiovascular",
            SystemTag::BloodLipids => "BloodLipids",
            SystemTag::Sleep => "Sleep",
            SystemTag::BodyComposition => "BodyComposition",
            SystemTag::Lifestyle => "Lifestyle",
            SystemTag::Diet => "Diet",
            SystemTag::Renal => "Renal",
            SystemTag::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<SystemTag> {
        Self::ALL.iter().copied().find(|t| t.name() == s)
    }
}

/// Per-column metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    pub system: SystemTag,
    pub unit: String,
}

/// Row-major numeric design matrix with aligned row ids and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<FeatureMeta>,
    pub row_ids: Vec<String>,
    /// Row-major, `n_rows * columns.len()` finite values.
    pub values: Vec<f64>,
    /// Chronological age per row, the regression target.
    pub target: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.columns.len();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Copy of one feature column.
    pub fn column_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, col)).collect()
    }

    /// Checks shape consistency and finiteness of values and target.
    pub fn validate(&self) -> Result<(), CoreError> {
        let n = self.row_ids.len();
        let p = self.columns.len();
        if self.values.len() != n * p {
            return Err(CoreError::DimensionMismatch {
                context: String::from("feature matrix values"),
                left: self.values.len(),
                right: n * p,
            });
        }
        if self.target.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: String::from("feature matrix target"),
                left: self.target.len(),
                right: n,
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let p = p.max(1);
            return Err(CoreError::NonFinite {
                context: alloc::format!("matrix cell ({}, {})", i / p, i % p),
            });
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: String::from("target vector"),
            });
        }
        Ok(())
    }

    /// New matrix restricted to the given row indices.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let p = self.columns.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut row_ids = Vec::with_capacity(rows.len());
        let mut target = Vec::with_capacity(rows.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
            row_ids.push(self.row_ids[r].clone());
            target.push(self.target[r]);
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            row_ids,
            values,
            target,
        }
    }

    /// New matrix restricted to the given column indices (target kept).
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let n = self.n_rows();
        let mut values = Vec::with_capacity(n * cols.len());
        for r in 0..n {
            for &c in cols {
                values.push(self.value(r, c));
            }
        }
        FeatureMatrix {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            row_ids: self.row_ids.clone(),
            values,
            target: self.target.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn meta(name: &str) -> FeatureMeta {
        FeatureMeta {
            name: name.to_string(),
            kind: FeatureKind::Baseline,
            system: SystemTag::Other,
            unit: String::new(),
        }
    }

    #[test]
    fn validate_catches_nan() {
        let m = FeatureMatrix {
            columns: vec![meta("a")],
            row_ids: vec!["r1".to_string()],
            values: vec![f64::NAN],
            target: vec![50.0],
        };
        assert!(matches!(m.validate(), Err(CoreError::NonFinite { .. })));
    }

    #[test]
    fn select_rows_and_columns() {
        let m = FeatureMatrix {
            columns: vec![meta("a"), meta("b")],
            row_ids: vec!["r1".to_string(), "r2".to_string(), "r3".to_string()],
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            target: vec![10.0, 20.0, 30.0],
        };
        let rows = m.select_rows(&[2, 0]);
        assert_eq!(rows.row_ids, vec!["r3".to_string(), "r1".to_string()]);
        assert_eq!(rows.values, vec![5.0, 6.0, 1.0, 2.0]);
        let cols = m.select_columns(&[1]);
        assert_eq!(cols.columns.len(), 1);
        assert_eq!(cols.values, vec![2.0, 4.0, 6.0]);
        assert_eq!(cols.target, m.target);
    }
}
