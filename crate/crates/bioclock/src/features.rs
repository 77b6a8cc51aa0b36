//! Imputation, slope and interaction engineering, and design-matrix
//! assembly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use bioclock_core::matrix::{FeatureKind, FeatureMatrix, FeatureMeta, SystemTag};
use bioclock_core::slope::compute_slope_opt;

use crate::cohort::{CohortTable, LongitudinalCohort, Sex};
use crate::error::{PipelineError, Result};

pub const DEFAULT_SYSTEM_MAP_JSON: &str = include_str!("../configs/system_map.json");

pub const BMI_COLUMN: &str = "bmi";
pub const SBP_COLUMN: &str = "sitting_blood_pressure_systolic";
pub const WHR_COLUMN: &str = "waist_to_hip_ratio";
pub const INTERACTION_COLUMNS: [&str; 2] = ["bmi_bp_interaction", "whr_squared"];

/// Static column-to-system assignment; slope columns inherit from their
/// source column, anything unmapped falls into `Other`.
#[derive(Debug, Clone, Default)]
pub struct SystemMap {
    map: BTreeMap<String, SystemTag>,
}

impl SystemMap {
    pub fn default_map() -> SystemMap {
        Self::from_json(DEFAULT_SYSTEM_MAP_JSON).expect("embedded system map parses")
    }

    pub fn from_json(json: &str) -> Result<SystemMap> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)
            .map_err(|e| PipelineError::Config(format!("system map: {e}")))?;
        let mut map = BTreeMap::new();
        for (column, tag) in raw {
            let tag = SystemTag::parse(&tag).ok_or_else(|| {
                PipelineError::Config(format!("unknown system tag {tag:?} for column {column}"))
            })?;
            map.insert(column, tag);
        }
        Ok(SystemMap { map })
    }

    pub fn from_path(path: &Path) -> Result<SystemMap> {
        let json = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&json)
    }

    pub fn tag_for(&self, column: &str) -> SystemTag {
        if let Some(t) = self.map.get(column) {
            return *t;
        }
        if let Some(base) = column.strip_suffix("_slope") {
            if let Some(t) = self.map.get(base) {
                return *t;
            }
        }
        SystemTag::Other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationEntry {
    pub column: String,
    pub sex: String,
    pub median: f64,
    pub filled: usize,
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Replace every Missing biomarker cell with the sex-specific median of the
/// column, medians computed before any replacement. Observed cells are
/// untouched (bitwise).
pub fn impute_sex_median(table: &CohortTable) -> Result<(CohortTable, Vec<ImputationEntry>)> {
    let mut out = table.clone();
    let mut log = Vec::new();
    for (c, column) in table.biomarker_columns.iter().enumerate() {
        for sex in [Sex::Female, Sex::Male] {
            let observed: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.sex == sex)
                .filter_map(|r| r.biomarkers[c])
                .collect();
            let gaps = table
                .rows
                .iter()
                .filter(|r| r.sex == sex && r.biomarkers[c].is_none())
                .count();
            if gaps == 0 {
                continue;
            }
            if observed.is_empty() {
                return Err(PipelineError::Unimputable {
                    column: column.clone(),
                    sex: sex.code().to_string(),
                });
            }
            let median = median_of(observed);
            for row in out.rows.iter_mut().filter(|r| r.sex == sex) {
                if row.biomarkers[c].is_none() {
                    row.biomarkers[c] = Some(median);
                }
            }
            log.push(ImputationEntry {
                column: column.clone(),
                sex: sex.code().to_string(),
                median,
                filled: gaps,
            });
        }
    }
    Ok((out, log))
}

/// Annualized slopes per id; Missing exactly when either wave's value is.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeTable {
    pub ids: Vec<String>,
    /// `<biomarker>_slope` names.
    pub columns: Vec<String>,
    /// Row-major, `ids.len() * columns.len()`.
    pub values: Vec<Option<f64>>,
}

impl SlopeTable {
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.columns.len() + col]
    }
}

pub fn compute_slopes(cohort: &LongitudinalCohort, columns: &[String]) -> Result<SlopeTable> {
    let mut indices = Vec::with_capacity(columns.len());
    for c in columns {
        let idx = cohort
            .biomarker_columns
            .iter()
            .position(|col| col == c)
            .ok_or_else(|| PipelineError::Config(format!("unknown slope column {c:?}")))?;
        indices.push(idx);
    }
    let mut values = Vec::with_capacity(cohort.n_pairs() * columns.len());
    for pair in &cohort.pairs {
        let t1 = 0.0;
        let t2 = pair.elapsed_years;
        for &idx in &indices {
            let slope =
                compute_slope_opt(pair.wave1.biomarkers[idx], pair.wave2.biomarkers[idx], t1, t2)?;
            values.push(slope);
        }
    }
    Ok(SlopeTable {
        ids: cohort.pairs.iter().map(|p| p.wave1.id.clone()).collect(),
        columns: columns.iter().map(|c| format!("{c}_slope")).collect(),
        values,
    })
}

/// BMI x systolic BP and WHR squared.
pub fn interaction_features(bmi: f64, sbp: f64, whr: f64) -> (f64, f64) {
    (bmi * sbp, whr * whr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlopePolicy {
    /// Fill missing slopes with the sex-specific median of computed slopes.
    MedianImpute,
    /// Drop any row with at least one missing slope.
    DropRow,
}

impl SlopePolicy {
    pub fn parse(s: &str) -> Option<SlopePolicy> {
        match s {
            "median" => Some(SlopePolicy::MedianImpute),
            "drop" => Some(SlopePolicy::DropRow),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SlopePolicy::MedianImpute => "median",
            SlopePolicy::DropRow => "drop",
        }
    }
}

/// Assemble `[baselines..., interactions..., slopes...]` with the baseline
/// wave's chronological age as target.
///
/// The baseline table must already be imputed; slope gaps are handled per
/// `policy`.
pub fn assemble_matrix(
    baseline: &CohortTable,
    slopes: &SlopeTable,
    policy: SlopePolicy,
    system_map: &SystemMap,
) -> Result<FeatureMatrix> {
    let n = baseline.n_rows();
    if slopes.ids.len() != n
        || baseline.rows.iter().zip(&slopes.ids).any(|(r, id)| &r.id != id)
    {
        return Err(PipelineError::Alignment(
            "slope table ids do not align with the baseline wave".into(),
        ));
    }
    let bmi_idx = baseline
        .column_index(BMI_COLUMN)
        .ok_or_else(|| PipelineError::Config(format!("missing column {BMI_COLUMN}")))?;
    let sbp_idx = baseline
        .column_index(SBP_COLUMN)
        .ok_or_else(|| PipelineError::Config(format!("missing column {SBP_COLUMN}")))?;
    let whr_idx = baseline
        .column_index(WHR_COLUMN)
        .ok_or_else(|| PipelineError::Config(format!("missing column {WHR_COLUMN}")))?;

    // resolve slope gaps first
    let p_slopes = slopes.columns.len();
    let mut slope_values: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut keep: Vec<bool> = vec![true; n];
    match policy {
        SlopePolicy::DropRow => {
            for r in 0..n {
                let row: Vec<Option<f64>> = (0..p_slopes).map(|c| slopes.value(r, c)).collect();
                if row.iter().any(Option::is_none) {
                    keep[r] = false;
                    slope_values.push(Vec::new());
                } else {
                    slope_values.push(row.into_iter().map(Option::unwrap).collect());
                }
            }
        }
        SlopePolicy::MedianImpute => {
            // sex-specific medians of the computed slopes, per column
            let mut medians: Vec<BTreeMap<Sex, f64>> = Vec::with_capacity(p_slopes);
            for c in 0..p_slopes {
                let mut by_sex = BTreeMap::new();
                for sex in [Sex::Female, Sex::Male] {
                    let observed: Vec<f64> = (0..n)
                        .filter(|&r| baseline.rows[r].sex == sex)
                        .filter_map(|r| slopes.value(r, c))
                        .collect();
                    if !observed.is_empty() {
                        by_sex.insert(sex, median_of(observed));
                    }
                }
                medians.push(by_sex);
            }
            for r in 0..n {
                let sex = baseline.rows[r].sex;
                let mut row = Vec::with_capacity(p_slopes);
                for (c, med) in medians.iter().enumerate() {
                    match slopes.value(r, c) {
                        Some(v) => row.push(v),
                        None => {
                            let m = med.get(&sex).ok_or_else(|| PipelineError::Unimputable {
                                column: slopes.columns[c].clone(),
                                sex: sex.code().to_string(),
                            })?;
                            row.push(*m);
                        }
                    }
                }
                slope_values.push(row);
            }
        }
    }

    let mut columns: Vec<FeatureMeta> = Vec::new();
    for name in &baseline.biomarker_columns {
        columns.push(FeatureMeta {
            name: name.clone(),
            kind: FeatureKind::Baseline,
            system: system_map.tag_for(name),
            unit: String::new(),
        });
    }
    for name in INTERACTION_COLUMNS {
        columns.push(FeatureMeta {
            name: name.to_string(),
            kind: FeatureKind::Interaction,
            system: system_map.tag_for(name),
            unit: String::new(),
        });
    }
    for name in &slopes.columns {
        columns.push(FeatureMeta {
            name: name.clone(),
            kind: FeatureKind::Slope,
            system: system_map.tag_for(name),
            unit: String::from("per_year"),
        });
    }

    let p = columns.len();
    let mut values = Vec::new();
    let mut row_ids = Vec::new();
    let mut target = Vec::new();
    for (r, row) in baseline.rows.iter().enumerate() {
        if !keep[r] {
            continue;
        }
        for (c, cell) in row.biomarkers.iter().enumerate() {
            let v = cell.ok_or_else(|| {
                PipelineError::Config(format!(
                    "baseline column {} still Missing for id {}; impute before assembly",
                    baseline.biomarker_columns[c], row.id
                ))
            })?;
            values.push(v);
        }
        let bmi = row.biomarkers[bmi_idx].expect("checked above");
        let sbp = row.biomarkers[sbp_idx].expect("checked above");
        let whr = row.biomarkers[whr_idx].expect("checked above");
        let (inter, whr2) = interaction_features(bmi, sbp, whr);
        values.push(inter);
        values.push(whr2);
        values.extend_from_slice(&slope_values[r]);
        row_ids.push(row.id.clone());
        target.push(row.age_years);
    }
    debug_assert_eq!(values.len(), row_ids.len() * p);

    let matrix = FeatureMatrix { columns, row_ids, values, target };
    matrix.validate()?;
    Ok(matrix)
}

/// CSV with `id,target,<features...>` columns.
pub fn write_matrix_csv(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    let mut header = vec!["id".to_string(), "target".to_string()];
    header.extend(matrix.columns.iter().map(|c| c.name.clone()));
    writer.write_record(&header).map_err(|e| PipelineError::csv(path, e))?;
    for r in 0..matrix.n_rows() {
        let mut fields = vec![matrix.row_ids[r].clone(), format!("{}", matrix.target[r])];
        fields.extend(matrix.row(r).iter().map(|v| format!("{v}")));
        writer.write_record(&fields).map_err(|e| PipelineError::csv(path, e))?;
    }
    writer.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

/// JSON sidecar with the column metadata.
pub fn write_matrix_meta(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&matrix.columns)
        .map_err(|e| PipelineError::Persistence(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| PipelineError::io(path, e))
}
