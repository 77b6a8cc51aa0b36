//! Wave-file loading, validation, pairing, and exclusion filtering.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveId {
    Wave1,
    Wave2,
}

impl WaveId {
    pub fn label(&self) -> &'static str {
        match self {
            WaveId::Wave1 => "wave1",
            WaveId::Wave2 => "wave2",
        }
    }

    /// Inclusive collection-date window for the wave.
    pub fn date_range(&self) -> (NaiveDate, NaiveDate) {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("static date");
        match self {
            WaveId::Wave1 => (d(2019, 1, 1), d(2020, 12, 31)),
            WaveId::Wave2 => (d(2021, 1, 1), d(2022, 12, 31)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn code(&self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s {
            "F" => Some(Sex::Female),
            "M" => Some(Sex::Male),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRecord {
    pub id: String,
    pub sex: Sex,
    pub age_years: f64,
    pub collection_date: NaiveDate,
    /// Aligned with `CohortTable::excl_columns`.
    pub excl_flags: Vec<bool>,
    /// Aligned with `CohortTable::biomarker_columns`; `None` = Missing.
    pub biomarkers: Vec<Option<f64>>,
}

/// One wave of participants by biomarkers.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    pub wave_id: WaveId,
    pub excl_columns: Vec<String>,
    pub biomarker_columns: Vec<String>,
    pub rows: Vec<ParticipantRecord>,
}

impl CohortTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.biomarker_columns.iter().position(|c| c == name)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortPair {
    pub wave1: ParticipantRecord,
    pub wave2: ParticipantRecord,
    pub elapsed_years: f64,
}

/// Paired two-wave cohort: only ids present in both waves, wave-1 row order.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalCohort {
    pub excl_columns: Vec<String>,
    pub biomarker_columns: Vec<String>,
    pub pairs: Vec<CohortPair>,
    /// Ids present in wave 1 only, dropped during pairing.
    pub dropped_wave1: Vec<String>,
    /// Ids present in wave 2 only, dropped during pairing.
    pub dropped_wave2: Vec<String>,
}

impl LongitudinalCohort {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.pairs.iter().map(|p| p.wave1.id.as_str()).collect()
    }

    /// Reassemble one wave of the paired cohort as a standalone table.
    pub fn wave_table(&self, wave: WaveId) -> CohortTable {
        let rows = self
            .pairs
            .iter()
            .map(|p| match wave {
                WaveId::Wave1 => p.wave1.clone(),
                WaveId::Wave2 => p.wave2.clone(),
            })
            .collect();
        CohortTable {
            wave_id: wave,
            excl_columns: self.excl_columns.clone(),
            biomarker_columns: self.biomarker_columns.clone(),
            rows,
        }
    }
}

const FIXED_COLUMNS: [&str; 4] = ["id", "sex", "age_years", "collection_date"];
const EXCL_PREFIX: &str = "excl_";

/// Parse one wave CSV (`id,sex,age_years,collection_date,excl_*...,<biomarkers>`).
pub fn load_wave(path: &Path, wave_id: WaveId) -> Result<CohortTable> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| PipelineError::csv(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| PipelineError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < FIXED_COLUMNS.len()
        || headers[..FIXED_COLUMNS.len()] != FIXED_COLUMNS.map(str::to_string)
    {
        return Err(PipelineError::Schema(format!(
            "wave file must start with columns {FIXED_COLUMNS:?}, got {:?}",
            &headers[..headers.len().min(FIXED_COLUMNS.len())]
        )));
    }
    let rest = &headers[FIXED_COLUMNS.len()..];
    let n_excl = rest.iter().take_while(|h| h.starts_with(EXCL_PREFIX)).count();
    let excl_columns: Vec<String> = rest[..n_excl].to_vec();
    let biomarker_columns: Vec<String> = rest[n_excl..].to_vec();
    if let Some(stray) = biomarker_columns.iter().find(|h| h.starts_with(EXCL_PREFIX)) {
        return Err(PipelineError::Schema(format!(
            "exclusion column {stray} must precede all biomarker columns"
        )));
    }
    for fixed in FIXED_COLUMNS {
        if biomarker_columns.iter().any(|c| c == fixed) {
            return Err(PipelineError::Schema(format!("duplicate fixed column {fixed}")));
        }
    }

    let (lo, hi) = wave_id.date_range();
    let mut rows = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| PipelineError::csv(path, e))?;
        let line = i + 2; // 1-based, after header
        let field = |idx: usize| record.get(idx).unwrap_or("");

        let id = field(0).to_string();
        if id.is_empty() {
            return Err(PipelineError::Parse {
                row: line,
                column: "id".into(),
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(PipelineError::DuplicateId(id));
        }
        let sex = Sex::parse(field(1)).ok_or_else(|| PipelineError::Parse {
            row: line,
            column: "sex".into(),
            message: format!("expected F or M, got {:?}", field(1)),
        })?;
        let age_years: f64 = field(2).parse().map_err(|_| PipelineError::Parse {
            row: line,
            column: "age_years".into(),
            message: format!("not a number: {:?}", field(2)),
        })?;
        if !(age_years > 18.0 && age_years < 120.0) {
            return Err(PipelineError::InvalidRecord {
                id: id.clone(),
                message: format!("age {age_years} outside (18, 120)"),
            });
        }
        let collection_date =
            NaiveDate::parse_from_str(field(3), "%Y-%m-%d").map_err(|_| PipelineError::Parse {
                row: line,
                column: "collection_date".into(),
                message: format!("not an ISO-8601 date: {:?}", field(3)),
            })?;
        if collection_date < lo || collection_date > hi {
            return Err(PipelineError::InvalidRecord {
                id: id.clone(),
                message: format!(
                    "collection date {collection_date} outside {} range {lo}..{hi}",
                    wave_id.label()
                ),
            });
        }

        let mut excl_flags = Vec::with_capacity(excl_columns.len());
        for (j, col) in excl_columns.iter().enumerate() {
            let raw = field(FIXED_COLUMNS.len() + j);
            let flag = match raw {
                "" | "0" => false,
                "1" => true,
                other => {
                    return Err(PipelineError::Parse {
                        row: line,
                        column: col.clone(),
                        message: format!("exclusion flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            excl_flags.push(flag);
        }

        let mut biomarkers = Vec::with_capacity(biomarker_columns.len());
        for (j, col) in biomarker_columns.iter().enumerate() {
            let raw = field(FIXED_COLUMNS.len() + n_excl + j);
            if raw.is_empty() {
                biomarkers.push(None);
                continue;
            }
            let value: f64 = raw.parse().map_err(|_| PipelineError::Parse {
                row: line,
                column: col.clone(),
                message: format!("not a number: {raw:?}"),
            })?;
            if !value.is_finite() {
                return Err(PipelineError::Parse {
                    row: line,
                    column: col.clone(),
                    message: format!("non-finite value {value}"),
                });
            }
            biomarkers.push(Some(value));
        }

        rows.push(ParticipantRecord {
            id,
            sex,
            age_years,
            collection_date,
            excl_flags,
            biomarkers,
        });
    }

    Ok(CohortTable {
        wave_id,
        excl_columns,
        biomarker_columns,
        rows,
    })
}

/// Serialize a table back to the wave CSV schema.
pub fn write_wave(table: &CohortTable, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(table.excl_columns.iter().map(String::as_str));
    header.extend(table.biomarker_columns.iter().map(String::as_str));
    writer.write_record(&header).map_err(|e| PipelineError::csv(path, e))?;
    for row in &table.rows {
        let mut fields: Vec<String> = vec![
            row.id.clone(),
            row.sex.code().to_string(),
            format_float(row.age_years),
            row.collection_date.format("%Y-%m-%d").to_string(),
        ];
        fields.extend(row.excl_flags.iter().map(|f| if *f { "1" } else { "0" }.to_string()));
        fields.extend(row.biomarkers.iter().map(|b| b.map(format_float).unwrap_or_default()));
        writer.write_record(&fields).map_err(|e| PipelineError::csv(path, e))?;
    }
    writer.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

/// Shortest decimal round-tripping to the same f64 (Rust's default Display).
fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Keep the id-intersection of the two waves; wave-1 row order.
pub fn pair_waves(w1: &CohortTable, w2: &CohortTable) -> Result<LongitudinalCohort> {
    if w1.wave_id != WaveId::Wave1 || w2.wave_id != WaveId::Wave2 {
        return Err(PipelineError::Config(
            "pair_waves expects (Wave1, Wave2) tables in that order".into(),
        ));
    }
    if w1.biomarker_columns != w2.biomarker_columns {
        return Err(PipelineError::Schema(format!(
            "waves disagree on biomarker columns: {:?} vs {:?}",
            w1.biomarker_columns, w2.biomarker_columns
        )));
    }
    let by_id: HashMap<&str, &ParticipantRecord> =
        w2.rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let w1_ids: HashSet<&str> = w1.rows.iter().map(|r| r.id.as_str()).collect();

    let mut pairs = Vec::new();
    let mut dropped_wave1 = Vec::new();
    for r1 in &w1.rows {
        let Some(r2) = by_id.get(r1.id.as_str()) else {
            dropped_wave1.push(r1.id.clone());
            continue;
        };
        if r1.sex != r2.sex {
            return Err(PipelineError::InvalidRecord {
                id: r1.id.clone(),
                message: "sex differs between waves".into(),
            });
        }
        if r2.collection_date <= r1.collection_date {
            return Err(PipelineError::Chronology {
                id: r1.id.clone(),
                date1: r1.collection_date.to_string(),
                date2: r2.collection_date.to_string(),
            });
        }
        let elapsed_days = (r2.collection_date - r1.collection_date).num_days() as f64;
        pairs.push(CohortPair {
            wave1: r1.clone(),
            wave2: (*r2).clone(),
            elapsed_years: elapsed_days / DAYS_PER_YEAR,
        });
    }
    let dropped_wave2: Vec<String> = w2
        .rows
        .iter()
        .filter(|r| !w1_ids.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if pairs.is_empty() {
        return Err(PipelineError::EmptyCohort("no ids present in both waves".into()));
    }
    Ok(LongitudinalCohort {
        excl_columns: w1.excl_columns.clone(),
        biomarker_columns: w1.biomarker_columns.clone(),
        pairs,
        dropped_wave1,
        dropped_wave2,
    })
}

/// Remove pairs whose wave-1 record carries any of the listed exclusion flags.
/// Returns the filtered cohort and removal counts per criterion.
pub fn apply_exclusions(
    cohort: &LongitudinalCohort,
    criteria: &[String],
) -> Result<(LongitudinalCohort, BTreeMap<String, usize>)> {
    let mut indices = Vec::with_capacity(criteria.len());
    for c in criteria {
        let idx = cohort
            .excl_columns
            .iter()
            .position(|col| col == c)
            .ok_or_else(|| PipelineError::Config(format!("unknown exclusion criterion {c:?}")))?;
        indices.push((c.clone(), idx));
    }
    let mut counts: BTreeMap<String, usize> =
        criteria.iter().map(|c| (c.clone(), 0)).collect();
    let mut kept = Vec::new();
    for pair in &cohort.pairs {
        let mut excluded = false;
        for (name, idx) in &indices {
            if pair.wave1.excl_flags[*idx] {
                *counts.get_mut(name).expect("seeded above") += 1;
                excluded = true;
            }
        }
        if !excluded {
            kept.push(pair.clone());
        }
    }
    if kept.is_empty() {
        return Err(PipelineError::EmptyCohort("every pair carries an exclusion flag".into()));
    }
    Ok((
        LongitudinalCohort {
            excl_columns: cohort.excl_columns.clone(),
            biomarker_columns: cohort.biomarker_columns.clone(),
            pairs: kept,
            dropped_wave1: cohort.dropped_wave1.clone(),
            dropped_wave2: cohort.dropped_wave2.clone(),
        },
        counts,
    ))
}
