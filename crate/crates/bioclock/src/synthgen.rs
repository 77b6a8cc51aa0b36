//! Seeded synthetic two-wave cohort generator with known latent aging
//! dynamics.
//!
//! Generative model (all magnitudes live in the versioned default config,
//! `configs/synth_default.json`):
//!
//! - chronological age `a_i ~ uniform(age_range)`, latent aging rate
//!   `r_i ~ Normal(0, latent_rate_sd)`;
//! - each biomarker responds to *physiological* age
//!   `p_i = a_i + kappa * r_i` (kappa = `rate_to_age_years`), through
//!   `g(p) = trend * (p - 50) + curvature * (p - 50)^2`, so baselines carry
//!   an age signal blurred by the latent rate, and the response is mildly
//!   nonlinear;
//! - wave-1 value = sex mean + g(p_i) + Normal(0, baseline_sd);
//! - true slope = trend * (1 + r_i) + Normal(0, slope_sd);
//! - wave-2 value = wave-1 + elapsed * slope + Normal(0, noise_sd);
//! - wave-2 age = wave-1 age + elapsed; elapsed is a whole number of days
//!   so date-derived elapsed time matches the generator exactly.
//!
//! Every draw is keyed by (seed, participant id, column, purpose), so
//! output is independent of generation order.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use bioclock_core::rng::CounterRng;

use crate::cohort::{CohortTable, ParticipantRecord, Sex, WaveId, DAYS_PER_YEAR};
use crate::error::{PipelineError, Result};

pub const DEFAULT_CONFIG_JSON: &str = include_str!("../configs/synth_default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerSpec {
    pub name: String,
    pub unit: String,
    pub mean_female: f64,
    pub mean_male: f64,
    pub baseline_sd: f64,
    pub age_trend_per_year: f64,
    /// Quadratic term of the physiological-age response.
    pub curvature_per_year2: f64,
    pub slope_sd: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSpec {
    pub name: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub config_version: String,
    pub n_female: usize,
    pub n_male: usize,
    pub age_range: (f64, f64),
    pub latent_rate_sd: f64,
    /// kappa: years of physiological-age offset per unit of latent rate.
    pub rate_to_age_years: f64,
    /// Whole days between visits, inclusive bounds.
    pub elapsed_days_range: (i64, i64),
    pub wave1_date_range: (NaiveDate, NaiveDate),
    pub missing_rate: f64,
    pub seed: u64,
    pub exclusions: Vec<ExclusionSpec>,
    pub biomarkers: Vec<BiomarkerSpec>,
}

impl SynthConfig {
    pub fn default_config() -> SynthConfig {
        serde_json::from_str(DEFAULT_CONFIG_JSON).expect("embedded default config parses")
    }

    pub fn from_json(json: &str) -> Result<SynthConfig> {
        let cfg: SynthConfig = serde_json::from_str(json)
            .map_err(|e| PipelineError::Config(format!("synth config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.n_female + self.n_male == 0 {
            return err("cohort size must be positive".into());
        }
        if !(self.age_range.0 < self.age_range.1) || self.age_range.0 <= 18.0 {
            return err(format!("age_range {:?} must be ordered and above 18", self.age_range));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return err(format!("missing_rate {} must be in [0, 1)", self.missing_rate));
        }
        if self.latent_rate_sd < 0.0 {
            return err("latent_rate_sd must be >= 0".into());
        }
        if self.elapsed_days_range.0 <= 0 || self.elapsed_days_range.0 > self.elapsed_days_range.1 {
            return err(format!("elapsed_days_range {:?} invalid", self.elapsed_days_range));
        }
        if self.wave1_date_range.0 > self.wave1_date_range.1 {
            return err("wave1_date_range must be ordered".into());
        }
        if self.biomarkers.is_empty() {
            return err("at least one biomarker spec required".into());
        }
        for b in &self.biomarkers {
            if b.baseline_sd < 0.0 || b.slope_sd < 0.0 || b.noise_sd < 0.0 {
                return err(format!("biomarker {}: sds must be >= 0", b.name));
            }
        }
        for e in &self.exclusions {
            if !e.name.starts_with("excl_") {
                return err(format!("exclusion column {} must start with excl_", e.name));
            }
            if !(0.0..1.0).contains(&e.rate) {
                return err(format!("exclusion rate {} must be in [0, 1)", e.rate));
            }
        }
        Ok(())
    }
}

/// Latent per-participant state, kept out of the emitted wave files.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `<biomarker>_slope` names, aligned with each row's `true_slopes`.
    pub slope_columns: Vec<String>,
    pub rows: Vec<GroundTruthRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRow {
    pub id: String,
    pub latent_rate: f64,
    pub true_slopes: Vec<f64>,
}

impl GroundTruth {
    pub fn latent_rate_of(&self, id: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.id == id).map(|r| r.latent_rate)
    }
}

fn biomarker_response(spec: &BiomarkerSpec, physio_age: f64) -> f64 {
    let d = physio_age - 50.0;
    spec.age_trend_per_year * d + spec.curvature_per_year2 * d * d
}

/// Generate both waves and the ground truth. Deterministic per seed.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<(CohortTable, CohortTable, GroundTruth)> {
    cfg.validate()?;
    let root = CounterRng::new(cfg.seed, b"synthgen");
    let excl_columns: Vec<String> = cfg.exclusions.iter().map(|e| e.name.clone()).collect();
    let biomarker_columns: Vec<String> = cfg.biomarkers.iter().map(|b| b.name.clone()).collect();
    let (date_lo, date_hi) = cfg.wave1_date_range;
    let date_span = (date_hi - date_lo).num_days() + 1;
    let (el_lo, el_hi) = cfg.elapsed_days_range;

    let mut w1_rows = Vec::with_capacity(cfg.n_female + cfg.n_male);
    let mut w2_rows = Vec::with_capacity(cfg.n_female + cfg.n_male);
    let mut gt_rows = Vec::with_capacity(cfg.n_female + cfg.n_male);

    let ids: Vec<(String, Sex)> = (0..cfg.n_female)
        .map(|k| (format!("F{:05}", k + 1), Sex::Female))
        .chain((0..cfg.n_male).map(|k| (format!("M{:05}", k + 1), Sex::Male)))
        .collect();

    for (id, sex) in ids {
        let person = root.labeled(id.as_bytes());
        let age1 = person.labeled(b"age").uniform(cfg.age_range.0, cfg.age_range.1);
        let latent_rate = person.labeled(b"rate").normal() * cfg.latent_rate_sd;
        let physio_age = age1 + cfg.rate_to_age_years * latent_rate;
        let elapsed_days = el_lo + person.labeled(b"elapsed").below((el_hi - el_lo + 1) as u64) as i64;
        let elapsed_years = elapsed_days as f64 / DAYS_PER_YEAR;
        let date1 = date_lo + chrono::Days::new(person.labeled(b"date").below(date_span as u64));
        let date2 = date1 + chrono::Days::new(elapsed_days as u64);

        let excl_flags: Vec<bool> = cfg
            .exclusions
            .iter()
            .map(|e| person.labeled(e.name.as_bytes()).next_f64() < e.rate)
            .collect();

        let mut b1 = Vec::with_capacity(cfg.biomarkers.len());
        let mut b2 = Vec::with_capacity(cfg.biomarkers.len());
        let mut true_slopes = Vec::with_capacity(cfg.biomarkers.len());
        for spec in &cfg.biomarkers {
            let col = person.labeled(spec.name.as_bytes());
            let sex_mean = match sex {
                Sex::Female => spec.mean_female,
                Sex::Male => spec.mean_male,
            };
            let v1 = sex_mean
                + biomarker_response(spec, physio_age)
                + col.labeled(b"base").normal() * spec.baseline_sd;
            let slope = spec.age_trend_per_year * (1.0 + latent_rate)
                + col.labeled(b"slope").normal() * spec.slope_sd;
            let v2 = v1 + elapsed_years * slope + col.labeled(b"noise2").normal() * spec.noise_sd;
            let miss1 = col.labeled(b"miss1").next_f64() < cfg.missing_rate;
            let miss2 = col.labeled(b"miss2").next_f64() < cfg.missing_rate;
            b1.push(if miss1 { None } else { Some(v1) });
            b2.push(if miss2 { None } else { Some(v2) });
            true_slopes.push(slope);
        }

        w1_rows.push(ParticipantRecord {
            id: id.clone(),
            sex,
            age_years: age1,
            collection_date: date1,
            excl_flags: excl_flags.clone(),
            biomarkers: b1,
        });
        w2_rows.push(ParticipantRecord {
            id: id.clone(),
            sex,
            age_years: age1 + elapsed_years,
            collection_date: date2,
            excl_flags,
            biomarkers: b2,
        });
        gt_rows.push(GroundTruthRow { id, latent_rate, true_slopes });
    }

    let wave1 = CohortTable {
        wave_id: WaveId::Wave1,
        excl_columns: excl_columns.clone(),
        biomarker_columns: biomarker_columns.clone(),
        rows: w1_rows,
    };
    let wave2 = CohortTable {
        wave_id: WaveId::Wave2,
        excl_columns,
        biomarker_columns: biomarker_columns.clone(),
        rows: w2_rows,
    };
    let ground_truth = GroundTruth {
        slope_columns: biomarker_columns.iter().map(|c| format!("{c}_slope")).collect(),
        rows: gt_rows,
    };
    Ok((wave1, wave2, ground_truth))
}

/// `ground_truth.csv`: id, latent_rate, one column per true slope.
pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    let mut header = vec!["id".to_string(), "latent_rate".to_string()];
    header.extend(gt.slope_columns.iter().cloned());
    writer.write_record(&header).map_err(|e| PipelineError::csv(path, e))?;
    for row in &gt.rows {
        let mut fields = vec![row.id.clone(), format!("{}", row.latent_rate)];
        fields.extend(row.true_slopes.iter().map(|s| format!("{s}")));
        writer.write_record(&fields).map_err(|e| PipelineError::csv(path, e))?;
    }
    writer.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| PipelineError::csv(path, e))?.iter().map(str::to_string).collect();
    if headers.len() < 2 || headers[0] != "id" || headers[1] != "latent_rate" {
        return Err(PipelineError::Schema("ground truth header must start id,latent_rate".into()));
    }
    let slope_columns = headers[2..].to_vec();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| PipelineError::csv(path, e))?;
        let parse = |idx: usize, col: &str| -> Result<f64> {
            record.get(idx).unwrap_or("").parse().map_err(|_| PipelineError::Parse {
                row: i + 2,
                column: col.to_string(),
                message: "not a number".into(),
            })
        };
        let latent_rate = parse(1, "latent_rate")?;
        let mut true_slopes = Vec::with_capacity(slope_columns.len());
        for (j, col) in slope_columns.iter().enumerate() {
            true_slopes.push(parse(2 + j, col)?);
        }
        rows.push(GroundTruthRow {
            id: record.get(0).unwrap_or("").to_string(),
            latent_rate,
            true_slopes,
        });
    }
    Ok(GroundTruth { slope_columns, rows })
}
