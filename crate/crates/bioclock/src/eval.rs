//! Temporal validation protocol, BA-delta analytics, subgroup and
//! system-level analyses.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use bioclock_core::matrix::{FeatureMatrix, SystemTag};
use bioclock_core::metrics::{pearson, permutation_pvalue, r2, rmse};
use bioclock_core::rng::CounterRng;

use crate::cohort::{CohortTable, LongitudinalCohort, Sex, WaveId};
use crate::error::{PipelineError, Result};
use crate::features::{
    assemble_matrix, compute_slopes, impute_sex_median, ImputationEntry, SlopePolicy, SystemMap,
};
use crate::persist::{ModelSpec, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub sex: String,
    pub wave: String,
    pub r2: f64,
    pub rmse: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

/// Wave-2 ages behind an audited access path; the counter proves the fit
/// phase never touched them.
#[derive(Debug)]
pub struct GuardedTarget {
    values: Vec<f64>,
    reads: Cell<usize>,
}

impl GuardedTarget {
    pub fn new(values: Vec<f64>) -> Self {
        GuardedTarget { values, reads: Cell::new(0) }
    }

    pub fn read(&self) -> &[f64] {
        self.reads.set(self.reads.get() + 1);
        &self.values
    }

    pub fn reads(&self) -> usize {
        self.reads.get()
    }
}

/// Both waves' design matrices over the same rows plus row metadata.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub wave1: FeatureMatrix,
    /// Wave-2 features with a zeroed target; real wave-2 ages go through
    /// the guard in `temporal_evaluate`.
    pub wave2: FeatureMatrix,
    pub wave2_ages: Vec<f64>,
    pub sexes: Vec<Sex>,
    pub imputation_log: Vec<ImputationEntry>,
}

/// Impute, engineer slopes, and assemble aligned per-wave matrices.
pub fn prepare(
    cohort: &LongitudinalCohort,
    policy: SlopePolicy,
    system_map: &SystemMap,
) -> Result<Prepared> {
    let slopes = compute_slopes(cohort, &cohort.biomarker_columns)?;
    let (w1_imputed, mut log) = impute_sex_median(&cohort.wave_table(WaveId::Wave1))?;
    let (w2_imputed, log2) = impute_sex_median(&cohort.wave_table(WaveId::Wave2))?;
    log.extend(log2);
    let wave1 = assemble_matrix(&w1_imputed, &slopes, policy, system_map)?;
    let mut wave2 = assemble_matrix(&w2_imputed, &slopes, policy, system_map)?;
    if wave1.row_ids != wave2.row_ids {
        return Err(PipelineError::Alignment("wave matrices lost row alignment".into()));
    }
    let kept: std::collections::HashSet<&str> =
        wave1.row_ids.iter().map(String::as_str).collect();
    let sexes: Vec<Sex> = w1_imputed
        .rows
        .iter()
        .filter(|r| kept.contains(r.id.as_str()))
        .map(|r| r.sex)
        .collect();
    let zeros = vec![0.0; wave2.n_rows()];
    let wave2_ages = std::mem::replace(&mut wave2.target, zeros);
    Ok(Prepared { wave1, wave2, wave2_ages, sexes, imputation_log: log })
}

impl Prepared {
    /// Restrict to the given row indices (metadata kept aligned).
    pub fn select_rows(&self, rows: &[usize]) -> Prepared {
        Prepared {
            wave1: self.wave1.select_rows(rows),
            wave2: self.wave2.select_rows(rows),
            wave2_ages: rows.iter().map(|&r| self.wave2_ages[r]).collect(),
            sexes: rows.iter().map(|&r| self.sexes[r]).collect(),
            imputation_log: Vec::new(),
        }
    }

    pub fn rows_of_sex(&self, sex: Sex) -> Vec<usize> {
        (0..self.sexes.len()).filter(|&r| self.sexes[r] == sex).collect()
    }
}

/// One sex's fitted model and both waves' predictions.
#[derive(Debug)]
pub struct SexRun {
    pub sex: Sex,
    pub model: TrainedModel,
    pub wave1: FeatureMatrix,
    pub wave2: FeatureMatrix,
    pub wave2_ages: Vec<f64>,
    pub pred_wave1: Vec<f64>,
    pub pred_wave2: Vec<f64>,
}

#[derive(Debug)]
pub struct TemporalRun {
    pub reports: Vec<EvaluationReport>,
    pub per_sex: Vec<SexRun>,
    /// Guard counter value observed at the end of each sex's fit phase;
    /// every entry must be 0.
    pub wave2_target_reads_during_fit: usize,
}

/// Fit per sex on Wave 1, evaluate on Wave 2 with the same slopes.
pub fn temporal_evaluate(
    prepared: &Prepared,
    spec: &ModelSpec,
    sexes: &[Sex],
    stratum: Option<&str>,
) -> Result<TemporalRun> {
    let mut reports = Vec::new();
    let mut per_sex = Vec::new();
    let mut fit_phase_reads = 0;
    for &sex in sexes {
        let rows = prepared.rows_of_sex(sex);
        if rows.is_empty() {
            return Err(PipelineError::EmptyCohort(format!("no rows for sex {}", sex.code())));
        }
        let sub = prepared.select_rows(&rows);
        let guard = GuardedTarget::new(sub.wave2_ages.clone());
        let y1 = sub.wave1.target.clone();
        let model = spec.fit(&sub.wave1, &y1)?;
        fit_phase_reads += guard.reads();

        let pred_wave1 = model.predict(&sub.wave1)?;
        let pred_wave2 = model.predict(&sub.wave2)?;
        let y2 = guard.read();
        let model_label = spec.kind().label().to_string();
        reports.push(EvaluationReport {
            model: model_label.clone(),
            sex: sex.code().to_string(),
            wave: "train".into(),
            r2: r2(&y1, &pred_wave1)?,
            rmse: rmse(&y1, &pred_wave1)?,
            n: y1.len(),
            stratum: stratum.map(str::to_string),
        });
        reports.push(EvaluationReport {
            model: model_label,
            sex: sex.code().to_string(),
            wave: "test".into(),
            r2: r2(y2, &pred_wave2)?,
            rmse: rmse(y2, &pred_wave2)?,
            n: y2.len(),
            stratum: stratum.map(str::to_string),
        });
        per_sex.push(SexRun {
            sex,
            model,
            wave1: sub.wave1,
            wave2: sub.wave2,
            wave2_ages: sub.wave2_ages,
            pred_wave1,
            pred_wave2,
        });
    }
    Ok(TemporalRun { reports, per_sex, wave2_target_reads_during_fit: fit_phase_reads })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaDeltaRecord {
    pub id: String,
    pub wave: String,
    pub predicted_ba: f64,
    pub ca: f64,
    pub delta: f64,
}

pub fn ba_delta(ids: &[String], predictions: &[f64], cas: &[f64], wave: WaveId) -> Vec<BaDeltaRecord> {
    ids.iter()
        .zip(predictions)
        .zip(cas)
        .map(|((id, &ba), &ca)| BaDeltaRecord {
            id: id.clone(),
            wave: wave.label().to_string(),
            predicted_ba: ba,
            ca,
            delta: ba - ca,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerComparison {
    pub biomarker: String,
    pub fastest_mean: f64,
    pub slowest_mean: f64,
    pub difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeAgers {
    /// Ids of the top decile of the change in BA delta across waves.
    pub fastest: Vec<String>,
    pub slowest: Vec<String>,
    pub delta_change: BTreeMap<String, f64>,
    pub comparison: Vec<BiomarkerComparison>,
}

pub const PERMUTATIONS: usize = 10_000;

/// Rank individuals by change in BA delta across waves; compare the top and
/// bottom deciles' wave-1 biomarker means with seeded permutation tests.
pub fn extreme_agers(
    wave1_records: &[BaDeltaRecord],
    wave2_records: &[BaDeltaRecord],
    decile: f64,
    baseline: &CohortTable,
    seed: u64,
) -> Result<ExtremeAgers> {
    if !(0.0 < decile && decile < 0.5) {
        return Err(PipelineError::Config(format!("decile {decile} must be in (0, 0.5)")));
    }
    let w2: BTreeMap<&str, f64> =
        wave2_records.iter().map(|r| (r.id.as_str(), r.delta)).collect();
    let mut changes: Vec<(String, f64)> = Vec::with_capacity(wave1_records.len());
    for r1 in wave1_records {
        let d2 = w2.get(r1.id.as_str()).ok_or_else(|| {
            PipelineError::Alignment(format!("id {} scored in wave 1 only", r1.id))
        })?;
        changes.push((r1.id.clone(), d2 - r1.delta));
    }
    let n = changes.len();
    let k = (n as f64 * decile).floor() as usize;
    if k < 5 {
        return Err(PipelineError::InsufficientGroup { n });
    }
    changes.sort_by(|a, b| a.1.total_cmp(&b.1));
    let slowest: Vec<String> = changes[..k].iter().map(|c| c.0.clone()).collect();
    let fastest: Vec<String> = changes[n - k..].iter().map(|c| c.0.clone()).collect();

    let row_of: BTreeMap<&str, usize> =
        baseline.rows.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let group_values = |ids: &[String], col: usize| -> Result<Vec<f64>> {
        ids.iter()
            .map(|id| {
                let &row = row_of.get(id.as_str()).ok_or_else(|| {
                    PipelineError::Alignment(format!("id {id} missing from baseline table"))
                })?;
                baseline.rows[row].biomarkers[col].ok_or_else(|| {
                    PipelineError::Config(format!(
                        "baseline {} Missing for id {id}; impute before comparison",
                        baseline.biomarker_columns[col]
                    ))
                })
            })
            .collect()
    };

    let perm_root = CounterRng::new(seed, b"extreme-agers");
    let mut comparison = Vec::with_capacity(baseline.biomarker_columns.len());
    for (c, name) in baseline.biomarker_columns.iter().enumerate() {
        let fast = group_values(&fastest, c)?;
        let slow = group_values(&slowest, c)?;
        let fastest_mean = fast.iter().sum::<f64>() / fast.len() as f64;
        let slowest_mean = slow.iter().sum::<f64>() / slow.len() as f64;
        let mut rng = perm_root.labeled(name.as_bytes());
        comparison.push(BiomarkerComparison {
            biomarker: name.clone(),
            fastest_mean,
            slowest_mean,
            difference: fastest_mean - slowest_mean,
            p_value: permutation_pvalue(&fast, &slow, PERMUTATIONS, &mut rng),
        });
    }
    Ok(ExtremeAgers {
        fastest,
        slowest,
        delta_change: changes.into_iter().collect(),
        comparison,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stratifier {
    /// Baseline age under 55 vs 55 and over.
    Age55,
    /// Baseline BMI under 25, 25-30, 30 and over.
    BmiClass,
}

impl Stratifier {
    pub fn parse(s: &str) -> Option<Stratifier> {
        match s {
            "age" => Some(Stratifier::Age55),
            "bmi" => Some(Stratifier::BmiClass),
            _ => None,
        }
    }

    pub fn labels(&self) -> &'static [&'static str] {
        match self {
            Stratifier::Age55 => &["age<55", "age>=55"],
            Stratifier::BmiClass => &["bmi<25", "bmi25-30", "bmi>=30"],
        }
    }

    fn stratum_of(&self, baseline_age: f64, baseline_bmi: f64) -> &'static str {
        match self {
            Stratifier::Age55 => {
                if baseline_age < 55.0 {
                    "age<55"
                } else {
                    "age>=55"
                }
            }
            Stratifier::BmiClass => {
                if baseline_bmi < 25.0 {
                    "bmi<25"
                } else if baseline_bmi < 30.0 {
                    "bmi25-30"
                } else {
                    "bmi>=30"
                }
            }
        }
    }
}

pub const MIN_STRATUM_SIZE: usize = 50;

#[derive(Debug)]
pub struct SubgroupRun {
    pub reports: Vec<EvaluationReport>,
    pub warnings: Vec<String>,
    pub wave2_target_reads_during_fit: usize,
}

/// Re-run the full temporal protocol independently inside each stratum.
pub fn subgroup_eval(
    prepared: &Prepared,
    stratifier: Stratifier,
    spec: &ModelSpec,
    sexes: &[Sex],
) -> Result<SubgroupRun> {
    let bmi_col = prepared
        .wave1
        .column_index(crate::features::BMI_COLUMN)
        .ok_or_else(|| PipelineError::Config("bmi column required for stratification".into()))?;
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    let mut guard_reads = 0;
    let mut assigned = 0usize;
    for label in stratifier.labels() {
        let rows: Vec<usize> = (0..prepared.wave1.n_rows())
            .filter(|&r| {
                stratifier.stratum_of(prepared.wave1.target[r], prepared.wave1.value(r, bmi_col))
                    == *label
            })
            .collect();
        assigned += rows.len();
        let sub = prepared.select_rows(&rows);
        for &sex in sexes {
            let n_sex = sub.rows_of_sex(sex).len();
            if n_sex < MIN_STRATUM_SIZE {
                warnings.push(format!(
                    "stratum {label} sex {}: n={n_sex} < {MIN_STRATUM_SIZE}, skipped",
                    sex.code()
                ));
                continue;
            }
            let run = temporal_evaluate(&sub, spec, &[sex], Some(label))?;
            guard_reads += run.wave2_target_reads_during_fit;
            reports.extend(run.reports);
        }
    }
    if assigned != prepared.wave1.n_rows() {
        return Err(PipelineError::Alignment(format!(
            "strata cover {assigned} of {} rows",
            prepared.wave1.n_rows()
        )));
    }
    Ok(SubgroupRun { reports, warnings, wave2_target_reads_during_fit: guard_reads })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemR2 {
    pub system: String,
    pub sex: String,
    pub r2_test: f64,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemAnalysis {
    /// Systems with at least one feature, in `SystemTag::ALL` order.
    pub systems: Vec<String>,
    pub r2: Vec<SystemR2>,
    pub corr_female: Vec<Vec<f64>>,
    pub corr_male: Vec<Vec<f64>>,
    /// female minus male, entrywise.
    pub corr_diff: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Per-system temporal R² plus Pearson correlation matrices between
/// per-system predicted-age scores (the system score of a participant is
/// that system-only model's wave-2 prediction).
pub fn system_analysis(prepared: &Prepared, spec: &ModelSpec) -> Result<SystemAnalysis> {
    let mut systems = Vec::new();
    let mut warnings = Vec::new();
    let mut r2_rows = Vec::new();
    // scores[system][sex-slot] -> per-row predictions for that sex subset
    let mut scores: Vec<BTreeMap<Sex, Vec<f64>>> = Vec::new();
    for tag in SystemTag::ALL {
        let cols: Vec<usize> = (0..prepared.wave1.n_features())
            .filter(|&c| prepared.wave1.columns[c].system == tag)
            .collect();
        if cols.is_empty() {
            warnings.push(format!("system {} has no features, skipped", tag.name()));
            continue;
        }
        let sub = Prepared {
            wave1: prepared.wave1.select_columns(&cols),
            wave2: prepared.wave2.select_columns(&cols),
            wave2_ages: prepared.wave2_ages.clone(),
            sexes: prepared.sexes.clone(),
            imputation_log: Vec::new(),
        };
        let run = temporal_evaluate(&sub, spec, &[Sex::Female, Sex::Male], None)?;
        let mut per_sex_scores = BTreeMap::new();
        for sex_run in &run.per_sex {
            per_sex_scores.insert(sex_run.sex, sex_run.pred_wave2.clone());
        }
        for report in run.reports.iter().filter(|r| r.wave == "test") {
            r2_rows.push(SystemR2 {
                system: tag.name().to_string(),
                sex: report.sex.clone(),
                r2_test: report.r2,
                n_features: cols.len(),
            });
        }
        systems.push(tag.name().to_string());
        scores.push(per_sex_scores);
    }
    if systems.is_empty() {
        return Err(PipelineError::EmptyCohort("no system has any features".into()));
    }

    let corr_for = |sex: Sex| -> Result<Vec<Vec<f64>>> {
        let k = systems.len();
        let mut m = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                m[i][j] = if i == j {
                    1.0
                } else {
                    pearson(&scores[i][&sex], &scores[j][&sex])?
                };
            }
        }
        Ok(m)
    };
    let corr_female = corr_for(Sex::Female)?;
    let corr_male = corr_for(Sex::Male)?;
    let corr_diff: Vec<Vec<f64>> = corr_female
        .iter()
        .zip(&corr_male)
        .map(|(fr, mr)| fr.iter().zip(mr).map(|(f, m)| f - m).collect())
        .collect();
    Ok(SystemAnalysis { systems, r2: r2_rows, corr_female, corr_male, corr_diff, warnings })
}

/// `report.json`: nested model -> sex -> wave (or stratum/wave) -> metrics.
pub fn report_json(reports: &[EvaluationReport]) -> serde_json::Value {
    let mut root = serde_json::Map::new();
    for r in reports {
        let key = match &r.stratum {
            Some(s) => format!("{s}/{}", r.wave),
            None => r.wave.clone(),
        };
        let entry = serde_json::json!({ "r2": r.r2, "rmse": r.rmse, "n": r.n });
        root.entry(r.model.clone())
            .or_insert_with(|| serde_json::Value::Object(Default::default()))
            .as_object_mut()
            .expect("object")
            .entry(r.sex.clone())
            .or_insert_with(|| serde_json::Value::Object(Default::default()))
            .as_object_mut()
            .expect("object")
            .insert(key, entry);
    }
    serde_json::Value::Object(root)
}

pub fn write_report_json(reports: &[EvaluationReport], path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&report_json(reports))
        .map_err(|e| PipelineError::Persistence(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| PipelineError::io(path, e))
}

pub fn write_ba_deltas(records: &[BaDeltaRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    w.write_record(["id", "wave", "predicted_ba", "ca", "delta"])
        .map_err(|e| PipelineError::csv(path, e))?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            r.wave.as_str(),
            &format!("{}", r.predicted_ba),
            &format!("{}", r.ca),
            &format!("{}", r.delta),
        ])
        .map_err(|e| PipelineError::csv(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

pub fn write_extreme_agers(ea: &ExtremeAgers, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    w.write_record(["biomarker", "fastest_mean", "slowest_mean", "difference", "p_value"])
        .map_err(|e| PipelineError::csv(path, e))?;
    for c in &ea.comparison {
        w.write_record([
            c.biomarker.as_str(),
            &format!("{}", c.fastest_mean),
            &format!("{}", c.slowest_mean),
            &format!("{}", c.difference),
            &format!("{}", c.p_value),
        ])
        .map_err(|e| PipelineError::csv(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

pub fn write_system_r2(analysis: &SystemAnalysis, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    w.write_record(["system", "sex", "r2_test", "n_features"])
        .map_err(|e| PipelineError::csv(path, e))?;
    for row in &analysis.r2 {
        w.write_record([
            row.system.as_str(),
            row.sex.as_str(),
            &format!("{}", row.r2_test),
            &format!("{}", row.n_features),
        ])
        .map_err(|e| PipelineError::csv(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

pub fn write_corr_matrix(systems: &[String], matrix: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::csv(path, e))?;
    let mut header = vec!["system".to_string()];
    header.extend(systems.iter().cloned());
    w.write_record(&header).map_err(|e| PipelineError::csv(path, e))?;
    for (name, row) in systems.iter().zip(matrix) {
        let mut fields = vec![name.clone()];
        fields.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&fields).map_err(|e| PipelineError::csv(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}
