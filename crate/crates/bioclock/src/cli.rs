//! Command-line front end: configuration resolution and the seven
//! pipeline commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bioclock_core::forest::ForestParams;
use bioclock_core::gbm::GbmParams;
use bioclock_core::linear::ElasticNetParams;
use bioclock_core::shap::{summarize, tree_shap};

use crate::cohort::{
    apply_exclusions, load_wave, pair_waves, write_wave, CohortTable, LongitudinalCohort, Sex,
    WaveId,
};
use crate::error::{PipelineError, Result};
use crate::eval::{
    ba_delta, extreme_agers, subgroup_eval, system_analysis, temporal_evaluate, write_ba_deltas,
    write_corr_matrix, write_extreme_agers, write_report_json, write_system_r2, BaDeltaRecord,
    EvaluationReport, Prepared, Stratifier,
};
use crate::features::{impute_sex_median, SlopePolicy, SystemMap};
use crate::persist::{load_model, save_model, Manifest, ModelKind, ModelSpec, TrainedModel};
use crate::synthgen::{generate_cohort, write_ground_truth, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "bioclock",
    version,
    about = "Longitudinal biological-age pipeline: synthetic cohorts, slope features, boosted-tree clocks, SHAP, temporal evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic two-wave cohort plus ground truth.
    Synth(SynthArgs),
    /// Fit a model per sex on Wave-1 features and persist it.
    Train(RunArgs),
    /// Run the temporal protocol and BA-delta analytics.
    Evaluate(EvaluateArgs),
    /// Emit SHAP importance and per-point attribution CSVs.
    Explain(ExplainArgs),
    /// Re-run the temporal protocol inside age or BMI strata.
    Subgroup(SubgroupArgs),
    /// Fit gbm, rf, and enet on identical splits and rank them.
    Compare(RunArgs),
    /// Per-system predictive power and correlation matrices.
    Systems(RunArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config JSON (defaults to the embedded config).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// Wave-1 CSV path.
    #[arg(long)]
    pub wave1: Option<PathBuf>,
    /// Wave-2 CSV path.
    #[arg(long)]
    pub wave2: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run config JSON; flags win over file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Top-level seed for all random substreams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// F, M, or both.
    #[arg(long)]
    pub sex: Option<String>,
    /// gbm, rf, or enet.
    #[arg(long)]
    pub model: Option<String>,
    /// median or drop.
    #[arg(long = "slope-policy")]
    pub slope_policy: Option<String>,
    /// Column-to-system map JSON (defaults to the embedded map).
    #[arg(long = "system-map")]
    pub system_map: Option<PathBuf>,
    /// Exclusion criteria, comma-separated (default: every excl_ column).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<String>>,
}

#[derive(Debug, Args, Clone)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory holding model_<sex>.json from `train`; refits if absent.
    #[arg(long = "model-dir")]
    pub model_dir: Option<PathBuf>,
    /// Extreme-ager decile fraction.
    #[arg(long)]
    pub decile: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory holding model_<sex>.json from `train`; refits if absent.
    #[arg(long = "model-dir")]
    pub model_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SubgroupArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// age or bmi.
    #[arg(long)]
    pub stratifier: Option<String>,
}

/// Optional file-borne settings; any flag overrides its field.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub wave1: Option<PathBuf>,
    pub wave2: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sex: Option<String>,
    pub model: Option<String>,
    pub slope_policy: Option<String>,
    pub system_map: Option<PathBuf>,
    pub exclude: Option<Vec<String>>,
    pub decile: Option<f64>,
    pub stratifier: Option<String>,
    pub gbm: Option<GbmParams>,
    pub rf: Option<ForestParams>,
    pub enet: Option<ElasticNetParams>,
}

/// Fully resolved run settings (file config + flag overrides + defaults).
pub struct Resolved {
    pub wave1: PathBuf,
    pub wave2: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub sexes: Vec<Sex>,
    pub spec: ModelSpec,
    pub policy: SlopePolicy,
    pub system_map: SystemMap,
    pub system_map_path: Option<PathBuf>,
    pub config_path: Option<PathBuf>,
    pub exclude: Option<Vec<String>>,
    pub decile: f64,
    pub stratifier: Stratifier,
    /// Canonical serialization of the resolved settings, hashed into the
    /// manifest.
    pub config_text: String,
}

fn parse_sexes(s: &str) -> Result<Vec<Sex>> {
    match s {
        "F" => Ok(vec![Sex::Female]),
        "M" => Ok(vec![Sex::Male]),
        "both" => Ok(vec![Sex::Female, Sex::Male]),
        other => Err(PipelineError::Config(format!("--sex must be F, M, or both, got {other:?}"))),
    }
}

pub fn resolve(
    args: &RunArgs,
    decile: Option<f64>,
    stratifier: Option<&str>,
) -> Result<Resolved> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let wave1 = args
        .wave1
        .clone()
        .or(file.wave1)
        .ok_or_else(|| PipelineError::Config("wave1 path required (--wave1)".into()))?;
    let wave2 = args
        .wave2
        .clone()
        .or(file.wave2)
        .ok_or_else(|| PipelineError::Config("wave2 path required (--wave2)".into()))?;
    let out = args
        .out
        .clone()
        .or(file.out)
        .ok_or_else(|| PipelineError::Config("output directory required (--out)".into()))?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let sex_str = args.sex.clone().or(file.sex).unwrap_or_else(|| "both".into());
    let sexes = parse_sexes(&sex_str)?;
    let model_str = args.model.clone().or(file.model).unwrap_or_else(|| "gbm".into());
    let kind = ModelKind::parse(&model_str)
        .ok_or_else(|| PipelineError::Config(format!("unknown model {model_str:?}")))?;
    let spec = match (kind, &file.gbm, &file.rf, &file.enet) {
        (ModelKind::Gbm, Some(p), _, _) => ModelSpec::Gbm(p.clone()),
        (ModelKind::Rf, _, Some(p), _) => ModelSpec::Rf(p.clone()),
        (ModelKind::Enet, _, _, Some(p)) => ModelSpec::Enet(p.clone()),
        _ => ModelSpec::default_for(kind),
    }
    .with_seed(seed);
    let policy_str = args.slope_policy.clone().or(file.slope_policy).unwrap_or_else(|| "median".into());
    let policy = SlopePolicy::parse(&policy_str)
        .ok_or_else(|| PipelineError::Config(format!("slope policy must be median or drop, got {policy_str:?}")))?;
    let system_map_path = args.system_map.clone().or(file.system_map);
    let system_map = match &system_map_path {
        Some(p) => SystemMap::from_path(p)?,
        None => SystemMap::default_map(),
    };
    let exclude = args.exclude.clone().or(file.exclude);
    let decile = decile.or(file.decile).unwrap_or(0.1);
    let strat_str = stratifier.map(str::to_string).or(file.stratifier).unwrap_or_else(|| "age".into());
    let stratifier = Stratifier::parse(&strat_str)
        .ok_or_else(|| PipelineError::Config(format!("stratifier must be age or bmi, got {strat_str:?}")))?;

    let config_text = serde_json::to_string(&serde_json::json!({
        "wave1": wave1.display().to_string(),
        "wave2": wave2.display().to_string(),
        "seed": seed,
        "sex": sex_str,
        "model": model_str,
        "spec": &spec,
        "slope_policy": policy.label(),
        "exclude": &exclude,
        "decile": decile,
        "stratifier": strat_str,
    }))
    .map_err(|e| PipelineError::Persistence(e.to_string()))?;

    Ok(Resolved {
        wave1,
        wave2,
        out,
        seed,
        sexes,
        spec,
        policy,
        system_map,
        system_map_path,
        config_path: args.config.clone(),
        exclude,
        decile,
        stratifier,
        config_text,
    })
}

/// Loaded, paired, exclusion-filtered cohort with assembled matrices.
pub struct LoadedRun {
    pub cohort: LongitudinalCohort,
    pub prepared: Prepared,
    /// Imputed Wave-1 table for group comparisons.
    pub wave1_imputed: CohortTable,
}

pub fn load_run(r: &Resolved) -> Result<LoadedRun> {
    let w1 = load_wave(&r.wave1, WaveId::Wave1)?;
    let w2 = load_wave(&r.wave2, WaveId::Wave2)?;
    let paired = pair_waves(&w1, &w2)?;
    let criteria = match &r.exclude {
        Some(list) => list.clone(),
        None => paired.excl_columns.clone(),
    };
    let (cohort, _removed) = apply_exclusions(&paired, &criteria)?;
    let prepared = crate::eval::prepare(&cohort, r.policy, &r.system_map)?;
    let (wave1_imputed, _) = impute_sex_median(&cohort.wave_table(WaveId::Wave1))?;
    Ok(LoadedRun { cohort, prepared, wave1_imputed })
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))
}

fn manifest_base(command: &str, r: &Resolved) -> Result<Manifest> {
    let mut m = Manifest::new(command, r.seed, &r.config_text);
    m.record_input(&r.wave1)?;
    m.record_input(&r.wave2)?;
    if let Some(p) = &r.config_path {
        m.record_input(p)?;
    }
    if let Some(p) = &r.system_map_path {
        m.record_input(p)?;
    }
    Ok(m)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            SynthConfig::from_json(&text)?
        }
        None => SynthConfig::default_config(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    ensure_out_dir(&args.out)?;
    let (wave1, wave2, gt) = generate_cohort(&cfg)?;
    write_wave(&wave1, &args.out.join("wave1.csv"))?;
    write_wave(&wave2, &args.out.join("wave2.csv"))?;
    write_ground_truth(&gt, &args.out.join("ground_truth.csv"))?;
    let resolved = serde_json::to_string_pretty(&cfg)
        .map_err(|e| PipelineError::Persistence(e.to_string()))?;
    let cfg_path = args.out.join("synth_config.json");
    std::fs::write(&cfg_path, &resolved).map_err(|e| PipelineError::io(&cfg_path, e))?;

    let mut manifest = Manifest::new("synth", cfg.seed, &resolved);
    if let Some(p) = &args.config {
        manifest.record_input(p)?;
    }
    for artifact in ["wave1.csv", "wave2.csv", "ground_truth.csv", "synth_config.json"] {
        manifest.record_artifact(&args.out, artifact)?;
    }
    manifest.write(&args.out)?;
    println!(
        "synth: {} females + {} males -> {}",
        cfg.n_female,
        cfg.n_male,
        args.out.display()
    );
    Ok(())
}

fn model_file(sex: Sex) -> String {
    format!("model_{}.json", sex.code())
}

pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let r = resolve(args, None, None)?;
    ensure_out_dir(&r.out)?;
    let run = load_run(&r)?;
    let mut manifest = manifest_base("train", &r)?;
    let mut reports = Vec::new();
    for &sex in &r.sexes {
        let rows = run.prepared.rows_of_sex(sex);
        if rows.is_empty() {
            return Err(PipelineError::EmptyCohort(format!("no rows for sex {}", sex.code())));
        }
        let sub = run.prepared.select_rows(&rows);
        let y = sub.wave1.target.clone();
        let model = r.spec.fit(&sub.wave1, &y)?;
        let preds = model.predict(&sub.wave1)?;
        reports.push(EvaluationReport {
            model: r.spec.kind().label().to_string(),
            sex: sex.code().to_string(),
            wave: "train".into(),
            r2: bioclock_core::metrics::r2(&y, &preds)?,
            rmse: bioclock_core::metrics::rmse(&y, &preds)?,
            n: y.len(),
            stratum: None,
        });
        let file = model_file(sex);
        save_model(&model, &r.out.join(&file))?;
        manifest.record_artifact(&r.out, &file)?;
    }
    write_report_json(&reports, &r.out.join("report.json"))?;
    let log_path = r.out.join("imputation_log.json");
    let log = serde_json::to_string_pretty(&run.prepared.imputation_log)
        .map_err(|e| PipelineError::Persistence(e.to_string()))?;
    std::fs::write(&log_path, log).map_err(|e| PipelineError::io(&log_path, e))?;
    manifest.record_artifact(&r.out, "report.json")?;
    manifest.record_artifact(&r.out, "imputation_log.json")?;
    manifest.write(&r.out)?;
    for rep in &reports {
        println!(
            "train {} sex {}: r2 {:.4} rmse {:.3} (n {})",
            rep.model, rep.sex, rep.r2, rep.rmse, rep.n
        );
    }
    Ok(())
}

fn load_models(dir: &Path, sexes: &[Sex], manifest: &mut Manifest) -> Result<Vec<TrainedModel>> {
    let mut models = Vec::new();
    for &sex in sexes {
        let path = dir.join(model_file(sex));
        manifest.record_input(&path)?;
        models.push(load_model(&path)?);
    }
    Ok(models)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let r = resolve(&args.run, args.decile, None)?;
    ensure_out_dir(&r.out)?;
    let run = load_run(&r)?;
    let mut manifest = manifest_base("evaluate", &r)?;

    let mut reports = Vec::new();
    let mut ba_records: Vec<BaDeltaRecord> = Vec::new();
    match &args.model_dir {
        Some(dir) => {
            let models = load_models(dir, &r.sexes, &mut manifest)?;
            for (&sex, model) in r.sexes.iter().zip(&models) {
                let rows = run.prepared.rows_of_sex(sex);
                let sub = run.prepared.select_rows(&rows);
                let label = model.kind().label().to_string();
                let pred1 = model.predict(&sub.wave1)?;
                let pred2 = model.predict(&sub.wave2)?;
                reports.push(EvaluationReport {
                    model: label.clone(),
                    sex: sex.code().to_string(),
                    wave: "train".into(),
                    r2: bioclock_core::metrics::r2(&sub.wave1.target, &pred1)?,
                    rmse: bioclock_core::metrics::rmse(&sub.wave1.target, &pred1)?,
                    n: pred1.len(),
                    stratum: None,
                });
                reports.push(EvaluationReport {
                    model: label,
                    sex: sex.code().to_string(),
                    wave: "test".into(),
                    r2: bioclock_core::metrics::r2(&sub.wave2_ages, &pred2)?,
                    rmse: bioclock_core::metrics::rmse(&sub.wave2_ages, &pred2)?,
                    n: pred2.len(),
                    stratum: None,
                });
                ba_records.extend(ba_delta(&sub.wave1.row_ids, &pred1, &sub.wave1.target, WaveId::Wave1));
                ba_records.extend(ba_delta(&sub.wave2.row_ids, &pred2, &sub.wave2_ages, WaveId::Wave2));
            }
        }
        None => {
            let temporal = temporal_evaluate(&run.prepared, &r.spec, &r.sexes, None)?;
            if temporal.wave2_target_reads_during_fit != 0 {
                return Err(PipelineError::Config(format!(
                    "protocol violation: {} wave-2 target reads during fit",
                    temporal.wave2_target_reads_during_fit
                )));
            }
            reports.extend(temporal.reports);
            for sex_run in &temporal.per_sex {
                ba_records.extend(ba_delta(
                    &sex_run.wave1.row_ids,
                    &sex_run.pred_wave1,
                    &sex_run.wave1.target,
                    WaveId::Wave1,
                ));
                ba_records.extend(ba_delta(
                    &sex_run.wave2.row_ids,
                    &sex_run.pred_wave2,
                    &sex_run.wave2_ages,
                    WaveId::Wave2,
                ));
            }
        }
    }

    let wave1_records: Vec<BaDeltaRecord> =
        ba_records.iter().filter(|b| b.wave == "wave1").cloned().collect();
    let wave2_records: Vec<BaDeltaRecord> =
        ba_records.iter().filter(|b| b.wave == "wave2").cloned().collect();
    let agers = extreme_agers(&wave1_records, &wave2_records, r.decile, &run.wave1_imputed, r.seed)?;

    write_report_json(&reports, &r.out.join("report.json"))?;
    write_ba_deltas(&ba_records, &r.out.join("ba_deltas.csv"))?;
    write_extreme_agers(&agers, &r.out.join("extreme_agers.csv"))?;
    for artifact in ["report.json", "ba_deltas.csv", "extreme_agers.csv"] {
        manifest.record_artifact(&r.out, artifact)?;
    }
    manifest.write(&r.out)?;
    for rep in reports.iter().filter(|rep| rep.wave == "test") {
        println!(
            "evaluate {} sex {}: test r2 {:.4} rmse {:.3} (n {})",
            rep.model, rep.sex, rep.r2, rep.rmse, rep.n
        );
    }
    Ok(())
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<()> {
    let r = resolve(&args.run, None, None)?;
    ensure_out_dir(&r.out)?;
    let run = load_run(&r)?;
    let mut manifest = manifest_base("explain", &r)?;

    let mut summary_rows: Vec<(String, String, f64, usize, f64)> = Vec::new();
    let mut point_rows: Vec<(String, String, String, f64, f64)> = Vec::new();
    for &sex in &r.sexes {
        let rows = run.prepared.rows_of_sex(sex);
        let sub = run.prepared.select_rows(&rows);
        let model = match &args.model_dir {
            Some(dir) => {
                let path = dir.join(model_file(sex));
                manifest.record_input(&path)?;
                load_model(&path)?
            }
            None => {
                let y = sub.wave1.target.clone();
                r.spec.fit(&sub.wave1, &y)?
            }
        };
        let TrainedModel::Gbm(ensemble) = &model else {
            return Err(PipelineError::Config(format!(
                "SHAP attribution requires a gbm model, got {}",
                model.kind().label()
            )));
        };
        let attrs = tree_shap(ensemble, &sub.wave1)?;
        let (summary, points) = summarize(&attrs, &sub.wave1)?;
        for (j, name) in summary.feature_names.iter().enumerate() {
            summary_rows.push((
                sex.code().to_string(),
                name.clone(),
                summary.mean_abs_phi[j],
                summary.rank[j],
                summary.sign_consistency[j],
            ));
        }
        for p in points {
            point_rows.push((sex.code().to_string(), p.row_id, p.feature, p.phi, p.value));
        }
    }

    let summary_path = r.out.join("shap_summary.csv");
    let mut w = csv::Writer::from_path(&summary_path).map_err(|e| PipelineError::csv(&summary_path, e))?;
    w.write_record(["sex", "feature", "mean_abs_phi", "rank", "sign_consistency"])
        .map_err(|e| PipelineError::csv(&summary_path, e))?;
    for (sex, feature, mean_abs, rank, sign) in &summary_rows {
        w.write_record([
            sex.as_str(),
            feature.as_str(),
            &format!("{mean_abs}"),
            &format!("{rank}"),
            &format!("{sign}"),
        ])
        .map_err(|e| PipelineError::csv(&summary_path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(&summary_path, e))?;

    let points_path = r.out.join("shap_points.csv");
    let mut w = csv::Writer::from_path(&points_path).map_err(|e| PipelineError::csv(&points_path, e))?;
    w.write_record(["sex", "row_id", "feature", "phi", "value"])
        .map_err(|e| PipelineError::csv(&points_path, e))?;
    for (sex, row_id, feature, phi, value) in &point_rows {
        w.write_record([
            sex.as_str(),
            row_id.as_str(),
            feature.as_str(),
            &format!("{phi}"),
            &format!("{value}"),
        ])
        .map_err(|e| PipelineError::csv(&points_path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(&points_path, e))?;

    manifest.record_artifact(&r.out, "shap_summary.csv")?;
    manifest.record_artifact(&r.out, "shap_points.csv")?;
    manifest.write(&r.out)?;
    println!("explain: wrote {} summary rows, {} points", summary_rows.len(), point_rows.len());
    Ok(())
}

pub fn cmd_subgroup(args: &SubgroupArgs) -> Result<()> {
    let r = resolve(&args.run, None, args.stratifier.as_deref())?;
    ensure_out_dir(&r.out)?;
    let run = load_run(&r)?;
    let mut manifest = manifest_base("subgroup", &r)?;
    let result = subgroup_eval(&run.prepared, r.stratifier, &r.spec, &r.sexes)?;
    if result.wave2_target_reads_during_fit != 0 {
        return Err(PipelineError::Config(format!(
            "protocol violation: {} wave-2 target reads during fit",
            result.wave2_target_reads_during_fit
        )));
    }
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    write_report_json(&result.reports, &r.out.join("report.json"))?;
    manifest.record_artifact(&r.out, "report.json")?;
    manifest.write(&r.out)?;
    for rep in result.reports.iter().filter(|rep| rep.wave == "test") {
        println!(
            "subgroup {} sex {} [{}]: test r2 {:.4} rmse {:.3} (n {})",
            rep.model,
            rep.sex,
            rep.stratum.as_deref().unwrap_or("-"),
            rep.r2,
            rep.rmse,
            rep.n
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    model: String,
    r2_train: f64,
    rmse_train: f64,
    r2_test: f64,
    rmse_test: f64,
    n_test: usize,
}

pub fn cmd_compare(args: &RunArgs) -> Result<()> {
    let r = resolve(args, None, None)?;
    ensure_out_dir(&r.out)?;
    let run = load_run(&r)?;
    let mut manifest = manifest_base("compare", &r)?;

    let mut by_sex: BTreeMap<String, Vec<CompareRow>> = BTreeMap::new();
    let mut all_reports = Vec::new();
    for kind in [ModelKind::Gbm, ModelKind::Rf, ModelKind::Enet] {
        let spec = ModelSpec::default_for(kind).with_seed(r.seed);
        let temporal = temporal_evaluate(&run.prepared, &spec, &r.sexes, None)?;
        if temporal.wave2_target_reads_during_fit != 0 {
            return Err(PipelineError::Config(
                "protocol violation: wave-2 target read during fit".into(),
            ));
        }
        for &sex in &r.sexes {
            let train = temporal
                .reports
                .iter()
                .find(|rep| rep.sex == sex.code() && rep.wave == "train")
                .expect("train report present");
            let test = temporal
                .reports
                .iter()
                .find(|rep| rep.sex == sex.code() && rep.wave == "test")
                .expect("test report present");
            by_sex.entry(sex.code().to_string()).or_default().push(CompareRow {
                model: kind.label().to_string(),
                r2_train: train.r2,
                rmse_train: train.rmse,
                r2_test: test.r2,
                rmse_test: test.rmse,
                n_test: test.n,
            });
        }
        all_reports.extend(temporal.reports);
    }
    for rows in by_sex.values_mut() {
        rows.sort_by(|a, b| b.r2_test.total_cmp(&a.r2_test));
    }
    let compare_path = r.out.join("compare.json");
    let json = serde_json::to_string_pretty(&by_sex)
        .map_err(|e| PipelineError::Persistence(e.to_string()))?;
    std::fs::write(&compare_path, json).map_err(|e| PipelineError::io(&compare_path, e))?;
    write_report_json(&all_reports, &r.out.join("report.json"))?;
    manifest.record_artifact(&r.out, "compare.json")?;
    manifest.record_artifact(&r.out, "report.json")?;
    manifest.write(&r.out)?;
    for (sex, rows) in &by_sex {
        for row in rows {
            println!("compare sex {sex}: {} test r2 {:.4}", row.model, row.r2_test);
        }
    }
    Ok(())
}

pub fn cmd_systems(args: &RunArgs) -> Result<()> {
    let r = resolve(args, None, None)?;
    ensure_out_dir(&r.out)?;
    let run = load_run(&r)?;
    let mut manifest = manifest_base("systems", &r)?;
    let analysis = system_analysis(&run.prepared, &r.spec)?;
    for warning in &analysis.warnings {
        eprintln!("warning: {warning}");
    }
    write_system_r2(&analysis, &r.out.join("system_r2.csv"))?;
    write_corr_matrix(&analysis.systems, &analysis.corr_female, &r.out.join("system_corr_F.csv"))?;
    write_corr_matrix(&analysis.systems, &analysis.corr_male, &r.out.join("system_corr_M.csv"))?;
    write_corr_matrix(&analysis.systems, &analysis.corr_diff, &r.out.join("system_corr_diff.csv"))?;
    for artifact in ["system_r2.csv", "system_corr_F.csv", "system_corr_M.csv", "system_corr_diff.csv"] {
        manifest.record_artifact(&r.out, artifact)?;
    }
    manifest.write(&r.out)?;
    for row in &analysis.r2 {
        println!("system {} sex {}: test r2 {:.4}", row.system, row.sex, row.r2_test);
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Subgroup(a) => cmd_subgroup(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Systems(a) => cmd_systems(a),
    }
}
