//! Model selection, training dispatch, versioned model persistence, and
//! the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bioclock_core::forest::{rf_fit, ForestModel, ForestParams};
use bioclock_core::gbm::{fit as gbm_fit, BoostedEnsemble, GbmParams};
use bioclock_core::linear::{enet_fit, ElasticNetModel, ElasticNetParams};
use bioclock_core::matrix::FeatureMatrix;

use crate::error::{PipelineError, Result};

pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Gbm,
    Rf,
    Enet,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Gbm => "gbm",
            ModelKind::Rf => "rf",
            ModelKind::Enet => "enet",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "gbm" => Some(ModelKind::Gbm),
            "rf" => Some(ModelKind::Rf),
            "enet" => Some(ModelKind::Enet),
            _ => None,
        }
    }
}

/// Model choice plus hyperparameters, ready to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Gbm(GbmParams),
    Rf(ForestParams),
    Enet(ElasticNetParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Gbm(_) => ModelKind::Gbm,
            ModelSpec::Rf(_) => ModelKind::Rf,
            ModelSpec::Enet(_) => ModelKind::Enet,
        }
    }

    pub fn default_for(kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Gbm => ModelSpec::Gbm(GbmParams::default()),
            ModelKind::Rf => ModelSpec::Rf(ForestParams::default()),
            ModelKind::Enet => ModelSpec::Enet(ElasticNetParams::default()),
        }
    }

    /// Route the shared top-level seed into the model's own stream.
    pub fn with_seed(mut self, seed: u64) -> ModelSpec {
        match &mut self {
            ModelSpec::Gbm(p) => p.seed = seed,
            ModelSpec::Rf(p) => p.seed = seed,
            ModelSpec::Enet(_) => {}
        }
        self
    }

    pub fn fit(&self, x: &FeatureMatrix, y: &[f64]) -> Result<TrainedModel> {
        Ok(match self {
            ModelSpec::Gbm(p) => TrainedModel::Gbm(gbm_fit(x, y, p)?),
            ModelSpec::Rf(p) => TrainedModel::Rf(rf_fit(x, y, p)?),
            ModelSpec::Enet(p) => TrainedModel::Enet(enet_fit(x, y, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "model")]
pub enum TrainedModel {
    #[serde(rename = "gbm")]
    Gbm(BoostedEnsemble),
    #[serde(rename = "rf")]
    Rf(ForestModel),
    #[serde(rename = "enet")]
    Enet(ElasticNetModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Gbm(_) => ModelKind::Gbm,
            TrainedModel::Rf(_) => ModelKind::Rf,
            TrainedModel::Enet(_) => ModelKind::Enet,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Gbm(m) => &m.feature_names,
            TrainedModel::Rf(m) => &m.feature_names,
            TrainedModel::Enet(m) => &m.feature_names,
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(match self {
            TrainedModel::Gbm(m) => m.predict(x)?,
            TrainedModel::Rf(m) => m.predict(x)?,
            TrainedModel::Enet(m) => m.predict(x)?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelEnvelope {
    format_version: String,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let envelope = ModelEnvelope {
        format_version: MODEL_FORMAT_VERSION.to_string(),
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&envelope)
        .map_err(|e| PipelineError::Persistence(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| PipelineError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let json = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let envelope: ModelEnvelope = serde_json::from_str(&json)
        .map_err(|e| PipelineError::Persistence(format!("{}: {e}", path.display())))?;
    if envelope.format_version != MODEL_FORMAT_VERSION {
        return Err(PipelineError::Persistence(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            envelope.format_version
        )));
    }
    Ok(envelope.model)
}

/// Reproducibility record: inputs, config hash, seed, artifact checksums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// input path -> sha256
    pub inputs: BTreeMap<String, String>,
    /// artifact file name -> sha256
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Manifest {
        Manifest {
            command: command.to_string(),
            seed,
            config_hash: sha256_hex(config_text.as_bytes()),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Checksum an artifact already written under the output dir.
    pub fn record_artifact(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        self.artifacts.insert(name.to_string(), sha256_file(&out_dir.join(name))?);
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Persistence(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| PipelineError::io(&path, e))
    }
}
