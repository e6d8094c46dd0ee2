//! Model directories: one JSON file per network, a manifest and the loss
//! curves.

use std::path::Path;

use opfscreen_core::learner::{TrainConfig, TrainReport, TrainedNet};
use opfscreen_core::pipeline::{FeatureMode, TrainedModels, TrainingManifest, TrainingReports};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{create_dir, float, read_json, sha256_hex, write_csv, write_json, TOOL_VERSION};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

const ROLES: [&str; 3] = ["regressor", "classifier_v", "classifier_l"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub role: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub net: TrainedNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub case_fingerprint: String,
    pub feature_mode: FeatureMode,
    pub training: TrainingManifest,
    pub dataset1_hash: String,
    pub dataset2_hash: String,
    pub warnings: Vec<String>,
    /// Final validation loss of each network, in file order.
    pub final_val_loss: Vec<f64>,
}

fn config_hash(cfg: &TrainConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

fn write_losses(path: &Path, r: &TrainReport) -> Result<()> {
    let header = ["epoch", "train_loss", "val_loss"].map(String::from);
    write_csv(
        path,
        &header,
        r.train_loss
            .iter()
            .zip(&r.val_loss)
            .enumerate()
            .map(|(e, (t, v))| vec![(e + 1).to_string(), float(*t), float(*v)]),
    )
}

pub struct ModelArtifacts<'a> {
    pub models: &'a TrainedModels,
    pub reports: &'a TrainingReports,
    pub dataset1_hash: String,
    pub dataset2_hash: String,
    pub warnings: Vec<String>,
}

pub fn write_models(dir: &Path, a: &ModelArtifacts<'_>) -> Result<()> {
    create_dir(dir)?;
    let m = a.models;
    let cfgs = &m.manifest.configs;
    let entries = [
        (&m.regressor, &cfgs.regressor, &a.reports.regressor),
        (&m.classifier_v, &cfgs.classifier_v, &a.reports.classifier_v),
        (&m.classifier_l, &cfgs.classifier_l, &a.reports.classifier_l),
    ];
    for (role, (net, cfg, report)) in ROLES.iter().zip(entries) {
        let file = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            role: role.to_string(),
            config: cfg.clone(),
            config_hash: config_hash(cfg),
            net: net.clone(),
        };
        write_json(&dir.join(format!("{role}.json")), &file)?;
        write_losses(&dir.join(format!("losses_{role}.csv")), report)?;
    }
    let manifest = ModelsManifest {
        schema_version: MODEL_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        case_fingerprint: m.case_fingerprint.clone(),
        feature_mode: m.feature_mode,
        training: m.manifest.clone(),
        dataset1_hash: a.dataset1_hash.clone(),
        dataset2_hash: a.dataset2_hash.clone(),
        warnings: a.warnings.clone(),
        final_val_loss: vec![
            a.reports.regressor.final_val_loss,
            a.reports.classifier_v.final_val_loss,
            a.reports.classifier_l.final_val_loss,
        ],
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn read_model(dir: &Path, role: &str) -> Result<ModelFile> {
    let path = dir.join(format!("{role}.json"));
    let f: ModelFile = read_json(&path)?;
    if f.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::invalid(&path, format!("unsupported schema_version {}", f.schema_version)));
    }
    if f.role != role {
        return Err(Error::invalid(&path, format!("file holds the {} model", f.role)));
    }
    if f.config_hash != config_hash(&f.config) {
        return Err(Error::invalid(&path, "config hash does not match the stored config"));
    }
    f.net.params.validate()?;
    Ok(f)
}

pub fn read_models_manifest(dir: &Path) -> Result<ModelsManifest> {
    let path = dir.join("manifest.json");
    let m: ModelsManifest = read_json(&path)?;
    if m.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::invalid(&path, format!("unsupported schema_version {}", m.schema_version)));
    }
    Ok(m)
}

pub fn read_models(dir: &Path) -> Result<TrainedModels> {
    let manifest = read_models_manifest(dir)?;
    let [r, v, l] = ROLES.map(|role| read_model(dir, role));
    Ok(TrainedModels {
        regressor: r?.net,
        classifier_v: v?.net,
        classifier_l: l?.net,
        case_fingerprint: manifest.case_fingerprint,
        feature_mode: manifest.feature_mode,
        manifest: manifest.training,
    })
}

/// Hash over the manifest and the three model files.
pub fn models_hash(dir: &Path) -> Result<String> {
    let mut parts = vec![crate::files::hash_file(&dir.join("manifest.json"))?];
    for role in ROLES {
        parts.push(crate::files::hash_file(&dir.join(format!("{role}.json")))?);
    }
    Ok(sha256_hex(parts.join("").as_bytes()))
}
