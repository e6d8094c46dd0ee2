//! Dataset directories: `manifest.json` plus one CSV per matrix.

use std::path::Path;

use opfscreen_core::case::Case;
use opfscreen_core::opf::SolveStatus;
use opfscreen_core::scenario::{Dataset, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{create_dir, float, hash_file, read_csv, read_json, write_csv, write_json, TOOL_VERSION};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

pub const MATRIX_FILES: [&str; 5] = ["D.csv", "G.csv", "NI.csv", "labels_v.csv", "labels_l.csv"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedScenario {
    pub index: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub case_fingerprint: String,
    pub config: ScenarioConfig,
    pub eps_active: f64,
    pub kept_count: usize,
    pub dropped_count: usize,
    /// Scenario index of each row.
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedScenario>,
    /// Full-problem objective of each row, $/h.
    pub objectives: Vec<f64>,
}

fn demand_header(case: &Case) -> Vec<String> {
    let ids: Vec<usize> = case.demand_buses().iter().map(|&i| case.buses()[i].id).collect();
    ids.iter()
        .map(|id| format!("pd_{id}"))
        .chain(ids.iter().map(|id| format!("qd_{id}")))
        .collect()
}

fn generation_header(case: &Case) -> Vec<String> {
    let n = case.n_gen();
    (1..=n)
        .map(|g| format!("pg_{g}"))
        .chain((1..=n).map(|g| format!("qg_{g}")))
        .collect()
}

fn injection_header(case: &Case) -> Vec<String> {
    let ids: Vec<usize> = case.injection_buses().iter().map(|&i| case.buses()[i].id).collect();
    ids.iter()
        .map(|id| format!("nip_{id}"))
        .chain(ids.iter().map(|id| format!("niq_{id}")))
        .collect()
}

pub fn voltage_label_header(case: &Case) -> Vec<String> {
    case.buses().iter().map(|b| format!("v_{}", b.id)).collect()
}

pub fn flow_label_header(case: &Case) -> Vec<String> {
    (1..=case.n_branch()).map(|l| format!("l_{l}")).collect()
}

fn float_rows(m: &[Vec<f64>]) -> impl Iterator<Item = Vec<String>> + '_ {
    m.iter().map(|r| r.iter().map(|&x| float(x)).collect())
}

pub(crate) fn bool_rows(m: &[Vec<bool>]) -> impl Iterator<Item = Vec<String>> + '_ {
    m.iter()
        .map(|r| r.iter().map(|&a| if a { "1".to_string() } else { "0".to_string() }).collect())
}

pub fn write_dataset(dir: &Path, case: &Case, ds: &Dataset, eps_active: f64) -> Result<()> {
    create_dir(dir)?;
    write_csv(&dir.join("D.csv"), &demand_header(case), float_rows(&ds.demand))?;
    write_csv(&dir.join("G.csv"), &generation_header(case), float_rows(&ds.generation))?;
    write_csv(&dir.join("NI.csv"), &injection_header(case), float_rows(&ds.net_injection))?;
    write_csv(&dir.join("labels_v.csv"), &voltage_label_header(case), bool_rows(&ds.v_labels))?;
    write_csv(&dir.join("labels_l.csv"), &flow_label_header(case), bool_rows(&ds.l_labels))?;
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        case_fingerprint: ds.case_fingerprint.clone(),
        config: ds.config.clone(),
        eps_active,
        kept_count: ds.len(),
        dropped_count: ds.dropped.len(),
        kept: ds.kept.clone(),
        dropped: ds
            .dropped
            .iter()
            .map(|&(index, status)| DroppedScenario { index, status })
            .collect(),
        objectives: ds.objectives.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn read_matrix(dir: &Path, name: &str, header: &[String], rows: usize) -> Result<Vec<Vec<f64>>> {
    let path = dir.join(name);
    let (h, m) = read_csv(&path)?;
    if h != header {
        return Err(Error::invalid(&path, "header does not match the case"));
    }
    if m.len() != rows {
        return Err(Error::invalid(
            &path,
            format!("{} rows, manifest lists {rows}", m.len()),
        ));
    }
    Ok(m)
}

fn to_bools(path: &Path, m: Vec<Vec<f64>>) -> Result<Vec<Vec<bool>>> {
    m.into_iter()
        .map(|r| {
            r.into_iter()
                .map(|x| {
                    if x == 0.0 {
                        Ok(false)
                    } else if x == 1.0 {
                        Ok(true)
                    } else {
                        Err(Error::invalid(path, format!("label value {x} is not 0 or 1")))
                    }
                })
                .collect()
        })
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let m: DatasetManifest = read_json(&path)?;
    if m.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::invalid(
            &path,
            format!("unsupported schema_version {}", m.schema_version),
        ));
    }
    if m.kept.len() != m.kept_count || m.objectives.len() != m.kept_count {
        return Err(Error::invalid(&path, "kept rows, objectives and kept_count disagree"));
    }
    Ok(m)
}

/// Reads a dataset written for `case`.
pub fn read_dataset(dir: &Path, case: &Case) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let fp = case.fingerprint();
    if m.case_fingerprint != fp {
        return Err(opfscreen_core::Error::CaseMismatch {
            expected: fp,
            got: m.case_fingerprint,
        }
        .into());
    }
    let n = m.kept_count;
    let v_path = dir.join("labels_v.csv");
    let l_path = dir.join("labels_l.csv");
    Ok(Dataset {
        demand: read_matrix(dir, "D.csv", &demand_header(case), n)?,
        generation: read_matrix(dir, "G.csv", &generation_header(case), n)?,
        net_injection: read_matrix(dir, "NI.csv", &injection_header(case), n)?,
        v_labels: to_bools(&v_path, read_matrix(dir, "labels_v.csv", &voltage_label_header(case), n)?)?,
        l_labels: to_bools(&l_path, read_matrix(dir, "labels_l.csv", &flow_label_header(case), n)?)?,
        objectives: m.objectives,
        kept: m.kept,
        dropped: m.dropped.into_iter().map(|d| (d.index, d.status)).collect(),
        config: m.config,
        case_fingerprint: m.case_fingerprint,
    })
}

/// Hash over the manifest and every matrix file.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut parts = vec![hash_file(&dir.join("manifest.json"))?];
    for f in MATRIX_FILES {
        parts.push(hash_file(&dir.join(f))?);
    }
    Ok(crate::files::sha256_hex(parts.join("").as_bytes()))
}
