use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::manifest::save_manifest;
use super::sample::Sample;
use crate::error::{Error, Result};
use crate::imgops::{Image, Mask};

/// Field names of the external per-record JSON files and the mapping from
/// external label codes to class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportKeys {
    pub image: String,
    pub mask: String,
    pub label: String,
    pub patient_id: String,
    pub label_map: BTreeMap<i64, usize>,
}

impl Default for ImportKeys {
    /// Figshare codes: 1 meningioma, 2 glioma, 3 pituitary.
    fn default() -> Self {
        ImportKeys {
            image: "image".into(),
            mask: "tumorMask".into(),
            label: "label".into(),
            patient_id: "PID".into(),
            label_map: BTreeMap::from([(1, 2), (2, 0), (3, 1)]),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportSummary {
    pub imported: usize,
    pub skipped: usize,
    pub skipped_records: Vec<String>,
}

const EXPECTED_EXTENT: usize = 512;

fn field<'a>(record: &'a Value, key: &str, id: &str) -> Result<&'a Value> {
    record
        .get(key)
        .ok_or_else(|| Error::data(id, format!("missing key `{key}`")))
}

fn read_record(path: &Path, keys: &ImportKeys) -> Result<Sample> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("record")
        .to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: Value = serde_json::from_str(&text).map_err(|e| Error::data(&id, e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let rel = |key: &str| -> Result<PathBuf> {
        field(&record, key, &id)?
            .as_str()
            .map(|p| dir.join(p))
            .ok_or_else(|| Error::data(&id, format!("`{key}` must be a path string")))
    };
    let code = field(&record, &keys.label, &id)?
        .as_i64()
        .ok_or_else(|| Error::data(&id, "label must be an integer"))?;
    let label = *keys
        .label_map
        .get(&code)
        .ok_or_else(|| Error::data(&id, format!("unknown label code {code}")))?;
    let patient = match field(&record, &keys.patient_id, &id)? {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let image = Image::load(&rel(&keys.image)?).map_err(|e| Error::data(&id, e.to_string()))?;
    let mask = Mask::load(&rel(&keys.mask)?).map_err(|e| Error::data(&id, e.to_string()))?;
    if image.dims() != (EXPECTED_EXTENT, EXPECTED_EXTENT) {
        log::warn!(
            "{id}: extent {:?} differs from the expected 512×512",
            image.dims()
        );
    }
    Sample::new(id, image, mask, label, patient)
}

/// Converts a directory of per-sample JSON records into the native layout
/// and writes `out_manifest`. Unreadable records are skipped and counted.
pub fn import_external_dataset(
    dir: &Path,
    keys: &ImportKeys,
    out_manifest: &Path,
) -> Result<(Vec<Sample>, ImportSummary)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut samples = Vec::new();
    let mut summary = ImportSummary::default();
    for p in &paths {
        match read_record(p, keys) {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                summary.skipped += 1;
                summary.skipped_records.push(p.display().to_string());
            }
        }
    }
    summary.imported = samples.len();
    save_manifest(out_manifest, &samples)?;
    Ok((samples, summary))
}
