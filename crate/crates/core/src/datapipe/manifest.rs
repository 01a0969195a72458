use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::sample::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgops::{Image, Mask};

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    image_path: String,
    mask_path: String,
    label: String,
    patient_id: String,
    #[serde(default)]
    map_path: Option<String>,
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_row(base: &Path, row: &Row) -> Result<Sample> {
    let fail = |e: Error| Error::data(&row.id, e.to_string());
    let label: usize = row.label.trim().parse().map_err(|_| {
        Error::data(
            &row.id,
            format!("label `{}` is not a class index", row.label),
        )
    })?;
    let image = Image::load(&base.join(&row.image_path)).map_err(fail)?;
    let mask = Mask::load(&base.join(&row.mask_path)).map_err(fail)?;
    let mut s = Sample {
        id: row.id.clone(),
        image,
        mask,
        label,
        patient_id: row.patient_id.clone(),
        fold: None,
        prelim: None,
    };
    if let Some(mp) = row.map_path.as_deref().filter(|p| !p.is_empty()) {
        s.prelim = Some(Image::load(&base.join(mp)).map_err(fail)?);
    }
    s.validate()?;
    Ok(s)
}

/// Reads a manifest CSV and every file it references (paths are relative to
/// the manifest). An optional trailing `map_path` column carries
/// preliminary segmentation maps.
pub fn load_manifest(path: &Path) -> Result<Vec<Sample>> {
    load_manifest_with(path, Exec::default())
}

pub fn load_manifest_with(path: &Path, exec: Exec) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let rows: Vec<Row> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    let base = base_dir(path);
    exec.map(&rows, |r| load_row(&base, r))
        .into_iter()
        .collect()
}

/// Writes `images/`, `masks/` (and `maps/` when any sample has a
/// preliminary map) next to `path`, then the manifest itself.
pub fn save_manifest(path: &Path, samples: &[Sample]) -> Result<()> {
    let base = base_dir(path);
    let with_maps = samples.iter().any(|s| s.prelim.is_some());
    let mut dirs = vec!["images", "masks"];
    if with_maps {
        dirs.push("maps");
    }
    for d in &dirs {
        let dir = base.join(d);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let written: Vec<Result<()>> = Exec::default().map(samples, |s| {
        s.image.save(&base.join(format!("images/{}.png", s.id)))?;
        s.mask.save(&base.join(format!("masks/{}.png", s.id)))?;
        if let Some(p) = &s.prelim {
            p.save(&base.join(format!("maps/{}.png", s.id)))?;
        }
        Ok(())
    });
    written.into_iter().collect::<Result<()>>()?;

    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id", "image_path", "mask_path", "label", "patient_id"];
    if with_maps {
        header.push("map_path");
    }
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![
            s.id.clone(),
            format!("images/{}.png", s.id),
            format!("masks/{}.png", s.id),
            s.label.to_string(),
            s.patient_id.clone(),
        ];
        if with_maps {
            rec.push(
                s.prelim
                    .as_ref()
                    .map_or(String::new(), |_| format!("maps/{}.png", s.id)),
            );
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
