//! On-disk layout: `images/<id>.ppm`, `labels/<id>.pgm`, `manifest.csv`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::{load_pair, save_image, save_mask, LabeledPatch, Provenance};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub patches: Vec<LabeledPatch>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Wraps patches with an unassigned manifest in the given order.
    pub fn from_patches(patches: Vec<LabeledPatch>) -> Self {
        let entries = patches
            .iter()
            .map(|p| ManifestEntry {
                patch_id: p.id(),
                source: p.provenance.source.clone(),
                row: p.provenance.row,
                col: p.provenance.col,
                split: Split::Unassigned,
            })
            .collect();
        Dataset {
            patches,
            manifest: DatasetManifest { entries, seed: 0 },
        }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn is_split(&self) -> bool {
        !self.manifest.entries.is_empty() && self.manifest.count(Split::Unassigned) == 0
    }

    /// Assigns train/validation membership.
    pub fn with_split(mut self, fraction: f64, seed: u64) -> Result<Self> {
        self.manifest = super::split(&self.manifest, fraction, seed)?;
        Ok(self)
    }

    pub fn subset(&self, split: Split) -> Vec<&LabeledPatch> {
        self.patches
            .iter()
            .zip(&self.manifest.entries)
            .filter(|(_, e)| e.split == split)
            .map(|(p, _)| p)
            .collect()
    }
}

pub fn write_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    for (p, e) in data.patches.iter().zip(&data.manifest.entries) {
        save_image(dir.join("images").join(format!("{}.ppm", e.patch_id)), &p.image)?;
        save_mask(dir.join("labels").join(format!("{}.pgm", e.patch_id)), &p.label)?;
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, data.manifest.to_csv()).map_err(|e| Error::io(&path, e))
}

/// Reads a dataset directory. Without `manifest.csv` every `images/*.ppm`
/// with a matching mask is loaded in file-name order, unassigned.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.csv");
    let manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        DatasetManifest::from_csv(&text)?
    } else {
        let images = dir.join("images");
        let mut ids: Vec<String> = fs::read_dir(&images)
            .map_err(|e| Error::io(&images, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "ppm").then(|| p.file_stem()?.to_str().map(str::to_string))?
            })
            .collect();
        ids.sort();
        DatasetManifest {
            entries: ids
                .into_iter()
                .map(|id| ManifestEntry {
                    source: id.clone(),
                    patch_id: id,
                    row: 0,
                    col: 0,
                    split: Split::Unassigned,
                })
                .collect(),
            seed: 0,
        }
    };
    let patches = manifest
        .entries
        .iter()
        .map(|e| {
            let (image, label) = load_pair(
                dir.join("images").join(format!("{}.ppm", e.patch_id)),
                dir.join("labels").join(format!("{}.pgm", e.patch_id)),
            )?;
            LabeledPatch::new(
                image,
                label,
                Provenance {
                    source: e.source.clone(),
                    row: e.row,
                    col: e.col,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { patches, manifest })
}
