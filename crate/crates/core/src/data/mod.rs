//! Image/label ingestion, patch cutting, train/validation splitting,
//! horizontal-flip augmentation and a synthetic aerial-style generator.

mod dataset;
mod manifest;
mod patches;
pub mod pnm;
mod synthetic;

pub use dataset::{load_dataset, write_dataset, Dataset};
pub use manifest::{split, DatasetManifest, ManifestEntry, Split};
pub use patches::{cut_patches, reassemble};
pub use synthetic::{gen_synthetic, BUILDING_FRACTION};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Per-pixel category indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Validation(format!(
                "label map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(LabelMap { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        LabelMap {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    /// Pixel count per category.
    pub fn histogram(&self, n_classes: usize) -> Vec<usize> {
        let mut h = vec![0; n_classes];
        for &v in &self.data {
            if (v as usize) < n_classes {
                h[v as usize] += 1;
            }
        }
        h
    }

    pub fn hflip(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width.max(1)) {
            row.reverse();
        }
        LabelMap { data, ..*self }
    }
}

/// Where a patch came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub source: String,
    pub row: usize,
    pub col: usize,
}

/// An image patch `(1, 3, H, W)` in `[0, 1]` and its category map
/// (0 = background, 1 = building).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPatch {
    pub image: Tensor<f32>,
    pub label: LabelMap,
    pub provenance: Provenance,
}

impl LabeledPatch {
    pub fn new(image: Tensor<f32>, label: LabelMap, provenance: Provenance) -> Result<Self> {
        let s = image.shape();
        if s.n() != 1 || s.c() != 3 {
            return Err(Error::Validation(format!("patch image must be (1, 3, H, W), got {s}")));
        }
        if s.h() != label.height() || s.w() != label.width() {
            return Err(Error::Validation(format!(
                "image is {}x{} but label is {}x{}",
                s.h(),
                s.w(),
                label.height(),
                label.width()
            )));
        }
        Ok(LabeledPatch { image, label, provenance })
    }

    pub fn id(&self) -> String {
        let p = &self.provenance;
        format!("{}_r{:02}_c{:02}", p.source, p.row, p.col)
    }

    pub fn height(&self) -> usize {
        self.label.height
    }

    pub fn width(&self) -> usize {
        self.label.width
    }
}

/// Mirrors image and label along the width axis.
pub fn hflip(patch: &LabeledPatch) -> LabeledPatch {
    let s = patch.image.shape();
    let image = Tensor::from_fn(s, |n, c, h, w| patch.image.at(n, c, h, s.w() - 1 - w));
    LabeledPatch {
        image,
        label: patch.label.hflip(),
        provenance: patch.provenance.clone(),
    }
}

/// Reads a binary P6 image as a `(1, 3, H, W)` tensor scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<std::path::Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = pnm::decode(&bytes)?;
    if img.channels != 3 {
        return Err(Error::Parse {
            offset: 0,
            detail: format!("{}: expected a P6 image", path.display()),
        });
    }
    Ok(image_tensor(&img))
}

pub(crate) fn image_tensor(img: &pnm::Pnm) -> Tensor<f32> {
    let (h, w) = (img.height, img.width);
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| img.data[(y * w + x) * 3 + c] as f32 / 255.0)
}

pub fn save_image(path: impl AsRef<std::path::Path>, image: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    let s = image.shape();
    if s.n() != 1 || s.c() != 3 {
        return Err(Error::Validation(format!("expected a (1, 3, H, W) image, got {s}")));
    }
    let mut data = Vec::with_capacity(s.h() * s.w() * 3);
    for y in 0..s.h() {
        for x in 0..s.w() {
            for c in 0..3 {
                data.push((image.at(0, c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let bytes = pnm::encode(&pnm::Pnm { width: s.w(), height: s.h(), channels: 3, data });
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a binary P5 mask: 0 is background, 255 is building.
pub fn load_mask(path: impl AsRef<std::path::Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    mask_from_pnm(&pnm::decode(&bytes)?)
}

pub(crate) fn mask_from_pnm(img: &pnm::Pnm) -> Result<LabelMap> {
    if img.channels != 1 {
        return Err(Error::Parse {
            offset: 0,
            detail: "expected a P5 mask".into(),
        });
    }
    let data = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(Error::Validation(format!(
                "mask value {other} at pixel ({}, {}) is neither 0 nor 255",
                i / img.width,
                i % img.width
            ))),
        })
        .collect::<Result<Vec<u8>>>()?;
    LabelMap::new(img.height, img.width, data)
}

/// Writes a category map as a binary P5 mask (category 1 → 255).
pub fn save_mask(path: impl AsRef<std::path::Path>, labels: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    let data = labels.data().iter().map(|&v| if v == 0 { 0 } else { 255 }).collect();
    let bytes = pnm::encode(&pnm::Pnm {
        width: labels.width(),
        height: labels.height(),
        channels: 1,
        data,
    });
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an image and its mask, checking that their sizes agree.
pub fn load_pair(image: impl AsRef<std::path::Path>, mask: impl AsRef<std::path::Path>) -> Result<(Tensor<f32>, LabelMap)> {
    let img = load_image(image)?;
    let label = load_mask(mask)?;
    if img.shape().h() != label.height() || img.shape().w() != label.width() {
        return Err(Error::Validation(format!(
            "image is {}x{} but mask is {}x{}",
            img.shape().h(),
            img.shape().w(),
            label.height(),
            label.width()
        )));
    }
    Ok((img, label))
}

pub fn load_tensor(path: impl AsRef<std::path::Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_raw_bytes(&bytes)
}

pub fn save_tensor<T: crate::Element>(path: impl AsRef<std::path::Path>, t: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, t.to_raw_bytes()).map_err(|e| Error::io(path, e))
}
