use crate::error::{Axis, Error, Result};
use crate::tensor::{Shape, Tensor};

use super::{LabelMap, LabeledPatch, Provenance};

/// Cuts a non-overlapping grid of `patch_size` squares in row-major order.
pub fn cut_patches(image: &Tensor<f32>, label: &LabelMap, patch_size: usize, source: &str) -> Result<Vec<LabeledPatch>> {
    let s = image.shape();
    if s.h() != label.height() || s.w() != label.width() {
        return Err(Error::Validation(format!(
            "image is {}x{} but label is {}x{}",
            s.h(),
            s.w(),
            label.height(),
            label.width()
        )));
    }
    if patch_size == 0 {
        return Err(Error::Parameter("patch size must be positive".into()));
    }
    for (axis, size) in [(Axis::Height, s.h()), (Axis::Width, s.w())] {
        if size % patch_size != 0 {
            return Err(Error::Indivisible { op: "cut_patches", axis, size, divisor: patch_size });
        }
    }
    let (rows, cols) = (s.h() / patch_size, s.w() / patch_size);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (y0, x0) = (r * patch_size, c * patch_size);
            let img = Tensor::from_fn(Shape::new(1, s.c(), patch_size, patch_size), |_, ch, y, x| {
                image.at(0, ch, y0 + y, x0 + x)
            });
            let mut data = Vec::with_capacity(patch_size * patch_size);
            for y in 0..patch_size {
                let start = (y0 + y) * label.width() + x0;
                data.extend_from_slice(&label.data()[start..start + patch_size]);
            }
            out.push(LabeledPatch {
                image: img,
                label: LabelMap::new(patch_size, patch_size, data)?,
                provenance: Provenance {
                    source: source.to_string(),
                    row: r,
                    col: c,
                },
            });
        }
    }
    Ok(out)
}

/// Inverse of [`cut_patches`] for one source.
pub fn reassemble(patches: &[LabeledPatch]) -> Result<(Tensor<f32>, LabelMap)> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Validation("nothing to reassemble".into()))?;
    let p = first.height();
    let rows = patches.iter().map(|q| q.provenance.row).max().unwrap() + 1;
    let cols = patches.iter().map(|q| q.provenance.col).max().unwrap() + 1;
    if patches.len() != rows * cols {
        return Err(Error::Validation(format!(
            "expected {} patches for a {rows}x{cols} grid, got {}",
            rows * cols,
            patches.len()
        )));
    }
    let channels = first.image.shape().c();
    let mut image = Tensor::zeros(Shape::new(1, channels, rows * p, cols * p));
    let mut label = LabelMap::filled(rows * p, cols * p, 0);
    let width = cols * p;
    for q in patches {
        if q.height() != p || q.width() != p {
            return Err(Error::Validation("patches differ in size".into()));
        }
        let (y0, x0) = (q.provenance.row * p, q.provenance.col * p);
        for y in 0..p {
            for x in 0..p {
                for c in 0..channels {
                    image.set(0, c, y0 + y, x0 + x, q.image.at(0, c, y, x));
                }
                label.data_mut()[(y0 + y) * width + x0 + x] = q.label.get(y, x);
            }
        }
    }
    Ok((image, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(h: usize, w: usize) -> (Tensor<f32>, LabelMap) {
        let img = Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| ((c * 7 + y * 13 + x * 3) % 256) as f32 / 255.0);
        let data = (0..h * w).map(|i| (i / w + i % w).is_multiple_of(3) as u8).collect();
        (img, LabelMap::new(h, w, data).unwrap())
    }

    #[test]
    fn counts() {
        let (img, lab) = source(500, 500);
        let ps = cut_patches(&img, &lab, 500, "a").unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].image, img);
        assert_eq!(ps[0].label, lab);
        let (img, lab) = source(100, 60);
        assert_eq!(cut_patches(&img, &lab, 20, "a").unwrap().len(), 15);
    }

    #[test]
    fn reassembly_is_identity() {
        let (img, lab) = source(64, 64);
        let ps = cut_patches(&img, &lab, 32, "a").unwrap();
        assert_eq!(ps.len(), 4);
        assert_eq!((ps[1].provenance.row, ps[1].provenance.col), (0, 1));
        let (i2, l2) = reassemble(&ps).unwrap();
        assert_eq!(i2, img);
        assert_eq!(l2, lab);
    }

    #[test]
    fn indivisible_rejected() {
        let (img, lab) = source(64, 60);
        assert!(matches!(
            cut_patches(&img, &lab, 32, "a"),
            Err(Error::Indivisible { axis: Axis::Width, .. })
        ));
    }
}
