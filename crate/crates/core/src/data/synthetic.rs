//! Desk-scale stand-in for aerial building footprints.
//!
//! Backgrounds are greenish (G > R) with per-pixel grain and soft blotches;
//! roofs are brighter and reddish (R > G). The chromatic margin keeps the two
//! classes separable by a linear function through the origin, which matters
//! because the networks carry no bias terms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

use super::{LabelMap, LabeledPatch, Provenance};

/// Inclusive bounds on the building pixel fraction of every sample.
pub const BUILDING_FRACTION: (f64, f64) = (0.05, 0.40);

const MAX_TRIES: usize = 1000;

/// `count` samples of `size`×`size`. Sample `i` depends only on `(seed, i)`.
pub fn gen_synthetic(count: usize, size: usize, seed: u64) -> Result<Vec<LabeledPatch>> {
    if size == 0 || !size.is_multiple_of(4) {
        return Err(Error::Parameter(format!("synthetic patch size {size} must be a positive multiple of 4")));
    }
    Ok((0..count).map(|i| sample(size, seed, i)).collect())
}

fn sample(size: usize, seed: u64, index: usize) -> LabeledPatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let label = footprint(size, &mut rng);

    let bg = {
        let r = rng.random_range(0.15..0.35);
        [r, r + rng.random_range(0.12..0.22), rng.random_range(0.10..0.30)]
    };
    let roof = {
        let r = rng.random_range(0.60..0.85);
        [r, r - rng.random_range(0.18..0.30), rng.random_range(0.30..0.55)]
    };
    // A few soft blotches shift background brightness without touching hue.
    let blotches: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let s = size as f64;
            (
                rng.random_range(0.0..s),
                rng.random_range(0.0..s),
                rng.random_range(s / 8.0..s / 3.0),
                rng.random_range(-0.06..0.06),
            )
        })
        .collect();

    let mut pixels = vec![0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let building = label.get(y, x) == 1;
            let (base, grain) = if building { (roof, 0.03) } else { (bg, 0.04) };
            let mut shade = 0.0;
            if !building {
                for &(cy, cx, r, a) in &blotches {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    shade += a * (-d2 / (r * r)).exp();
                }
            }
            let g = rng.random_range(-grain..grain);
            for c in 0..3 {
                let v = (base[c] + shade + g).clamp(0.0, 1.0);
                // Quantised to 8 bits so a written dataset reloads bit-exactly.
                pixels[(c * size + y) * size + x] = ((v * 255.0).round() / 255.0) as f32;
            }
        }
    }
    let image = Tensor::new(Shape::new(1, 3, size, size), pixels).expect("sized buffer");
    LabeledPatch {
        image,
        label,
        provenance: Provenance {
            source: format!("syn{index:05}"),
            row: 0,
            col: 0,
        },
    }
}

/// 1–6 axis-aligned rectangles, redrawn until the building fraction is in range.
fn footprint(size: usize, rng: &mut ChaCha8Rng) -> LabelMap {
    let (lo, hi) = BUILDING_FRACTION;
    let total = (size * size) as f64;
    let min_side = (size / 8).max(2);
    let max_side = (size / 2).max(min_side + 1);
    for _ in 0..MAX_TRIES {
        let mut map = LabelMap::filled(size, size, 0);
        for _ in 0..rng.random_range(1..=6) {
            let h = rng.random_range(min_side..max_side);
            let w = rng.random_range(min_side..max_side);
            let y0 = rng.random_range(0..=size - h);
            let x0 = rng.random_range(0..=size - w);
            for y in y0..y0 + h {
                map.data_mut()[y * size + x0..y * size + x0 + w].fill(1);
            }
        }
        let frac = map.histogram(2)[1] as f64 / total;
        if (lo..=hi).contains(&frac) {
            return map;
        }
    }
    // Unreachable for any sensible size; a centred square keeps the contract.
    let mut map = LabelMap::filled(size, size, 0);
    let side = ((total * 0.2).sqrt() as usize).max(1);
    let off = (size - side) / 2;
    for y in off..off + side {
        map.data_mut()[y * size + off..y * size + off + side].fill(1);
    }
    map
}
