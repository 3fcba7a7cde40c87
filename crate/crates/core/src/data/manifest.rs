use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Unassigned => "",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "" => Ok(Split::Unassigned),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub patch_id: String,
    pub source: String,
    pub row: usize,
    pub col: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
}

pub const MANIFEST_HEADER: &str = "patch_id,source,row,col,split";

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{},{}\n", e.patch_id, e.source, e.row, e.col, e.split));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
            _ => return Err(Error::Validation(format!("manifest must start with `{MANIFEST_HEADER}`"))),
        }
        let mut entries = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Validation(format!("manifest line {}: expected 5 fields", no + 1)));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Validation(format!("manifest line {}: bad number `{s}`", no + 1)))
            };
            entries.push(ManifestEntry {
                patch_id: f[0].to_string(),
                source: f[1].to_string(),
                row: num(f[2])?,
                col: num(f[3])?,
                split: f[4].trim().parse()?,
            });
        }
        Ok(DatasetManifest { entries, seed: 0 })
    }
}

/// Seeded shuffle, then the first `round(fraction·n)` patches (at least one,
/// leaving at least one) go to training and the rest to validation.
pub fn split(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<DatasetManifest> {
    let n = manifest.entries.len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 patches to split, got {n}")));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("train fraction {fraction} outside [0, 1]")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = manifest.clone();
    out.seed = seed;
    for (rank, &i) in order.iter().enumerate() {
        out.entries[i].split = if rank < n_train { Split::Train } else { Split::Val };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest {
            entries: (0..n)
                .map(|i| ManifestEntry {
                    patch_id: format!("p{i}"),
                    source: format!("img{}", i / 100),
                    row: (i % 100) / 10,
                    col: i % 10,
                    split: Split::Unassigned,
                })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn ninety_ten() {
        let m = split(&manifest(1800), 0.9, 3).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val)), (1620, 180));
        let m = split(&manifest(10), 0.9, 3).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val)), (9, 1));
    }

    #[test]
    fn deterministic_partition() {
        let a = split(&manifest(50), 0.9, 11).unwrap();
        let b = split(&manifest(50), 0.9, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(Split::Unassigned), 0);
        let c = split(&manifest(50), 0.9, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_patches() {
        assert!(split(&manifest(1), 0.9, 0).is_err());
        let m = split(&manifest(2), 0.9, 0).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val)), (1, 1));
    }

    #[test]
    fn csv_roundtrip() {
        let m = split(&manifest(5), 0.9, 1).unwrap();
        let back = DatasetManifest::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back.entries, m.entries);
        assert!(DatasetManifest::from_csv("bad\n").is_err());
    }
}
