//! Flat run configuration: architecture, training and data keys side by side
//! in one TOML table.
//!
//! Precedence is defaults < file < overrides. The resolved form fills in
//! derived output paths and parses back to itself.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ArchitectureSpec;
use crate::train::TrainingConfig;

const TRAINING_KEYS: &[&str] = &[
    "learning_rate",
    "momentum",
    "weight_decay",
    "batch_size",
    "epochs",
    "seed",
    "train_fraction",
    "flip_probability",
    "checkpoint_path",
    "log_path",
    "log_wall_time",
];

const DATA_KEYS: &[&str] = &[
    "data_dir",
    "synthetic_count",
    "synthetic_size",
    "synthetic_seed",
    "output_dir",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory; synthetic data is generated when absent.
    pub data_dir: Option<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_size: usize,
    pub synthetic_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            data_dir: None,
            synthetic_count: 200,
            synthetic_size: 64,
            synthetic_seed: 0,
            output_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub arch: ArchitectureSpec,
    pub training: TrainingConfig,
    pub data: DataConfig,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Merges `text` (if any) and then `overrides` over the defaults, and
    /// fills unset output paths from `output_dir`.
    pub fn resolve(text: Option<&str>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = match text {
            Some(t) => t.parse::<toml::Table>().map_err(config_err)?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let (mut training, mut data, mut arch) = (toml::Table::new(), toml::Table::new(), toml::Table::new());
        for (k, v) in table {
            let dest = if TRAINING_KEYS.contains(&k.as_str()) {
                &mut training
            } else if DATA_KEYS.contains(&k.as_str()) {
                &mut data
            } else {
                &mut arch
            };
            dest.insert(k, v);
        }
        if !arch.contains_key("variant") {
            arch.insert("variant".into(), toml::Value::String("micro".into()));
        }
        let mut cfg = RunConfig {
            arch: ArchitectureSpec::from_table(arch)?,
            training: toml::Value::Table(training).try_into().map_err(config_err)?,
            data: toml::Value::Table(data).try_into().map_err(config_err)?,
        };
        cfg.training.validate()?;
        let out = cfg.data.output_dir.clone();
        cfg.training.checkpoint_path.get_or_insert_with(|| out.join("checkpoint.mnck"));
        cfg.training.log_path.get_or_insert_with(|| out.join("log.csv"));
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::resolve(Some(&text), overrides)
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(&self.arch).expect("architecture serializes");
        for part in [
            toml::Table::try_from(&self.training).expect("training config serializes"),
            toml::Table::try_from(&self.data).expect("data config serializes"),
        ] {
            table.extend(part);
        }
        toml::to_string(&table).expect("table serializes")
    }
}

/// Parses `key=value`; the value is read as TOML and falls back to a bare
/// string.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{arg}` is not key=value")))?;
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Variant;

    #[test]
    fn precedence() {
        let text = "epochs = 5\nseed = 3\nvariant = \"bm2\"\noutput_dir = \"out\"\n";
        let cfg = RunConfig::resolve(Some(text), &[parse_override("epochs=7").unwrap()]).unwrap();
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.seed, 3);
        assert_eq!(cfg.training.learning_rate, 0.001);
        assert_eq!(cfg.arch.variant, Variant::Bm2);
        assert_eq!(cfg.training.log_path, Some(PathBuf::from("out/log.csv")));
    }

    #[test]
    fn resolved_form_is_a_fixed_point() {
        let cfg = RunConfig::resolve(Some("momentum = 0.5\nbase_e = 8\n"), &[]).unwrap();
        let text = cfg.to_toml();
        let again = RunConfig::resolve(Some(&text), &[]).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), text);
    }

    #[test]
    fn unknown_and_invalid_keys() {
        assert!(matches!(RunConfig::resolve(Some("bogus = 1\n"), &[]), Err(Error::Config(_))));
        assert!(RunConfig::resolve(Some("batch_size = 0\n"), &[]).is_err());
        assert!(RunConfig::resolve(Some("learning_rate = -1.0\n"), &[]).is_err());
    }

    #[test]
    fn override_values() {
        assert_eq!(parse_override("a=3").unwrap().1, toml::Value::Integer(3));
        assert_eq!(parse_override("a=x/y").unwrap().1, toml::Value::String("x/y".into()));
        assert!(parse_override("nope").is_err());
    }
}
