//! Parameterization of the encoder-decoder model family.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unet,
    Bm1,
    Bm2,
    Bm3,
    Micro,
    Custom,
}

impl Variant {
    pub const NAMED: [Variant; 5] = [Variant::Unet, Variant::Bm1, Variant::Bm2, Variant::Bm3, Variant::Micro];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unet => "unet",
            Variant::Bm1 => "bm1",
            Variant::Bm2 => "bm2",
            Variant::Bm3 => "bm3",
            Variant::Micro => "micro",
            Variant::Custom => "custom",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unet" | "u-net" => Ok(Variant::Unet),
            "bm1" => Ok(Variant::Bm1),
            "bm2" => Ok(Variant::Bm2),
            "bm3" => Ok(Variant::Bm3),
            "micro" | "micro-net" => Ok(Variant::Micro),
            "custom" => Ok(Variant::Custom),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}`; expected one of unet, bm1, bm2, bm3, micro, custom"
            ))),
        }
    }
}

/// How an encoder feature map is merged into its decoder counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipMode {
    Add,
    Concat,
}

/// Building block of every sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    /// Fire module (squeeze 1×1, expand 1×1 ‖ expand 3×3).
    Fire,
    /// Plain 3×3 convolution + ReLU, as in the original U-Net.
    Plain,
}

/// Rule giving the expand width `e` of an encoder module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthRule {
    /// `base_e · 2^level`: constant within a sequence.
    Level,
    /// `base_e · 2^⌊i/freq⌋` over the global encoder module index `i`.
    Index,
}

/// Decoder up-sampling operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsample {
    /// 2×2 stride-2 transposed convolution halving the channels, then ReLU.
    Deconv,
    /// Nearest-neighbour 2× up-sampling followed by a channel-halving fire
    /// module.
    NearestFire,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    pub base_e: usize,
    pub freq: usize,
    /// Squeeze ratio as printed in the training description; informational.
    pub sr_text: f64,
    /// Squeeze ratio actually used to size squeeze layers.
    pub sr_effective: f64,
    pub p3x3: f64,
    pub num_pools: usize,
    pub modules_per_encoder_sequence: usize,
    pub modules_per_decoder_sequence: usize,
    /// One rate list per encoder sequence (pyramid level).
    pub encoder_rate_schedule: Vec<Vec<usize>>,
    pub skip_mode: SkipMode,
    pub block: BlockKind,
    pub width_rule: WidthRule,
    pub upsample: Upsample,
    /// Whether the deepest level also carries a decoder sequence.
    pub bottom_decoder: bool,
    pub in_channels: usize,
    pub n_classes: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec::micro()
    }
}

impl ArchitectureSpec {
    fn reduced(variant: Variant, rates: &[usize], decoder_modules: usize) -> Self {
        ArchitectureSpec {
            variant,
            base_e: 64,
            freq: 2,
            sr_text: 0.125,
            sr_effective: 0.25,
            p3x3: 0.5,
            num_pools: 2,
            modules_per_encoder_sequence: rates.len(),
            modules_per_decoder_sequence: decoder_modules,
            encoder_rate_schedule: vec![rates.to_vec(); 3],
            skip_mode: SkipMode::Add,
            block: BlockKind::Fire,
            width_rule: WidthRule::Level,
            upsample: Upsample::Deconv,
            bottom_decoder: true,
            in_channels: 3,
            n_classes: 2,
        }
    }

    /// Two pools, three encoder sequences of four fire modules with rates
    /// (1, 1, 2, 3), three-module decoder sequences, additive skips.
    pub fn micro() -> Self {
        Self::reduced(Variant::Micro, &[1, 1, 2, 3], 3)
    }

    pub fn bm2() -> Self {
        Self::reduced(Variant::Bm2, &[1, 1, 1], 3)
    }

    pub fn bm3() -> Self {
        Self::reduced(Variant::Bm3, &[1, 2, 3], 3)
    }

    /// Four-pool U-Net with every convolution except the last replaced by a
    /// fire module.
    pub fn bm1() -> Self {
        ArchitectureSpec {
            variant: Variant::Bm1,
            num_pools: 4,
            modules_per_encoder_sequence: 2,
            modules_per_decoder_sequence: 2,
            encoder_rate_schedule: vec![vec![1, 1]; 5],
            skip_mode: SkipMode::Concat,
            width_rule: WidthRule::Index,
            bottom_decoder: false,
            ..Self::reduced(Variant::Bm1, &[1, 1], 2)
        }
    }

    /// Original U-Net: double 3×3 convolutions, four pools, concatenated skips.
    pub fn unet() -> Self {
        ArchitectureSpec {
            variant: Variant::Unet,
            block: BlockKind::Plain,
            width_rule: WidthRule::Level,
            ..Self::bm1()
        }
    }

    pub fn preset(variant: Variant) -> Self {
        match variant {
            Variant::Unet => Self::unet(),
            Variant::Bm1 => Self::bm1(),
            Variant::Bm2 => Self::bm2(),
            Variant::Bm3 => Self::bm3(),
            Variant::Micro | Variant::Custom => Self {
                variant,
                ..Self::micro()
            },
        }
    }

    pub fn levels(&self) -> usize {
        self.num_pools + 1
    }

    /// Input height/width must be a multiple of this.
    pub fn spatial_divisor(&self) -> usize {
        1 << self.num_pools
    }

    /// Expand width of encoder module `index` (global, 0-based) at `level`.
    pub fn encoder_width(&self, level: usize, index: usize) -> usize {
        match self.width_rule {
            WidthRule::Level => self.base_e << level,
            WidthRule::Index => self.base_e << (index / self.freq.max(1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.base_e == 0 {
            return bad("base_e must be positive".into());
        }
        if self.freq == 0 {
            return bad("freq must be positive".into());
        }
        if !(self.sr_effective > 0.0 && self.sr_effective <= 1.0) {
            return bad(format!("sr_effective must lie in (0, 1], got {}", self.sr_effective));
        }
        if !(0.0..=1.0).contains(&self.p3x3) {
            return bad(format!("p3x3 must lie in [0, 1], got {}", self.p3x3));
        }
        if self.modules_per_encoder_sequence == 0 {
            return bad("modules_per_encoder_sequence must be positive".into());
        }
        if self.encoder_rate_schedule.len() != self.levels() {
            return bad(format!(
                "encoder_rate_schedule has {} sequences but num_pools = {} needs {}",
                self.encoder_rate_schedule.len(),
                self.num_pools,
                self.levels()
            ));
        }
        for (k, rates) in self.encoder_rate_schedule.iter().enumerate() {
            if rates.len() != self.modules_per_encoder_sequence {
                return bad(format!(
                    "sequence {} lists {} rates but modules_per_encoder_sequence = {}",
                    k + 1,
                    rates.len(),
                    self.modules_per_encoder_sequence
                ));
            }
            if rates.contains(&0) {
                return bad(format!("sequence {} has a zero atrous rate", k + 1));
            }
        }
        if self.in_channels == 0 || self.n_classes == 0 {
            return bad("in_channels and n_classes must be positive".into());
        }
        Ok(())
    }

    /// Decoder rates at `level`: the encoder list reversed, cut to the
    /// decoder length and padded with rate 1.
    pub fn decoder_rates(&self, level: usize) -> Vec<usize> {
        let mut rates: Vec<usize> = self.encoder_rate_schedule[level].iter().rev().copied().collect();
        rates.resize(self.modules_per_decoder_sequence, 1);
        rates
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("architecture spec serializes")
    }

    /// Parses a flat config. A preset named by `variant` supplies every key
    /// the text leaves out.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub(crate) fn from_table(table: toml::Table) -> Result<Self> {
        let variant = match table.get("variant") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => return Err(Error::Config(format!("variant must be a string, got {other}"))),
            None => Variant::Custom,
        };
        let mut base = toml::Table::try_from(Self::preset(variant)).expect("preset serializes");
        for (k, v) in table {
            if !base.contains_key(&k) {
                return Err(Error::Config(format!("unknown architecture key `{k}`")));
            }
            base.insert(k, v);
        }
        let spec: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// A named variant or a path to a config file.
    pub fn resolve(arg: &str) -> Result<Self> {
        if let Ok(v) = arg.parse::<Variant>() {
            return Ok(Self::preset(v));
        }
        let path = std::path::Path::new(arg);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            return Self::from_toml(&text);
        }
        Err(Error::Config(format!(
            "unknown variant `{arg}`; expected one of unet, bm1, bm2, bm3, micro or a config file path"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for v in Variant::NAMED {
            ArchitectureSpec::preset(v).validate().unwrap();
        }
    }

    #[test]
    fn index_rule_matches_level_rule_for_two_modules_per_level() {
        let bm1 = ArchitectureSpec::bm1();
        let mut i = 0;
        for level in 0..bm1.levels() {
            for _ in 0..bm1.modules_per_encoder_sequence {
                assert_eq!(bm1.encoder_width(level, i), 64 << level);
                i += 1;
            }
        }
        assert_eq!(bm1.encoder_width(4, 9), 1024);
    }

    #[test]
    fn decoder_rates_mirror_encoder() {
        let m = ArchitectureSpec::micro();
        assert_eq!(m.decoder_rates(0), vec![3, 2, 1]);
        assert_eq!(ArchitectureSpec::bm3().decoder_rates(2), vec![3, 2, 1]);
    }

    #[test]
    fn toml_roundtrip_is_fixed_point() {
        for v in Variant::NAMED {
            let spec = ArchitectureSpec::preset(v);
            let text = spec.to_toml();
            let back = ArchitectureSpec::from_toml(&text).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn partial_config_fills_from_preset() {
        let spec = ArchitectureSpec::from_toml("variant = \"bm2\"\nskip_mode = \"concat\"\n").unwrap();
        assert_eq!(spec.skip_mode, SkipMode::Concat);
        assert_eq!(spec.encoder_rate_schedule, vec![vec![1, 1, 1]; 3]);
        assert!(ArchitectureSpec::from_toml("bogus = 1").is_err());
        assert!(ArchitectureSpec::from_toml("num_pools = 3").is_err());
        assert!(ArchitectureSpec::resolve("nope").is_err());
    }
}
