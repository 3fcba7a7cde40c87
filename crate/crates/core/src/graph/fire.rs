use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::ConvParams;
use crate::tensor::Shape;

/// Filter counts of one fire module: a 1×1 squeeze followed by parallel 1×1
/// and dilated 3×3 expand branches whose outputs are concatenated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FireModuleSpec {
    pub in_channels: usize,
    pub s1x1: usize,
    pub e1x1: usize,
    pub e3x3: usize,
    pub rate: usize,
}

impl FireModuleSpec {
    /// Derives filter counts from the expand width `e`:
    /// `e3x3 = round(p3x3·e)`, `e1x1 = e - e3x3`, `s1x1 = round(sr·e)`.
    pub fn from_ratios(in_channels: usize, e: usize, sr: f64, p3x3: f64, rate: usize) -> Self {
        let e3x3 = (p3x3 * e as f64).round() as usize;
        FireModuleSpec {
            in_channels,
            s1x1: (sr * e as f64).round() as usize,
            e1x1: e.saturating_sub(e3x3),
            e3x3,
            rate,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.e1x1 + self.e3x3
    }

    /// `in·s + s·e1 + 9·s·e3`; there are no biases.
    pub fn param_count(&self) -> usize {
        self.in_channels * self.s1x1 + self.s1x1 * self.e1x1 + 9 * self.s1x1 * self.e3x3
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("in_channels", self.in_channels),
            ("s1x1", self.s1x1),
            ("e1x1", self.e1x1),
            ("e3x3", self.e3x3),
            ("rate", self.rate),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Parameter(format!("fire module {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One bias-free convolution inside a layer stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    /// `(C_out, C_in, k, k)`.
    pub kernel: Shape,
    pub params: ConvParams,
    pub relu: bool,
}

impl ConvLayer {
    pub fn param_count(&self) -> usize {
        self.kernel.len()
    }

    pub fn fan_in(&self) -> usize {
        self.kernel.c() * self.kernel.h() * self.kernel.w()
    }
}

/// The three convolutions of a fire module, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FireLayers {
    pub squeeze: ConvLayer,
    pub expand1x1: ConvLayer,
    pub expand3x3: ConvLayer,
}

impl FireLayers {
    pub fn param_count(&self) -> usize {
        self.squeeze.param_count() + self.expand1x1.param_count() + self.expand3x3.param_count()
    }
}

pub fn build_fire_module(spec: &FireModuleSpec) -> Result<FireLayers> {
    spec.validate()?;
    let s = spec.s1x1;
    Ok(FireLayers {
        squeeze: ConvLayer {
            kernel: Shape::new(s, spec.in_channels, 1, 1),
            params: ConvParams::same(1),
            relu: true,
        },
        expand1x1: ConvLayer {
            kernel: Shape::new(spec.e1x1, s, 1, 1),
            params: ConvParams::same(1),
            relu: true,
        },
        expand3x3: ConvLayer {
            kernel: Shape::new(spec.e3x3, s, 3, 3),
            params: ConvParams::same(spec.rate),
            relu: true,
        },
    })
}
