//! Declarative layer graphs generated from an [`ArchitectureSpec`].

use crate::error::{Error, Result};
use crate::ops::ConvParams;
use crate::tensor::Shape;

use super::arch::{ArchitectureSpec, BlockKind, SkipMode, Upsample};
use super::fire::{build_fire_module, ConvLayer, FireLayers, FireModuleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Encoder,
    Decoder,
    /// Channel-halving fire module following nearest-neighbour up-sampling.
    Upsampler,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FireNode {
    pub spec: FireModuleSpec,
    pub layers: FireLayers,
    pub role: Role,
    /// 1-based label; decoder modules count down to mirror the encoder.
    pub number: usize,
    /// Parameter indices of squeeze, expand 1×1 and expand 3×3 kernels.
    pub params: [usize; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvNode {
    pub layer: ConvLayer,
    pub role: Role,
    pub number: usize,
    pub param: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Fire(FireNode),
    /// Plain convolution followed by ReLU.
    Conv(ConvNode),
    Pool { number: usize },
    /// 2×2 stride-2 transposed convolution followed by ReLU.
    Deconv {
        number: usize,
        in_channels: usize,
        out_channels: usize,
        param: usize,
    },
    Upsample { number: usize },
    /// Stores the current activation for a later [`Node::Join`].
    Save { slot: usize },
    Join { slot: usize, mode: SkipMode, number: usize },
    /// Final 1×1 convolution to class logits, no activation.
    Classifier { layer: ConvLayer, param: usize },
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub fan_in: usize,
}

/// A bypass connection from the end of encoder sequence `level` to the start
/// of its decoder counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkipEdge {
    pub level: usize,
    pub mode: SkipMode,
    pub encoder_channels: usize,
    pub decoder_channels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGraph {
    spec: ArchitectureSpec,
    nodes: Vec<Node>,
    params: Vec<ParamSpec>,
    skips: Vec<SkipEdge>,
}

impl LayerGraph {
    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn skips(&self) -> &[SkipEdge] {
        &self.skips
    }

    pub fn in_channels(&self) -> usize {
        self.spec.in_channels
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    /// Exact number of trainable scalars.
    pub fn count_params(&self) -> usize {
        self.params.iter().map(|p| p.shape.len()).sum()
    }

    /// Fails before any compute when `(h, w)` cannot pass through every pool.
    pub fn check_input(&self, shape: Shape) -> Result<()> {
        use crate::error::Axis;
        if shape.c() != self.in_channels() {
            return Err(Error::dim("forward", Axis::Channels, self.in_channels(), shape.c()));
        }
        let d = self.spec.spatial_divisor();
        if !shape.h().is_multiple_of(d) || shape.h() == 0 {
            return Err(Error::Indivisible { op: "forward", axis: Axis::Height, size: shape.h(), divisor: d });
        }
        if !shape.w().is_multiple_of(d) || shape.w() == 0 {
            return Err(Error::Indivisible { op: "forward", axis: Axis::Width, size: shape.w(), divisor: d });
        }
        Ok(())
    }
}

struct Builder<'a> {
    spec: &'a ArchitectureSpec,
    nodes: Vec<Node>,
    params: Vec<ParamSpec>,
    channels: usize,
}

impl Builder<'_> {
    fn param(&mut self, name: String, shape: Shape, fan_in: usize) -> usize {
        self.params.push(ParamSpec { name, shape, fan_in });
        self.params.len() - 1
    }

    fn fire(&mut self, e: usize, rate: usize, role: Role, number: usize, prefix: &str) -> Result<()> {
        let spec = FireModuleSpec::from_ratios(self.channels, e, self.spec.sr_effective, self.spec.p3x3, rate);
        let layers = build_fire_module(&spec)?;
        let name = format!("{prefix}{number}");
        let params = [
            self.param(format!("{name}.squeeze"), layers.squeeze.kernel, layers.squeeze.fan_in()),
            self.param(format!("{name}.expand1x1"), layers.expand1x1.kernel, layers.expand1x1.fan_in()),
            self.param(format!("{name}.expand3x3"), layers.expand3x3.kernel, layers.expand3x3.fan_in()),
        ];
        self.channels = spec.out_channels();
        self.nodes.push(Node::Fire(FireNode {
            spec,
            layers,
            role,
            number,
            params,
        }));
        Ok(())
    }

    fn plain(&mut self, e: usize, rate: usize, role: Role, number: usize, prefix: &str) {
        let layer = ConvLayer {
            kernel: Shape::new(e, self.channels, 3, 3),
            params: ConvParams::same(rate),
            relu: true,
        };
        let param = self.param(format!("{prefix}{number}"), layer.kernel, layer.fan_in());
        self.channels = e;
        self.nodes.push(Node::Conv(ConvNode {
            layer,
            role,
            number,
            param,
        }));
    }

    fn block(&mut self, e: usize, rate: usize, role: Role, number: usize) -> Result<()> {
        let (fire_prefix, conv_prefix) = match role {
            Role::Encoder => ("enc.fm", "enc.conv"),
            Role::Decoder => ("dec.dfm", "dec.conv"),
            Role::Upsampler => ("up.ufm", "up.conv"),
        };
        match self.spec.block {
            BlockKind::Fire => self.fire(e, rate, role, number, fire_prefix),
            BlockKind::Plain => {
                self.plain(e, rate, role, number, conv_prefix);
                Ok(())
            }
        }
    }
}

/// Builds the layer graph for `spec`.
pub fn build_architecture(spec: &ArchitectureSpec) -> Result<LayerGraph> {
    spec.validate()?;
    let levels = spec.levels();
    let mut b = Builder {
        spec,
        nodes: Vec::new(),
        params: Vec::new(),
        channels: spec.in_channels,
    };

    let mut widths: Vec<Vec<usize>> = Vec::with_capacity(levels);
    let mut encoder_out = Vec::with_capacity(levels);
    let mut index = 0;
    for level in 0..levels {
        let mut level_widths = Vec::new();
        for &rate in &spec.encoder_rate_schedule[level] {
            let e = spec.encoder_width(level, index);
            index += 1;
            b.block(e, rate, Role::Encoder, index)?;
            level_widths.push(e);
        }
        widths.push(level_widths);
        encoder_out.push(b.channels);
        if level + 1 < levels {
            b.nodes.push(Node::Save { slot: level });
            b.nodes.push(Node::Pool { number: level + 1 });
        }
    }

    let decoder_count = spec.modules_per_decoder_sequence * (levels - usize::from(!spec.bottom_decoder));
    let mut dec_number = decoder_count;
    let mut up_number = 0;
    let mut skips = Vec::new();
    for level in (0..levels).rev() {
        if level + 1 < levels {
            up_number += 1;
            let half = b.channels / 2;
            if half == 0 {
                return Err(Error::Graph {
                    edge: format!("up-sampling {up_number}"),
                    detail: format!("cannot halve {} channels", b.channels),
                });
            }
            match spec.upsample {
                Upsample::Deconv => {
                    let shape = Shape::new(b.channels, half, 2, 2);
                    let param = b.param(format!("dec{up_number}.deconv"), shape, b.channels);
                    b.nodes.push(Node::Deconv {
                        number: up_number,
                        in_channels: b.channels,
                        out_channels: half,
                        param,
                    });
                    b.channels = half;
                }
                Upsample::NearestFire => {
                    b.nodes.push(Node::Upsample { number: up_number });
                    b.block(half, 1, Role::Upsampler, up_number)?;
                }
            }
            let edge = SkipEdge {
                level,
                mode: spec.skip_mode,
                encoder_channels: encoder_out[level],
                decoder_channels: b.channels,
            };
            b.channels = match spec.skip_mode {
                SkipMode::Add => {
                    if edge.encoder_channels != edge.decoder_channels {
                        return Err(Error::Graph {
                            edge: format!("skip {} (encoder level {level} -> decoder level {level})", level + 1),
                            detail: format!(
                                "add needs equal channels, encoder has {} and decoder has {}",
                                edge.encoder_channels, edge.decoder_channels
                            ),
                        });
                    }
                    edge.decoder_channels
                }
                SkipMode::Concat => edge.encoder_channels + edge.decoder_channels,
            };
            b.nodes.push(Node::Join {
                slot: level,
                mode: spec.skip_mode,
                number: up_number,
            });
            skips.push(edge);
        } else if !spec.bottom_decoder {
            continue;
        }

        let mut mirrored: Vec<usize> = widths[level].iter().rev().copied().collect();
        let last = *mirrored.last().expect("non-empty sequence");
        mirrored.resize(spec.modules_per_decoder_sequence, last);
        for (e, rate) in mirrored.into_iter().zip(spec.decoder_rates(level)) {
            b.block(e, rate, Role::Decoder, dec_number)?;
            dec_number -= 1;
        }
    }

    let layer = ConvLayer {
        kernel: Shape::new(spec.n_classes, b.channels, 1, 1),
        params: ConvParams::same(1),
        relu: false,
    };
    let param = b.param("final.conv".into(), layer.kernel, layer.fan_in());
    b.nodes.push(Node::Classifier { layer, param });
    b.nodes.push(Node::Softmax);

    Ok(LayerGraph {
        spec: spec.clone(),
        nodes: b.nodes,
        params: b.params,
        skips,
    })
}

/// Total trainable parameters of `graph`.
pub fn count_params(graph: &LayerGraph) -> usize {
    graph.count_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(spec: ArchitectureSpec) -> usize {
        build_architecture(&spec).unwrap().count_params()
    }

    #[test]
    fn reduced_family_totals() {
        assert_eq!(count(ArchitectureSpec::micro()), 1_055_920);
        assert_eq!(count(ArchitectureSpec::bm2()), 926_896);
        assert_eq!(count(ArchitectureSpec::bm3()), 926_896);
    }

    #[test]
    fn unet_total() {
        // Sum of the canonical double-3×3 U-Net layers without biases.
        assert_eq!(count(ArchitectureSpec::unet()), 31_024_960);
    }

    #[test]
    fn classifier_is_last_then_softmax() {
        let g = build_architecture(&ArchitectureSpec::micro()).unwrap();
        let n = g.nodes().len();
        assert_eq!(g.nodes()[n - 1], Node::Softmax);
        match &g.nodes()[n - 2] {
            Node::Classifier { layer, .. } => {
                assert_eq!(layer.kernel, Shape::new(2, 64, 1, 1));
                assert_eq!(layer.param_count(), 128);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn micro_has_two_additive_skips() {
        let g = build_architecture(&ArchitectureSpec::micro()).unwrap();
        assert_eq!(g.skips().len(), 2);
        for s in g.skips() {
            assert_eq!(s.mode, SkipMode::Add);
            assert_eq!(s.encoder_channels, s.decoder_channels);
        }
        let fires = g.nodes().iter().filter(|n| matches!(n, Node::Fire(_))).count();
        assert_eq!(fires, 12 + 9);
    }

    #[test]
    fn concat_skips_sum_channels() {
        let g = build_architecture(&ArchitectureSpec::unet()).unwrap();
        assert_eq!(g.skips().len(), 4);
        let bm2_concat = ArchitectureSpec {
            skip_mode: SkipMode::Concat,
            ..ArchitectureSpec::bm2()
        };
        // concat widens the first decoder module at levels 1 and 0.
        assert_eq!(count(bm2_concat), 926_896 + 4096 + 1024);
    }

    #[test]
    fn add_skip_with_mismatched_widths_names_edge() {
        let spec = ArchitectureSpec {
            width_rule: super::super::arch::WidthRule::Index,
            freq: 1,
            ..ArchitectureSpec::micro()
        };
        match build_architecture(&spec) {
            Err(Error::Graph { edge, .. }) => assert!(edge.contains("skip"), "{edge}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn input_divisibility_checked() {
        let g = build_architecture(&ArchitectureSpec::micro()).unwrap();
        assert!(g.check_input(Shape::new(1, 3, 500, 500)).is_ok());
        assert!(matches!(
            g.check_input(Shape::new(1, 3, 62, 64)),
            Err(Error::Indivisible { divisor: 4, .. })
        ));
        assert!(g.check_input(Shape::new(1, 1, 64, 64)).is_err());
    }
}
