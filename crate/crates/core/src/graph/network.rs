//! Executes a [`LayerGraph`] with concrete parameters.

use crate::error::{Error, Result};
use crate::ops::{self, PoolIndices};
use crate::tensor::{Element, Tensor};

use super::arch::SkipMode;
use super::fire::ConvLayer;
use super::layer::{FireNode, LayerGraph, Node};

/// A layer graph plus one kernel tensor per [`ParamSpec`](super::ParamSpec).
#[derive(Clone, Debug)]
pub struct Network<T> {
    graph: LayerGraph,
    params: Vec<Tensor<T>>,
}

/// Activations saved by [`Network::forward_train`] for the backward pass.
#[derive(Debug)]
pub struct ForwardCache<T> {
    nodes: Vec<NodeCache<T>>,
    probs: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn probs(&self) -> &Tensor<T> {
        &self.probs
    }
}

#[derive(Debug)]
enum NodeCache<T> {
    Fire { x: Tensor<T>, s: Tensor<T>, y: Tensor<T> },
    Conv { x: Tensor<T>, y: Tensor<T> },
    Pool(PoolIndices),
    Deconv { x: Tensor<T>, y: Tensor<T> },
    Upsample,
    Save,
    Join { skip_channels: usize },
    Classifier { x: Tensor<T> },
    Softmax,
}

/// What the seed gradient of [`Network::backward`] is taken with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradWrt {
    /// Pre-softmax classifier output.
    Logits,
    /// Softmax probabilities.
    Probs,
}

fn relu_in_place<T: Element>(t: &mut Tensor<T>) {
    for x in t.data_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn conv_relu<T: Element>(x: &Tensor<T>, kernel: &Tensor<T>, layer: &ConvLayer) -> Result<Tensor<T>> {
    let mut y = ops::conv2d(x, kernel, &layer.params)?;
    if layer.relu {
        relu_in_place(&mut y);
    }
    Ok(y)
}

impl<T: Element> Network<T> {
    /// All-zero parameters.
    pub fn zeros(graph: LayerGraph) -> Self {
        let params = graph.params().iter().map(|p| Tensor::zeros(p.shape)).collect();
        Network { graph, params }
    }

    pub fn from_params(graph: LayerGraph, params: Vec<Tensor<T>>) -> Result<Self> {
        if params.len() != graph.params().len() {
            return Err(Error::Validation(format!(
                "graph has {} parameter tensors, got {}",
                graph.params().len(),
                params.len()
            )));
        }
        for (spec, t) in graph.params().iter().zip(&params) {
            if spec.shape != t.shape() {
                return Err(Error::Validation(format!(
                    "parameter {} expects shape {}, got {}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )));
            }
        }
        Ok(Network { graph, params })
    }

    pub fn graph(&self) -> &LayerGraph {
        &self.graph
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor<T>> {
        self.params
    }

    /// Parameter tensor by name.
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        let i = self.graph.params().iter().position(|p| p.name == name)?;
        Some(&self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.graph.params().iter().position(|p| p.name == name)?;
        Some(&mut self.params[i])
    }

    pub fn count_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Per-pixel class probabilities, `(N, n_classes, H, W)`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(input, None)
    }

    pub fn forward_train(&self, input: &Tensor<T>) -> Result<ForwardCache<T>> {
        let mut nodes = Vec::with_capacity(self.graph.nodes().len());
        let probs = self.run(input, Some(&mut nodes))?;
        Ok(ForwardCache { nodes, probs })
    }

    fn fire_forward(&self, node: &FireNode, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let [ps, p1, p3] = node.params;
        let l = &node.layers;
        let s = conv_relu(x, &self.params[ps], &l.squeeze)?;
        let a = conv_relu(&s, &self.params[p1], &l.expand1x1)?;
        let b = conv_relu(&s, &self.params[p3], &l.expand3x3)?;
        Ok((s, ops::concat_channels(&a, &b)?))
    }

    fn run(&self, input: &Tensor<T>, mut cache: Option<&mut Vec<NodeCache<T>>>) -> Result<Tensor<T>> {
        self.graph.check_input(input.shape())?;
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; self.graph.spec().levels()];
        let mut cur = input.clone();
        for node in self.graph.nodes() {
            let keep = cache.is_some();
            let (next, saved) = match node {
                Node::Fire(f) => {
                    let (s, y) = self.fire_forward(f, &cur)?;
                    let saved = keep.then(|| NodeCache::Fire { x: cur, s, y: y.clone() });
                    (y, saved)
                }
                Node::Conv(c) => {
                    let y = conv_relu(&cur, &self.params[c.param], &c.layer)?;
                    let saved = keep.then(|| NodeCache::Conv { x: cur, y: y.clone() });
                    (y, saved)
                }
                Node::Pool { .. } => {
                    let (y, idx) = ops::maxpool2d(&cur)?;
                    (y, keep.then_some(NodeCache::Pool(idx)))
                }
                Node::Deconv { param, .. } => {
                    let mut y = ops::conv_transpose2d(&cur, &self.params[*param])?;
                    relu_in_place(&mut y);
                    let saved = keep.then(|| NodeCache::Deconv { x: cur, y: y.clone() });
                    (y, saved)
                }
                Node::Upsample { .. } => (ops::upsample_nearest2x(&cur), keep.then_some(NodeCache::Upsample)),
                Node::Save { slot } => {
                    slots[*slot] = Some(cur.clone());
                    (cur, keep.then_some(NodeCache::Save))
                }
                Node::Join { slot, mode, .. } => {
                    let skip = slots[*slot].take().expect("join follows its save");
                    let skip_channels = skip.shape().c();
                    let y = match mode {
                        SkipMode::Add => ops::add_elementwise(&cur, &skip)?,
                        SkipMode::Concat => ops::concat_channels(&skip, &cur)?,
                    };
                    (y, keep.then_some(NodeCache::Join { skip_channels }))
                }
                Node::Classifier { layer, param } => {
                    let y = conv_relu(&cur, &self.params[*param], layer)?;
                    (y, keep.then_some(NodeCache::Classifier { x: cur }))
                }
                Node::Softmax => (ops::softmax_channels(&cur), keep.then_some(NodeCache::Softmax)),
            };
            if let (Some(c), Some(s)) = (cache.as_deref_mut(), saved) {
                c.push(s);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Parameter gradients, aligned with [`Network::params`], given the
    /// gradient of a scalar loss with respect to the output selected by `wrt`.
    pub fn backward(&self, cache: &ForwardCache<T>, seed: &Tensor<T>, wrt: GradWrt) -> Result<Vec<Tensor<T>>> {
        let mut grads: Vec<Tensor<T>> = self.graph.params().iter().map(|p| Tensor::zeros(p.shape)).collect();
        let mut slot_grads: Vec<Option<Tensor<T>>> = vec![None; self.graph.spec().levels()];
        let nodes = self.graph.nodes();
        let mut g = seed.clone();
        for (node, saved) in nodes.iter().zip(&cache.nodes).rev() {
            g = match (node, saved) {
                (Node::Softmax, NodeCache::Softmax) => match wrt {
                    GradWrt::Logits => g,
                    GradWrt::Probs => ops::softmax_channels_backward(&cache.probs, &g)?,
                },
                (Node::Classifier { layer, param }, NodeCache::Classifier { x }) => {
                    let (gx, gk) = ops::conv2d_backward(x, &self.params[*param], &layer.params, &g)?;
                    grads[*param] = gk;
                    gx
                }
                (Node::Fire(f), NodeCache::Fire { x, s, y }) => self.fire_backward(f, x, s, y, &g, &mut grads)?,
                (Node::Conv(c), NodeCache::Conv { x, y }) => {
                    let gy = ops::relu_backward(y, &g)?;
                    let (gx, gk) = ops::conv2d_backward(x, &self.params[c.param], &c.layer.params, &gy)?;
                    grads[c.param] = gk;
                    gx
                }
                (Node::Pool { .. }, NodeCache::Pool(idx)) => ops::maxpool2d_backward(idx, &g)?,
                (Node::Deconv { param, .. }, NodeCache::Deconv { x, y }) => {
                    let gy = ops::relu_backward(y, &g)?;
                    let (gx, gk) = ops::conv_transpose2d_backward(x, &self.params[*param], &gy)?;
                    grads[*param] = gk;
                    gx
                }
                (Node::Upsample { .. }, NodeCache::Upsample) => ops::upsample_nearest2x_backward(&g)?,
                (Node::Save { slot }, NodeCache::Save) => {
                    let mut g = g;
                    if let Some(extra) = slot_grads[*slot].take() {
                        g.add_assign(&extra)?;
                    }
                    g
                }
                (Node::Join { slot, mode, .. }, NodeCache::Join { skip_channels }) => match mode {
                    SkipMode::Add => {
                        slot_grads[*slot] = Some(g.clone());
                        g
                    }
                    SkipMode::Concat => {
                        let (g_skip, g_cur) = ops::concat_channels_backward(&g, *skip_channels)?;
                        slot_grads[*slot] = Some(g_skip);
                        g_cur
                    }
                },
                _ => unreachable!("cache out of sync with graph"),
            };
        }
        Ok(grads)
    }

    fn fire_backward(
        &self,
        node: &FireNode,
        x: &Tensor<T>,
        s: &Tensor<T>,
        y: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Tensor<T>],
    ) -> Result<Tensor<T>> {
        let [ps, p1, p3] = node.params;
        let l = &node.layers;
        // Masking the concatenated output equals masking each branch.
        let gy = ops::relu_backward(y, g)?;
        let (ga, gb) = ops::concat_channels_backward(&gy, node.spec.e1x1)?;
        let (mut gs, gk1) = ops::conv2d_backward(s, &self.params[p1], &l.expand1x1.params, &ga)?;
        let (gs3, gk3) = ops::conv2d_backward(s, &self.params[p3], &l.expand3x3.params, &gb)?;
        gs.add_assign(&gs3)?;
        let gs = ops::relu_backward(s, &gs)?;
        let (gx, gks) = ops::conv2d_backward(x, &self.params[ps], &l.squeeze.params, &gs)?;
        grads[ps] = gks;
        grads[p1] = gk1;
        grads[p3] = gk3;
        Ok(gx)
    }
}
