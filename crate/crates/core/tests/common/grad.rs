//! Finite-difference checks shared by the gradient and acceptance suites.

use micronet::data::LabelMap;
use micronet::graph::{GradWrt, Network};
use micronet::ops::{self, ConvParams};
use micronet::train::{cross_entropy_loss, init_network, one_hot};
use micronet::{Shape, Tensor};
use rand::Rng;

use super::{dot, fd_check, random, rng, tiny_graph, FdReport};

pub const H: f64 = 1e-5;
pub const SEEDS: [u64; 5] = [11, 23, 37, 41, 53];

/// One named check merged over all seeds.
pub struct Check {
    pub name: String,
    pub report: FdReport,
}

fn conv_case(seed: u64, input: Shape, kernel: Shape, p: ConvParams) -> FdReport {
    let mut r = rng(seed);
    let x = random(input, &mut r);
    let k = random(kernel, &mut r);
    let out = ops::conv2d(&x, &k, &p).unwrap();
    let w = random(out.shape(), &mut r);
    let (gx, gk) = ops::conv2d_backward(&x, &k, &p, &w).unwrap();
    let ex = fd_check(|x| dot(&w, &ops::conv2d(x, &k, &p).unwrap()), &x, &gx, H);
    let ek = fd_check(|k| dot(&w, &ops::conv2d(&x, k, &p).unwrap()), &k, &gk, H);
    ex.merge(ek)
}

type SeededCheck = Box<dyn Fn(u64) -> FdReport>;

fn primitive_checks() -> Vec<(&'static str, SeededCheck)> {
    vec![
        (
            "conv2d 1x1",
            Box::new(|s| conv_case(s, Shape::new(2, 4, 6, 6), Shape::new(3, 4, 1, 1), ConvParams::same(1))),
        ),
        (
            "conv2d 3x3 rate 1",
            Box::new(|s| conv_case(s, Shape::new(2, 3, 8, 8), Shape::new(4, 3, 3, 3), ConvParams::same(1))),
        ),
        (
            "conv2d 3x3 rate 2",
            Box::new(|s| conv_case(s, Shape::new(2, 3, 8, 8), Shape::new(2, 3, 3, 3), ConvParams::same(2))),
        ),
        (
            "conv2d 3x3 rate 3",
            Box::new(|s| conv_case(s, Shape::new(1, 4, 8, 7), Shape::new(2, 4, 3, 3), ConvParams::same(3))),
        ),
        (
            "conv2d 2x2 stride 2 valid",
            Box::new(|s| {
                conv_case(s, Shape::new(2, 3, 8, 8), Shape::new(2, 3, 2, 2), ConvParams::valid_strided(2))
            }),
        ),
        (
            "conv_transpose2d",
            Box::new(|s| {
                let mut r = rng(s);
                let x = random(Shape::new(2, 4, 4, 4), &mut r);
                let k = random(Shape::new(4, 3, 2, 2), &mut r);
                let w = random(Shape::new(2, 3, 8, 8), &mut r);
                let (gx, gk) = ops::conv_transpose2d_backward(&x, &k, &w).unwrap();
                let ex = fd_check(|x| dot(&w, &ops::conv_transpose2d(x, &k).unwrap()), &x, &gx, H);
                let ek = fd_check(|k| dot(&w, &ops::conv_transpose2d(&x, k).unwrap()), &k, &gk, H);
                ex.merge(ek)
            }),
        ),
        (
            "maxpool2d",
            Box::new(|s| {
                let mut r = rng(s);
                let x = random(Shape::new(2, 4, 8, 8), &mut r);
                let (y, idx) = ops::maxpool2d(&x).unwrap();
                let w = random(y.shape(), &mut r);
                let g = ops::maxpool2d_backward(&idx, &w).unwrap();
                fd_check(|x| dot(&w, &ops::maxpool2d(x).unwrap().0), &x, &g, H)
            }),
        ),
        (
            "upsample_nearest2x",
            Box::new(|s| {
                let mut r = rng(s);
                let x = random(Shape::new(2, 3, 4, 4), &mut r);
                let w = random(Shape::new(2, 3, 8, 8), &mut r);
                let g = ops::upsample_nearest2x_backward(&w).unwrap();
                fd_check(|x| dot(&w, &ops::upsample_nearest2x(x)), &x, &g, H)
            }),
        ),
        (
            "relu",
            Box::new(|s| {
                let mut r = rng(s);
                let x = random(Shape::new(2, 4, 8, 8), &mut r);
                let w = random(x.shape(), &mut r);
                let g = ops::relu_backward(&x, &w).unwrap();
                fd_check(|x| dot(&w, &ops::relu(x)), &x, &g, H)
            }),
        ),
        (
            "softmax_channels",
            Box::new(|s| {
                let mut r = rng(s);
                let x = random(Shape::new(2, 4, 8, 8), &mut r).map(|v| 3.0 * v);
                let w = random(x.shape(), &mut r);
                let g = ops::softmax_channels_backward(&ops::softmax_channels(&x), &w).unwrap();
                fd_check(|x| dot(&w, &ops::softmax_channels(x)), &x, &g, H)
            }),
        ),
        (
            "add_elementwise",
            Box::new(|s| {
                let mut r = rng(s);
                let a = random(Shape::new(2, 4, 4, 4), &mut r);
                let b = random(a.shape(), &mut r);
                let w = random(a.shape(), &mut r);
                let ea = fd_check(|a| dot(&w, &ops::add_elementwise(a, &b).unwrap()), &a, &w, H);
                let eb = fd_check(|b| dot(&w, &ops::add_elementwise(&a, b).unwrap()), &b, &w, H);
                ea.merge(eb)
            }),
        ),
        (
            "concat_channels",
            Box::new(|s| {
                let mut r = rng(s);
                let a = random(Shape::new(2, 3, 4, 4), &mut r);
                let b = random(Shape::new(2, 2, 4, 4), &mut r);
                let w = random(Shape::new(2, 5, 4, 4), &mut r);
                let (ga, gb) = ops::concat_channels_backward(&w, 3).unwrap();
                let ea = fd_check(|a| dot(&w, &ops::concat_channels(a, &b).unwrap()), &a, &ga, H);
                let eb = fd_check(|b| dot(&w, &ops::concat_channels(&a, b).unwrap()), &b, &gb, H);
                ea.merge(eb)
            }),
        ),
        (
            "cross_entropy_loss",
            Box::new(|s| {
                let mut r = rng(s);
                let z = random(Shape::new(2, 3, 4, 4), &mut r).map(|v| 2.0 * v);
                let maps: Vec<LabelMap> = (0..2)
                    .map(|_| LabelMap::new(4, 4, (0..16).map(|_| r.random_range(0..3u8)).collect()).unwrap())
                    .collect();
                let y: Tensor<f64> = one_hot(&maps.iter().collect::<Vec<_>>(), 3).unwrap();
                let (_, g) = cross_entropy_loss(&ops::softmax_channels(&z), &y).unwrap();
                fd_check(|z| cross_entropy_loss(&ops::softmax_channels(z), &y).unwrap().0, &z, &g, H)
            }),
        ),
    ]
}

/// Every parameter of the tiny fire network against the batch loss.
fn end_to_end(seed: u64) -> FdReport {
    let mut net: Network<f64> = init_network(tiny_graph(), seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let x = random(Shape::new(2, 3, 8, 8), &mut r);
    let maps: Vec<LabelMap> = (0..2)
        .map(|_| LabelMap::new(8, 8, (0..64).map(|_| r.random_range(0..2u8)).collect()).unwrap())
        .collect();
    let y: Tensor<f64> = one_hot(&maps.iter().collect::<Vec<_>>(), 2).unwrap();
    let cache = net.forward_train(&x).unwrap();
    let (_, g) = cross_entropy_loss(cache.probs(), &y).unwrap();
    let grads = net.backward(&cache, &g, GradWrt::Logits).unwrap();
    let mut total = FdReport::default();
    for (i, analytic) in grads.iter().enumerate() {
        let original = net.params()[i].clone();
        let err = {
            let net_ref = std::cell::RefCell::new(&mut net);
            fd_check(
                |p| {
                    let mut n = net_ref.borrow_mut();
                    n.params_mut()[i] = p.clone();
                    cross_entropy_loss(&n.forward(&x).unwrap(), &y).unwrap().0
                },
                &original,
                analytic,
                H,
            )
        };
        net.params_mut()[i] = original;
        total = total.merge(err);
    }
    // The probability-space path through the softmax backward as well.
    let w = random(cache.probs().shape(), &mut r);
    let gp = net.backward(&cache, &w, GradWrt::Probs).unwrap();
    let first = net.params()[0].clone();
    let e = {
        let net_ref = std::cell::RefCell::new(&mut net);
        fd_check(
            |p| {
                let mut n = net_ref.borrow_mut();
                n.params_mut()[0] = p.clone();
                dot(&w, &n.forward(&x).unwrap())
            },
            &first,
            &gp[0],
            H,
        )
    };
    total.merge(e)
}

pub fn run_all() -> Vec<Check> {
    let mut out: Vec<Check> = primitive_checks()
        .into_iter()
        .map(|(name, f)| Check {
            name: name.to_string(),
            report: SEEDS.iter().map(|&s| f(s)).fold(FdReport::default(), FdReport::merge),
        })
        .collect();
    out.push(Check {
        name: "end-to-end tiny fire network".into(),
        report: SEEDS.iter().map(|&s| end_to_end(s)).fold(FdReport::default(), FdReport::merge),
    });
    out
}

/// `conv_transpose2d` against the input gradient of the stride-2 convolution
/// it is the adjoint of.
pub fn adjoint_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random(Shape::new(2, 4, 4, 4), &mut r);
    let k = random(Shape::new(4, 3, 2, 2), &mut r);
    let z = random(Shape::new(2, 3, 8, 8), &mut r);
    let up = ops::conv_transpose2d(&x, &k).unwrap();
    let (gz, _) = ops::conv2d_backward(&z, &k, &ConvParams::valid_strided(2), &x).unwrap();
    up.data()
        .iter()
        .zip(gz.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
