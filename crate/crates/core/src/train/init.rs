use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{LayerGraph, Network};
use crate::tensor::{Element, Shape, Tensor};

/// Zero-mean Gaussian with variance `2 / fan_in`.
pub fn he_init<T: Element>(shape: Shape, fan_in: usize, rng: &mut impl Rng) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::Parameter("he_init needs a positive fan-in".into()));
    }
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    Tensor::new(shape, (0..shape.len()).map(|_| T::lit(normal.sample(rng))).collect())
}

/// Independent stream for one subsystem (`"init"`, `"shuffle"`, ...) of a
/// run rooted at `seed`.
pub fn derive_seed(seed: u64, subsystem: &str) -> u64 {
    // FNV-1a over the name, folded into the root with a splitmix64 finaliser.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in subsystem.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// He-initialised parameters for every kernel of the graph, in order.
pub fn init_network<T: Element>(graph: LayerGraph, seed: u64) -> Result<Network<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = graph
        .params()
        .iter()
        .map(|p| he_init(p.shape, p.fan_in, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Network::from_params(graph, params)
}
