#![allow(dead_code)]

pub mod grad;

use micronet::graph::{build_architecture, ArchitectureSpec, LayerGraph, Network};
use micronet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

pub const GRAD_TOL: f64 = 1e-4;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdReport {
    /// Largest `|a - n| / max(|a|, |n|, 1e-6)` over the checked entries.
    pub worst: f64,
    pub checked: usize,
    /// Entries whose step straddles a ReLU or max-pool kink. There the
    /// estimates at `h` and `h/2` differ by at least half the observed
    /// error, while a wrong analytic gradient leaves both estimates in
    /// agreement with each other.
    pub skipped: usize,
}

impl FdReport {
    pub fn merge(self, o: FdReport) -> FdReport {
        FdReport {
            worst: self.worst.max(o.worst),
            checked: self.checked + o.checked,
            skipped: self.skipped + o.skipped,
        }
    }

    pub fn passes(&self) -> bool {
        self.worst < GRAD_TOL && self.skipped * 100 <= self.checked + self.skipped
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences of `f` at `x` with step `h`, entry by entry. Only
/// entries that would exceed `GRAD_TOL` are tested for a kink.
pub fn fd_check(mut f: impl FnMut(&Tensor<f64>) -> f64, x: &Tensor<f64>, analytic: &Tensor<f64>, h: f64) -> FdReport {
    assert_eq!(x.shape(), analytic.shape());
    let mut report = FdReport::default();
    let mut probe = x.clone();
    let mut diff = |probe: &mut Tensor<f64>, i: usize, step: f64| {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(probe);
        probe.data_mut()[i] = orig - step;
        let down = f(probe);
        probe.data_mut()[i] = orig;
        (up - down) / (2.0 * step)
    };
    for i in 0..x.len() {
        let numeric = diff(&mut probe, i, h);
        let a = analytic.data()[i];
        let err = rel(a, numeric);
        if err >= GRAD_TOL && rel(numeric, diff(&mut probe, i, h / 2.0)) > err / 2.0 {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        report.worst = report.worst.max(err);
    }
    report
}

/// `<w, t>`: projects an output onto fixed random weights to get a scalar.
pub fn dot(w: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    w.data().iter().zip(t.data()).map(|(a, b)| a * b).sum()
}

/// A two-pool fire network small enough for exhaustive finite differences.
pub fn tiny_spec() -> ArchitectureSpec {
    ArchitectureSpec::from_toml(
        r#"
variant = "custom"
base_e = 8
modules_per_encoder_sequence = 2
modules_per_decoder_sequence = 1
encoder_rate_schedule = [[1, 2], [1, 2], [1, 1]]
"#,
    )
    .unwrap()
}

pub fn tiny_graph() -> LayerGraph {
    build_architecture(&tiny_spec()).unwrap()
}

/// Hand-set MICRO weights that classify any pixel by the sign of red minus
/// green: every squeeze and 1×1 expand passes channels 0 and 1 through, the
/// first squeeze computes `R - G` and `G - R`, deconvolutions are zero so only
/// the full-resolution skip reaches the classifier.
pub fn chroma_oracle() -> Network<f32> {
    let graph = build_architecture(&ArchitectureSpec::micro()).unwrap();
    let params = graph
        .params()
        .iter()
        .map(|p| {
            let mut t = Tensor::<f32>::zeros(p.shape);
            let s = p.shape;
            if p.name.ends_with(".squeeze") && s.c() == 3 {
                t.set(0, 0, 0, 0, 1.0);
                t.set(0, 1, 0, 0, -1.0);
                t.set(1, 0, 0, 0, -1.0);
                t.set(1, 1, 0, 0, 1.0);
            } else if p.name.ends_with(".squeeze") || p.name.ends_with(".expand1x1") {
                t.set(0, 0, 0, 0, 1.0);
                t.set(1, 1, 0, 0, 1.0);
            } else if p.name == "final.conv" {
                t.set(1, 0, 0, 0, 1.0);
                t.set(0, 1, 0, 0, 1.0);
            }
            t
        })
        .collect();
    Network::from_params(graph, params).unwrap()
}
