use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// One velocity buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Vec<Tensor<T>>,
}

impl<T: Element> OptimizerState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        OptimizerState {
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// Momentum SGD with weight decay added to the gradient:
/// `v = m·v - lr·(g + wd·w)`, `w = w + v`.
pub fn sgd_step<T: Element>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Validation(format!(
            "sgd_step: {} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    let (lr, m, wd) = (T::lit(learning_rate), T::lit(momentum), T::lit(weight_decay));
    for ((w, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if w.shape() != g.shape() || w.shape() != v.shape() {
            return Err(Error::Shape {
                op: "sgd_step",
                detail: format!("param {} vs grad {} vs velocity {}", w.shape(), g.shape(), v.shape()),
            });
        }
        for ((w, &g), v) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = m * *v - lr * (g + wd * *w);
            *w = *w + *v;
        }
    }
    Ok(())
}
