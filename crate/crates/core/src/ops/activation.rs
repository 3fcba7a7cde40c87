use crate::error::Result;
use crate::tensor::{check_same_shape, Element, Tensor};

pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Masks `grad_out` by `input > 0`; the subgradient at zero is zero.
pub fn relu_backward<T: Element>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("relu_backward", input.shape(), grad_out.shape())?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Per-pixel softmax over the channel axis, stabilized by the channel max.
pub fn softmax_channels<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    let x = input.data();
    let y = out.data_mut();
    for n in 0..s.n() {
        let base = n * s.item_len();
        for p in 0..plane {
            let at = |c: usize| base + c * plane + p;
            let mut max = T::neg_infinity();
            for c in 0..s.c() {
                max = max.max(x[at(c)]);
            }
            let mut total = T::zero();
            for c in 0..s.c() {
                let e = (x[at(c)] - max).exp();
                y[at(c)] = e;
                total = total + e;
            }
            for c in 0..s.c() {
                y[at(c)] = y[at(c)] / total;
            }
        }
    }
    out
}

/// Vector-Jacobian product of [`softmax_channels`] given its output `probs`.
pub fn softmax_channels_backward<T: Element>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("softmax_channels_backward", probs.shape(), grad_out.shape())?;
    let s = probs.shape();
    let plane = s.plane();
    let mut grad = Tensor::zeros(s);
    let (a, g) = (probs.data(), grad_out.data());
    let gx = grad.data_mut();
    for n in 0..s.n() {
        let base = n * s.item_len();
        for p in 0..plane {
            let at = |c: usize| base + c * plane + p;
            let dot: T = (0..s.c()).map(|c| a[at(c)] * g[at(c)]).sum();
            for c in 0..s.c() {
                gx[at(c)] = a[at(c)] * (g[at(c)] - dot);
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn relu_values_and_mask() {
        let x = Tensor::new(Shape::new(1, 1, 1, 3), vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::full(x.shape(), 5.0);
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_positive_is_identity() {
        let x = Tensor::from_fn(Shape::new(1, 2, 2, 2), |_, c, h, w| 0.1 + (c + h + w) as f64);
        assert_eq!(relu(&x), x);
        let g = Tensor::from_fn(x.shape(), |_, c, h, w| (c * 4 + h * 2 + w) as f64 - 3.0);
        assert_eq!(relu_backward(&x, &g).unwrap(), g);
    }

    #[test]
    fn softmax_uniform_and_saturated() {
        let x = Tensor::new(Shape::new(1, 2, 1, 2), vec![0.0f64, 1000.0, 0.0, 0.0]).unwrap();
        let y = softmax_channels(&x);
        assert_eq!(y.at(0, 0, 0, 0), 0.5);
        assert_eq!(y.at(0, 1, 0, 0), 0.5);
        assert_eq!(y.at(0, 0, 0, 1), 1.0);
        assert_eq!(y.at(0, 1, 0, 1), 0.0);
        assert!(y.is_finite());
    }
}
