use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::tensor::{check_same_shape, Element, Shape, Tensor};

/// Lower bound applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Expands category maps into a `(N, n_classes, H, W)` one-hot tensor.
pub fn one_hot<T: Element>(labels: &[&LabelMap], n_classes: usize) -> Result<Tensor<T>> {
    let first = labels
        .first()
        .ok_or_else(|| Error::Validation("one_hot needs at least one label map".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut out = Tensor::zeros(Shape::new(labels.len(), n_classes, h, w));
    let plane = h * w;
    for (n, map) in labels.iter().enumerate() {
        if map.height() != h || map.width() != w {
            return Err(Error::Validation("label maps in a batch differ in size".into()));
        }
        let item = n * n_classes * plane;
        for (p, &v) in map.data().iter().enumerate() {
            if v as usize >= n_classes {
                return Err(Error::Validation(format!(
                    "label {v} out of range [0, {n_classes}) at pixel ({}, {})",
                    p / w,
                    p % w
                )));
            }
            out.data_mut()[item + v as usize * plane + p] = T::one();
        }
    }
    Ok(out)
}

/// Mean categorical cross-entropy over batch and pixels, and its gradient
/// with respect to the pre-softmax logits, `(a - y) / (N·H·W)`.
pub fn cross_entropy_loss<T: Element>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    check_same_shape("cross_entropy_loss", probs.shape(), labels.shape())?;
    let s = probs.shape();
    let plane = s.plane();
    let count = (s.n() * plane) as f64;
    let mut total = 0.0f64;
    for n in 0..s.n() {
        let (a, y) = (probs.item(n), labels.item(n));
        for p in 0..plane {
            let mut hot = None;
            for c in 0..s.c() {
                let v = y[c * plane + p];
                if v == T::one() && hot.is_none() {
                    hot = Some(c);
                } else if v != T::zero() {
                    hot = None;
                    break;
                }
            }
            let Some(c) = hot else {
                return Err(Error::Validation(format!(
                    "labels are not one-hot at item {n}, pixel ({}, {})",
                    p / s.w(),
                    p % s.w()
                )));
            };
            let prob = a[c * plane + p].to_f64().unwrap_or(f64::NAN);
            // `max` would swallow a NaN probability; keep it visible.
            total -= if prob.is_nan() { prob } else { prob.max(LOG_CLAMP).ln() };
        }
    }
    let scale = T::lit(1.0 / count);
    let grad = Tensor::new(
        s,
        probs.data().iter().zip(labels.data()).map(|(&a, &y)| (a - y) * scale).collect(),
    )?;
    Ok((total / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::softmax_channels;

    #[test]
    fn uniform_prediction_costs_ln2() {
        let probs = Tensor::<f64>::full(Shape::new(1, 2, 3, 3), 0.5);
        let labels = one_hot(&[&LabelMap::filled(3, 3, 1)], 2).unwrap();
        let (loss, _) = cross_entropy_loss(&probs, &labels).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_is_nearly_free() {
        let labels: Tensor<f64> = one_hot(&[&LabelMap::new(1, 2, vec![0, 1]).unwrap()], 2).unwrap();
        let (loss, grad) = cross_entropy_loss(&labels, &labels).unwrap();
        assert!(loss <= 1e-9);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn nan_probability_gives_nan_loss() {
        let labels: Tensor<f64> = one_hot(&[&LabelMap::filled(1, 1, 0)], 2).unwrap();
        let probs = Tensor::new(labels.shape(), vec![f64::NAN, 0.5]).unwrap();
        assert!(cross_entropy_loss(&probs, &labels).unwrap().0.is_nan());
    }

    #[test]
    fn rejects_soft_labels() {
        let probs = Tensor::<f64>::full(Shape::new(1, 2, 1, 1), 0.5);
        assert!(cross_entropy_loss(&probs, &probs).is_err());
        let twice = Tensor::<f64>::full(Shape::new(1, 2, 1, 1), 1.0);
        assert!(cross_entropy_loss(&probs, &twice).is_err());
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let logits = Tensor::<f64>::from_fn(Shape::new(1, 2, 2, 2), |_, c, h, w| {
            ((c * 5 + h * 3 + w * 7) as f64 * 0.37).sin() * 2.0
        });
        let labels = one_hot(&[&LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap()], 2).unwrap();
        let loss_at = |z: &Tensor<f64>| cross_entropy_loss(&softmax_channels(z), &labels).unwrap().0;
        let (_, grad) = cross_entropy_loss(&softmax_channels(&logits), &labels).unwrap();
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut up = logits.clone();
            up.data_mut()[i] += h;
            let mut down = logits.clone();
            down.data_mut()[i] -= h;
            let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
            let analytic = grad.data()[i];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-12);
            assert!(rel < 1e-6, "{i}: {numeric} vs {analytic}");
        }
    }
}
