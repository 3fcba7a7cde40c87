use crate::error::{Axis, Error, Result};
use crate::tensor::{check_same_shape, Element, Shape, Tensor};

pub fn add_elementwise<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("add_elementwise", a.shape(), b.shape())?;
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// Channel concatenation with `a`'s channels first.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    for (axis, x, y) in [
        (Axis::Batch, sa.n(), sb.n()),
        (Axis::Height, sa.h(), sb.h()),
        (Axis::Width, sa.w(), sb.w()),
    ] {
        if x != y {
            return Err(Error::dim("concat_channels", axis, x, y));
        }
    }
    let shape = Shape::new(sa.n(), sa.c() + sb.c(), sa.h(), sa.w());
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..sa.n() {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Tensor::new(shape, data)
}

/// Splits a gradient of a concatenation back into its `a` and `b` parts.
pub fn concat_channels_backward<T: Element>(grad: &Tensor<T>, a_channels: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = grad.shape();
    if a_channels > s.c() {
        return Err(Error::dim("concat_channels_backward", Axis::Channels, s.c(), a_channels));
    }
    let sa = Shape::new(s.n(), a_channels, s.h(), s.w());
    let sb = Shape::new(s.n(), s.c() - a_channels, s.h(), s.w());
    let mut ga = Vec::with_capacity(sa.len());
    let mut gb = Vec::with_capacity(sb.len());
    for n in 0..s.n() {
        let item = grad.item(n);
        ga.extend_from_slice(&item[..sa.item_len()]);
        gb.extend_from_slice(&item[sa.item_len()..]);
    }
    Ok((Tensor::new(sa, ga)?, Tensor::new(sb, gb)?))
}
