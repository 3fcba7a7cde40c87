use crate::error::{Axis, Error, Result};
use crate::tensor::{check_same_shape, Element, Shape, Tensor};

/// Flat input index of the winning element for every pooled output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Shape,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

fn check_even(op: &'static str, shape: Shape, divisor: usize) -> Result<()> {
    if !shape.h().is_multiple_of(divisor) {
        return Err(Error::Indivisible { op, axis: Axis::Height, size: shape.h(), divisor });
    }
    if !shape.w().is_multiple_of(divisor) {
        return Err(Error::Indivisible { op, axis: Axis::Width, size: shape.w(), divisor });
    }
    Ok(())
}

/// 2×2 max pooling with stride 2. Ties resolve to the first element of the
/// window in row-major order.
pub fn maxpool2d<T: Element>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = input.shape();
    check_even("maxpool2d", s, 2)?;
    let (oh, ow) = (s.h() / 2, s.w() / 2);
    let out_shape = Shape::new(s.n(), s.c(), oh, ow);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let x = input.data();
    for nc in 0..s.n() * s.c() {
        let base = nc * s.plane();
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * s.w() + 2 * j;
                let window = [top, top + 1, top + s.w(), top + s.w() + 1];
                let mut best = window[0];
                for &idx in &window[1..] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(out_shape, out)?,
        PoolIndices { input_shape: s, argmax },
    ))
}

pub fn maxpool2d_backward<T: Element>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = indices.input_shape;
    check_same_shape(
        "maxpool2d_backward",
        Shape::new(s.n(), s.c(), s.h() / 2, s.w() / 2),
        grad_out.shape(),
    )?;
    let mut grad = Tensor::zeros(s);
    let gx = grad.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        gx[idx] = gx[idx] + g;
    }
    Ok(grad)
}

/// Nearest-neighbour 2× up-sampling: every pixel becomes a 2×2 block.
pub fn upsample_nearest2x<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    Tensor::from_fn(Shape::new(s.n(), s.c(), 2 * s.h(), 2 * s.w()), |n, c, h, w| {
        input.at(n, c, h / 2, w / 2)
    })
}

pub fn upsample_nearest2x_backward<T: Element>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = grad_out.shape();
    check_even("upsample_nearest2x_backward", s, 2)?;
    Ok(Tensor::from_fn(Shape::new(s.n(), s.c(), s.h() / 2, s.w() / 2), |n, c, h, w| {
        grad_out.at(n, c, 2 * h, 2 * w)
            + grad_out.at(n, c, 2 * h, 2 * w + 1)
            + grad_out.at(n, c, 2 * h + 1, 2 * w)
            + grad_out.at(n, c, 2 * h + 1, 2 * w + 1)
    }))
}
