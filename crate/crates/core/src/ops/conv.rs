//! Dilated 2-D cross-correlation (im2col + GEMM) and the 2×2 stride-2
//! transposed convolution used for up-sampling. No bias terms.

use rayon::prelude::*;

use crate::error::{Axis, Error, Result};
use crate::gemm::{gemm, Op};
use crate::tensor::{check_same_shape, Element, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding that keeps spatial dims at stride 1. Odd totals put the
    /// extra pixel on the bottom/right.
    Same,
    Valid,
}

/// Geometry of a convolution; the kernel itself is passed separately so the
/// same geometry can be shared by a layer's forward and backward passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvParams {
    pub dilation: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvParams {
    pub fn same(dilation: usize) -> Self {
        ConvParams {
            dilation,
            stride: 1,
            padding: Padding::Same,
        }
    }

    pub fn valid_strided(stride: usize) -> Self {
        ConvParams {
            dilation: 1,
            stride,
            padding: Padding::Valid,
        }
    }
}

/// Resolved per-axis geometry: output size and leading pad.
#[derive(Clone, Copy, Debug)]
struct AxisGeom {
    input: usize,
    output: usize,
    pad_before: usize,
}

fn axis_geom(
    axis: Axis,
    input: usize,
    kernel: usize,
    p: &ConvParams,
) -> Result<AxisGeom> {
    let effective = (kernel - 1) * p.dilation + 1;
    match p.padding {
        Padding::Same => {
            let output = input.div_ceil(p.stride);
            let needed = (output.saturating_sub(1)) * p.stride + effective;
            let total = needed.saturating_sub(input);
            Ok(AxisGeom {
                input,
                output,
                pad_before: total / 2,
            })
        }
        Padding::Valid => {
            if input < effective {
                return Err(Error::Shape {
                    op: "conv2d",
                    detail: format!(
                        "effective kernel extent {effective} exceeds {axis} size {input}"
                    ),
                });
            }
            Ok(AxisGeom {
                input,
                output: (input - effective) / p.stride + 1,
                pad_before: 0,
            })
        }
    }
}

/// Half-open range of output positions `o` with `0 <= o*stride + off < input`.
fn valid_range(off: isize, stride: usize, input: usize, output: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let hi = if (input as isize) <= off {
        0
    } else {
        (input as isize - off + s - 1) / s
    };
    let lo = (lo as usize).min(output);
    let hi = (hi as usize).min(output).max(lo);
    (lo, hi)
}

struct Plan {
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    gh: AxisGeom,
    gw: AxisGeom,
    p: ConvParams,
}

impl Plan {
    fn new(input: Shape, kernel: Shape, p: &ConvParams) -> Result<Plan> {
        if p.dilation < 1 {
            return Err(Error::Parameter(format!("dilation must be >= 1, got {}", p.dilation)));
        }
        if p.stride < 1 {
            return Err(Error::Parameter(format!("stride must be >= 1, got {}", p.stride)));
        }
        if kernel.h() == 0 || kernel.w() == 0 {
            return Err(Error::Parameter("kernel must have non-zero spatial size".into()));
        }
        if input.c() != kernel.c() {
            return Err(Error::dim("conv2d", Axis::Channels, kernel.c(), input.c()));
        }
        Ok(Plan {
            c_in: kernel.c(),
            c_out: kernel.n(),
            kh: kernel.h(),
            kw: kernel.w(),
            gh: axis_geom(Axis::Height, input.h(), kernel.h(), p)?,
            gw: axis_geom(Axis::Width, input.w(), kernel.w(), p)?,
            p: *p,
        })
    }

    fn out_plane(&self) -> usize {
        self.gh.output * self.gw.output
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    /// 1×1, stride 1, unpadded: the input item already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.p.stride == 1
    }

    fn offsets(&self, ki: usize, kj: usize) -> (isize, isize) {
        let r = self.p.dilation as isize;
        (
            ki as isize * r - self.gh.pad_before as isize,
            kj as isize * r - self.gw.pad_before as isize,
        )
    }

    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        let (ih_n, iw_n) = (self.gh.input, self.gw.input);
        let (oh_n, ow_n) = (self.gh.output, self.gw.output);
        let s = self.p.stride;
        let plane = oh_n * ow_n;
        let mut row = 0;
        for ci in 0..self.c_in {
            let xc = &x[ci * ih_n * iw_n..(ci + 1) * ih_n * iw_n];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let (off_h, off_w) = self.offsets(ki, kj);
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    let (w_lo, w_hi) = valid_range(off_w, s, iw_n, ow_n);
                    for oh in 0..oh_n {
                        let seg = &mut dst[oh * ow_n..(oh + 1) * ow_n];
                        let ih = (oh * s) as isize + off_h;
                        if ih < 0 || ih >= ih_n as isize {
                            seg.fill(T::zero());
                            continue;
                        }
                        let src = &xc[ih as usize * iw_n..(ih as usize + 1) * iw_n];
                        seg[..w_lo].fill(T::zero());
                        seg[w_hi..].fill(T::zero());
                        if w_lo == w_hi {
                            continue;
                        }
                        if s == 1 {
                            let start = (w_lo as isize + off_w) as usize;
                            seg[w_lo..w_hi].copy_from_slice(&src[start..start + (w_hi - w_lo)]);
                        } else {
                            for ow in w_lo..w_hi {
                                seg[ow] = src[((ow * s) as isize + off_w) as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im<T: Element>(&self, cols: &[T], gx: &mut [T]) {
        let (ih_n, iw_n) = (self.gh.input, self.gw.input);
        let (oh_n, ow_n) = (self.gh.output, self.gw.output);
        let s = self.p.stride;
        let plane = oh_n * ow_n;
        let mut row = 0;
        for ci in 0..self.c_in {
            let gc = &mut gx[ci * ih_n * iw_n..(ci + 1) * ih_n * iw_n];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let (off_h, off_w) = self.offsets(ki, kj);
                    let src = &cols[row * plane..(row + 1) * plane];
                    let (w_lo, w_hi) = valid_range(off_w, s, iw_n, ow_n);
                    let (h_lo, h_hi) = valid_range(off_h, s, ih_n, oh_n);
                    for oh in h_lo..h_hi {
                        let ih = ((oh * s) as isize + off_h) as usize;
                        let dst = &mut gc[ih * iw_n..(ih + 1) * iw_n];
                        let seg = &src[oh * ow_n..(oh + 1) * ow_n];
                        for (ow, &v) in seg.iter().enumerate().take(w_hi).skip(w_lo) {
                            let iw = ((ow * s) as isize + off_w) as usize;
                            dst[iw] = dst[iw] + v;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Output shape of [`conv2d`] without running it.
pub fn conv2d_output_shape(input: Shape, kernel: Shape, p: &ConvParams) -> Result<Shape> {
    let plan = Plan::new(input, kernel, p)?;
    Ok(Shape::new(input.n(), plan.c_out, plan.gh.output, plan.gw.output))
}

/// Dilated cross-correlation of `input` `(N, C_in, H, W)` with `kernel`
/// `(C_out, C_in, kh, kw)`.
pub fn conv2d<T: Element>(input: &Tensor<T>, kernel: &Tensor<T>, p: &ConvParams) -> Result<Tensor<T>> {
    let plan = Plan::new(input.shape(), kernel.shape(), p)?;
    let n = input.shape().n();
    let out_shape = Shape::new(n, plan.c_out, plan.gh.output, plan.gw.output);
    let mut out = Tensor::zeros(out_shape);
    let out_item = out_shape.item_len();
    if out_item == 0 {
        return Ok(out);
    }
    let in_item = input.shape().item_len();
    let k = plan.col_rows();
    let plane = plan.out_plane();
    out.data_mut()
        .par_chunks_mut(out_item)
        .enumerate()
        .for_each(|(b, y)| {
            let x = &input.data()[b * in_item..(b + 1) * in_item];
            if plan.is_pointwise() {
                gemm(plan.c_out, k, plane, kernel.data(), Op::N, x, Op::N, T::zero(), y);
            } else {
                let mut cols = vec![T::zero(); k * plane];
                plan.im2col(x, &mut cols);
                gemm(plan.c_out, k, plane, kernel.data(), Op::N, &cols, Op::N, T::zero(), y);
            }
        });
    Ok(out)
}

/// Gradients of a scalar loss with respect to the input and the kernel of
/// [`conv2d`], given the gradient with respect to its output.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    p: &ConvParams,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let plan = Plan::new(input.shape(), kernel.shape(), p)?;
    let n = input.shape().n();
    let expected = Shape::new(n, plan.c_out, plan.gh.output, plan.gw.output);
    check_same_shape("conv2d_backward", expected, grad_out.shape())?;

    let in_item = input.shape().item_len();
    let out_item = expected.item_len();
    let k = plan.col_rows();
    let plane = plan.out_plane();
    let klen = kernel.len();

    let mut grad_input = Tensor::zeros(input.shape());
    if in_item == 0 || n == 0 {
        return Ok((grad_input, Tensor::zeros(kernel.shape())));
    }
    let per_item: Vec<Vec<T>> = grad_input
        .data_mut()
        .par_chunks_mut(in_item)
        .enumerate()
        .map(|(b, gx)| {
            let x = &input.data()[b * in_item..(b + 1) * in_item];
            let g = &grad_out.data()[b * out_item..(b + 1) * out_item];
            let mut gk = vec![T::zero(); klen];
            if plan.is_pointwise() {
                gemm(plan.c_out, plane, k, g, Op::N, x, Op::T, T::zero(), &mut gk);
                gemm(k, plan.c_out, plane, kernel.data(), Op::T, g, Op::N, T::zero(), gx);
            } else {
                let mut cols = vec![T::zero(); k * plane];
                plan.im2col(x, &mut cols);
                gemm(plan.c_out, plane, k, g, Op::N, &cols, Op::T, T::zero(), &mut gk);
                gemm(k, plan.c_out, plane, kernel.data(), Op::T, g, Op::N, T::zero(), &mut cols);
                plan.col2im(&cols, gx);
            }
            gk
        })
        .collect();

    // Fixed-order reduction over the batch keeps results bitwise stable.
    let mut grad_kernel = Tensor::zeros(kernel.shape());
    for gk in per_item {
        for (a, b) in grad_kernel.data_mut().iter_mut().zip(gk) {
            *a = *a + b;
        }
    }
    Ok((grad_input, grad_kernel))
}

fn check_deconv(input: Shape, kernel: Shape) -> Result<()> {
    if kernel.h() != 2 || kernel.w() != 2 {
        return Err(Error::Parameter(format!(
            "transposed convolution kernel must be 2x2, got {}x{}",
            kernel.h(),
            kernel.w()
        )));
    }
    if input.c() != kernel.n() {
        return Err(Error::dim("conv_transpose2d", Axis::Channels, kernel.n(), input.c()));
    }
    Ok(())
}

/// 2×2, stride-2 transposed convolution. `kernel` is `(C_in, C_out, 2, 2)`;
/// the output has `C_out` channels and exactly twice the spatial size.
pub fn conv_transpose2d<T: Element>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    check_deconv(input.shape(), kernel.shape())?;
    let s = input.shape();
    let (c_in, c_out) = (kernel.shape().n(), kernel.shape().c());
    let (h, w) = (s.h(), s.w());
    let out_shape = Shape::new(s.n(), c_out, 2 * h, 2 * w);
    let mut out = Tensor::zeros(out_shape);
    if out_shape.is_empty() {
        return Ok(out);
    }
    let in_item = s.item_len();
    out.data_mut()
        .par_chunks_mut(out_shape.item_len())
        .enumerate()
        .for_each(|(b, y)| {
            let x = &input.data()[b * in_item..(b + 1) * in_item];
            let mut taps = vec![T::zero(); c_out * 4 * h * w];
            gemm(c_out * 4, c_in, h * w, kernel.data(), Op::T, x, Op::N, T::zero(), &mut taps);
            for co in 0..c_out {
                for a in 0..2 {
                    for bb in 0..2 {
                        let tap = &taps[(co * 4 + a * 2 + bb) * h * w..][..h * w];
                        for i in 0..h {
                            let row = &mut y[(co * 2 * h + 2 * i + a) * 2 * w..][..2 * w];
                            for j in 0..w {
                                row[2 * j + bb] = tap[i * w + j];
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn conv_transpose2d_backward<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_deconv(input.shape(), kernel.shape())?;
    let s = input.shape();
    let (c_in, c_out) = (kernel.shape().n(), kernel.shape().c());
    let (h, w) = (s.h(), s.w());
    check_same_shape(
        "conv_transpose2d_backward",
        Shape::new(s.n(), c_out, 2 * h, 2 * w),
        grad_out.shape(),
    )?;
    let in_item = s.item_len();
    let out_item = grad_out.shape().item_len();
    let mut grad_input = Tensor::zeros(s);
    if in_item == 0 {
        return Ok((grad_input, Tensor::zeros(kernel.shape())));
    }
    let per_item: Vec<Vec<T>> = grad_input
        .data_mut()
        .par_chunks_mut(in_item)
        .enumerate()
        .map(|(b, gx)| {
            let x = &input.data()[b * in_item..(b + 1) * in_item];
            let g = &grad_out.data()[b * out_item..(b + 1) * out_item];
            let mut taps = vec![T::zero(); c_out * 4 * h * w];
            for co in 0..c_out {
                for a in 0..2 {
                    for bb in 0..2 {
                        let tap = &mut taps[(co * 4 + a * 2 + bb) * h * w..][..h * w];
                        for i in 0..h {
                            let row = &g[(co * 2 * h + 2 * i + a) * 2 * w..][..2 * w];
                            for j in 0..w {
                                tap[i * w + j] = row[2 * j + bb];
                            }
                        }
                    }
                }
            }
            gemm(c_in, c_out * 4, h * w, kernel.data(), Op::N, &taps, Op::N, T::zero(), gx);
            let mut gk = vec![T::zero(); kernel.len()];
            gemm(c_in, h * w, c_out * 4, x, Op::N, &taps, Op::T, T::zero(), &mut gk);
            gk
        })
        .collect();
    let mut grad_kernel = Tensor::zeros(kernel.shape());
    for gk in per_item {
        for (a, b) in grad_kernel.data_mut().iter_mut().zip(gk) {
            *a = *a + b;
        }
    }
    Ok((grad_input, grad_kernel))
}
