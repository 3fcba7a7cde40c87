//! Dense 4-D tensors in `(batch, channels, height, width)` layout.
//!
//! Precision is chosen per tensor through the element type: `f64` for
//! gradient checks, `f32` for training.

use std::fmt::Debug;
use std::io::{Read, Write};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Axis, Error, Result};

/// Scalar element of a [`Tensor`].
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    const DTYPE: DType;

    /// `c = alpha * a * b + beta * c` on strided row/column-major views.
    ///
    /// # Safety
    /// Every pointer offset reachable through the given dims and strides must
    /// lie inside the corresponding allocation.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// `(batch, channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }
    pub fn n(&self) -> usize {
        self.0[0]
    }
    pub fn c(&self) -> usize {
        self.0[1]
    }
    pub fn h(&self) -> usize {
        self.0[2]
    }
    pub fn w(&self) -> usize {
        self.0[3]
    }
    pub fn len(&self) -> usize {
        self.0.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Elements in one batch item.
    pub fn item_len(&self) -> usize {
        self.c() * self.h() * self.w()
    }
    pub fn plane(&self) -> usize {
        self.h() * self.w()
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "({n}, {c}, {h}, {w})")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("shape {shape} needs {} elements, got {}", shape.len(), data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds a tensor from `f(n, c, h, w)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let [n, c, h, w] = shape.0;
        let mut data = Vec::with_capacity(shape.len());
        for ni in 0..n {
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        data.push(f(ni, ci, hi, wi));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = self.shape;
        ((n * s.c() + c) * s.h() + h) * s.w() + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.index(n, c, h, w);
        self.data[i] = v;
    }

    /// Slice holding batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        check_same_shape("add_assign", self.shape, other.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|x| U::from_f64(x.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    /// Serializes to the raw tensor format: `"MNT1"`, dtype code, four
    /// little-endian `u32` dims, then packed little-endian data.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + self.len() * T::DTYPE.size());
        out.extend_from_slice(RAW_MAGIC);
        out.push(T::DTYPE.code());
        for d in self.shape.0 {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &self.data {
            x.write_le(&mut out);
        }
        out
    }

    /// Parses the raw tensor format, converting the stored dtype to `T`.
    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < RAW_HEADER_LEN {
            return Err(Error::Parse {
                offset: bytes.len(),
                detail: "truncated tensor header".into(),
            });
        }
        if &bytes[..4] != RAW_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                detail: "bad magic, expected MNT1".into(),
            });
        }
        let dtype = DType::from_code(bytes[4]).ok_or_else(|| Error::Parse {
            offset: 4,
            detail: format!("unknown dtype code {}", bytes[4]),
        })?;
        let mut dims = [0usize; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            let off = 5 + 4 * i;
            *d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        }
        let shape = Shape(dims);
        let need = RAW_HEADER_LEN + shape.len() * dtype.size();
        if bytes.len() != need {
            return Err(Error::Parse {
                offset: bytes.len().min(need),
                detail: format!("payload length {} does not match shape {shape}", bytes.len() - RAW_HEADER_LEN),
            });
        }
        let payload = &bytes[RAW_HEADER_LEN..];
        let data = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| T::from_f32(f32::read_le(c)).unwrap())
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| T::from_f64(f64::read_le(c)).unwrap())
                .collect(),
        };
        Ok(Tensor { shape, data })
    }

    pub fn write_raw(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_raw_bytes())
    }

    pub fn read_raw(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::Parse {
            offset: buf.len(),
            detail: e.to_string(),
        })?;
        Self::from_raw_bytes(&buf)
    }
}

const RAW_MAGIC: &[u8; 4] = b"MNT1";
const RAW_HEADER_LEN: usize = 4 + 1 + 16;

pub(crate) fn check_same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    let axes = [Axis::Batch, Axis::Channels, Axis::Height, Axis::Width];
    for (i, axis) in axes.into_iter().enumerate() {
        if a.0[i] != b.0[i] {
            return Err(Error::dim(op, axis, a.0[i], b.0[i]));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_invariant_enforced() {
        assert!(Tensor::<f32>::new(Shape::new(1, 2, 3, 4), vec![0.0; 23]).is_err());
        assert!(Tensor::<f32>::new(Shape::new(1, 2, 3, 4), vec![0.0; 24]).is_ok());
    }

    #[test]
    fn raw_roundtrip_and_conversion() {
        let t = Tensor::<f64>::from_fn(Shape::new(2, 1, 2, 3), |n, _, h, w| (n * 100 + h * 10 + w) as f64 + 0.25);
        let bytes = t.to_raw_bytes();
        assert_eq!(&bytes[..4], b"MNT1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes.len(), 21 + 12 * 8);
        assert_eq!(Tensor::<f64>::from_raw_bytes(&bytes).unwrap(), t);
        let as32 = Tensor::<f32>::from_raw_bytes(&bytes).unwrap();
        assert_eq!(as32.at(1, 0, 1, 2), 112.25);
    }

    #[test]
    fn raw_rejects_truncation() {
        let t = Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2));
        let bytes = t.to_raw_bytes();
        let err = Tensor::<f32>::from_raw_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(Tensor::<f32>::from_raw_bytes(&bytes[..10]).is_err());
    }
}
