//! Binary checkpoints.
//!
//! Layout (little-endian): `"MNCK"`, version `u16`, architecture TOML
//! (`u32` length + bytes), tensor count `u32`, one directory entry per tensor
//! (`u16` name length, name, dtype `u8`, four `u32` dims), the packed tensor
//! data in directory order, and a trailing FNV-1a `u64` of everything before
//! it. Optimizer velocities are stored as `velocity/<param name>`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{build_architecture, ArchitectureSpec, Network};
use crate::tensor::{DType, Element, Shape, Tensor};

use super::sgd::OptimizerState;

const MAGIC: &[u8; 4] = b"MNCK";
const VERSION: u16 = 1;
const VELOCITY_PREFIX: &str = "velocity/";

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub network: Network<T>,
    pub optimizer: Option<OptimizerState<T>>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn encode_checkpoint<T: Element>(network: &Network<T>, optimizer: Option<&OptimizerState<T>>) -> Vec<u8> {
    let specs = network.graph().params();
    let mut tensors: Vec<(String, &Tensor<T>)> = specs
        .iter()
        .zip(network.params())
        .map(|(s, t)| (s.name.clone(), t))
        .collect();
    if let Some(opt) = optimizer {
        tensors.extend(
            specs
                .iter()
                .zip(&opt.velocity)
                .map(|(s, t)| (format!("{VELOCITY_PREFIX}{}", s.name), t)),
        );
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let arch = network.graph().spec().to_toml();
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE.code());
        let s = t.shape();
        for d in [s.n(), s.c(), s.h(), s.w()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, t) in &tensors {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Integrity {
                offset: self.pos,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn corrupt(&self, offset: usize, detail: impl Into<String>) -> Error {
        Error::Integrity {
            offset,
            detail: detail.into(),
        }
    }
}

/// Parses and verifies a checkpoint. Nothing is returned unless every check
/// passes, so a damaged file never yields partial state.
pub fn decode_checkpoint<T: Element>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let body_len = bytes.len().checked_sub(8).ok_or(Error::Integrity {
        offset: bytes.len(),
        detail: "file shorter than its checksum".into(),
    })?;
    let mut c = Cursor { bytes: &bytes[..body_len], pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(c.corrupt(0, "bad magic, not a checkpoint"));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(c.corrupt(4, format!("unsupported version {version}")));
    }
    let arch_len = c.u32("architecture length")? as usize;
    let arch_at = c.pos;
    let arch_text = std::str::from_utf8(c.take(arch_len, "architecture")?)
        .map_err(|_| c.corrupt(arch_at, "architecture is not UTF-8"))?;
    let count = c.u32("tensor count")? as usize;
    let mut dir = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u16("name length")? as usize;
        let at = c.pos;
        let name = std::str::from_utf8(c.take(len, "tensor name")?)
            .map_err(|_| c.corrupt(at, "tensor name is not UTF-8"))?
            .to_string();
        let dt_at = c.pos;
        let code = c.take(1, "dtype")?[0];
        let dtype = DType::from_code(code).ok_or_else(|| c.corrupt(dt_at, format!("unknown dtype {code}")))?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = c.u32("dims")? as usize;
        }
        dir.push((name, dtype, Shape::new(dims[0], dims[1], dims[2], dims[3])));
    }
    let mut tensors = Vec::with_capacity(dir.len());
    for (name, dtype, shape) in dir {
        let size = dtype.size();
        let raw = c.take(shape.len() * size, &format!("data of {name}"))?;
        let data: Vec<T> = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|b| T::lit(f32::read_le(b) as f64)).collect(),
            DType::F64 => raw.chunks_exact(8).map(|b| T::lit(f64::read_le(b))).collect(),
        };
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != body_len {
        return Err(c.corrupt(c.pos, "trailing bytes before checksum"));
    }
    let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if stored != fnv1a(&bytes[..body_len]) {
        return Err(c.corrupt(body_len, "checksum mismatch"));
    }

    let spec = ArchitectureSpec::from_toml(arch_text)?;
    let graph = build_architecture(&spec)?;
    let names: Vec<&str> = graph.params().iter().map(|p| p.name.as_str()).collect();
    let n = names.len();
    let bad = |detail: String| Error::Integrity { offset: arch_at, detail };
    if tensors.len() != n && tensors.len() != 2 * n {
        return Err(bad(format!("{} tensors for a graph with {n} parameters", tensors.len())));
    }
    for (i, (name, _)) in tensors.iter().enumerate() {
        let want = if i < n {
            names[i].to_string()
        } else {
            format!("{VELOCITY_PREFIX}{}", names[i - n])
        };
        if *name != want {
            return Err(bad(format!("tensor {i} is `{name}`, expected `{want}`")));
        }
    }
    let mut tensors: Vec<Tensor<T>> = tensors.into_iter().map(|(_, t)| t).collect();
    let velocity = tensors.split_off(n);
    let network = Network::from_params(graph, tensors)?;
    let optimizer = if velocity.is_empty() {
        None
    } else {
        for (v, p) in velocity.iter().zip(network.params()) {
            if v.shape() != p.shape() {
                return Err(bad(format!("velocity shape {} differs from parameter {}", v.shape(), p.shape())));
            }
        }
        Some(OptimizerState { velocity })
    };
    Ok(Checkpoint { network, optimizer })
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn save_checkpoint<T: Element>(
    path: impl AsRef<Path>,
    network: &Network<T>,
    optimizer: Option<&OptimizerState<T>>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(network, optimizer);
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Element>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
