//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//! magic `PATT` | u8 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 rank |
//! u32 dims[rank] | u32 name length | name bytes (UTF-8) | raw payload.
//! Round-trips are bit-exact for both float widths.

use std::fs;
use std::path::Path;

use crate::error::{invalid, parse, Result};
use crate::scalar::{Dtype, Scalar};

pub const MAGIC: &[u8; 4] = b"PATT";
pub const VERSION: u8 = 1;

/// A named n-dimensional array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<S: Scalar> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> NamedTensor<S> {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<S>) -> Result<NamedTensor<S>> {
        let t = NamedTensor {
            name: name.into(),
            dims,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(invalid("tensor rank must be >= 1"));
        }
        let len: usize = self.dims.iter().product();
        if len != self.data.len() {
            return Err(invalid(format!(
                "tensor payload length {} does not match dims {:?}",
                self.data.len(),
                self.dims
            )));
        }
        Ok(())
    }
}

/// Serializes a tensor record to bytes.
pub fn encode_tensor<S: Scalar>(tensor: &NamedTensor<S>) -> Result<Vec<u8>> {
    tensor.validate()?;
    if tensor.dims.len() > u8::MAX as usize {
        return Err(invalid("tensor rank exceeds 255"));
    }
    let mut out = Vec::with_capacity(16 + tensor.name.len() + tensor.data.len() * S::DTYPE.width());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(S::DTYPE.code());
    out.push(tensor.dims.len() as u8);
    for &d in &tensor.dims {
        out.extend_from_slice(&u32::try_from(d).map_err(|_| invalid("dimension exceeds u32"))?.to_le_bytes());
    }
    out.extend_from_slice(&(tensor.name.len() as u32).to_le_bytes());
    out.extend_from_slice(tensor.name.as_bytes());
    for v in &tensor.data {
        v.write_le(&mut out);
    }
    Ok(out)
}

/// Parses one tensor record from the front of `bytes`; returns the tensor and
/// the number of bytes consumed.
pub fn decode_tensor<S: Scalar>(bytes: &[u8]) -> Result<(NamedTensor<S>, usize)> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(parse(format!("truncated tensor file at offset {pos}", pos = *pos)));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(parse("bad magic, expected PATT"));
    }
    let version = take(&mut pos, 1)?[0];
    if version != VERSION {
        return Err(parse(format!("unsupported version {version}")));
    }
    let dtype_code = take(&mut pos, 1)?[0];
    let dtype = Dtype::from_code(dtype_code).ok_or_else(|| parse(format!("unknown dtype code {dtype_code}")))?;
    if dtype != S::DTYPE {
        return Err(parse(format!(
            "dtype mismatch: file holds {:?}, requested {:?}",
            dtype,
            S::DTYPE
        )));
    }
    let rank = take(&mut pos, 1)?[0] as usize;
    if rank == 0 {
        return Err(parse("tensor rank must be >= 1"));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let b = take(&mut pos, 4)?;
        dims.push(u32::from_le_bytes(b.try_into().unwrap()) as usize);
    }
    let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let name = std::str::from_utf8(take(&mut pos, name_len)?)
        .map_err(|_| parse("tensor name is not valid UTF-8"))?
        .to_owned();
    let count: usize = dims.iter().product();
    let width = S::DTYPE.width();
    let payload = take(&mut pos, count * width)?;
    let data = payload
        .chunks_exact(width)
        .map(S::from_le_slice)
        .collect::<Vec<_>>();
    Ok((NamedTensor { name, dims, data }, pos))
}

pub fn save_tensor<S: Scalar>(path: impl AsRef<Path>, tensor: &NamedTensor<S>) -> Result<()> {
    fs::write(path, encode_tensor(tensor)?)?;
    Ok(())
}

pub fn load_tensor<S: Scalar>(path: impl AsRef<Path>) -> Result<NamedTensor<S>> {
    let bytes = fs::read(path)?;
    let (tensor, used) = decode_tensor(&bytes)?;
    if used != bytes.len() {
        return Err(parse(format!("{} trailing bytes after tensor payload", bytes.len() - used)));
    }
    Ok(tensor)
}
