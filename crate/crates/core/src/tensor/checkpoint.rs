//! Binary container for named parameter tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "CMXPARAM"
//! version  u32      1
//! count    u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims u64 × ndim
//!   values   f64 × product(dims)
//! ```
//!
//! Only values are stored; optimizer moments are not.

use std::io::{Read, Write};

use super::{Parameter, Tensor};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 8] = b"CMXPARAM";
pub const PARAMS_VERSION: u32 = 1;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(format!("parameter container: {}", msg.into()))
}

fn io_err(e: std::io::Error) -> Error {
    invalid(e.to_string())
}

pub fn write_params<W: Write>(out: &mut W, params: &[Parameter]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads named tensors back as fresh parameters (zeroed optimizer state).
pub fn read_params<R: Read>(input: &mut R) -> Result<Vec<Parameter>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != PARAMS_MAGIC {
        return Err(invalid("bad magic"));
    }
    let version = read_u32(input)?;
    if version != PARAMS_VERSION {
        return Err(invalid(format!("unsupported version {version}")));
    }
    let count = read_u32(input)?;
    let mut params = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(input)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| invalid("tensor name is not UTF-8"))?;
        let ndim = read_u32(input)?;
        let shape = (0..ndim)
            .map(|_| read_u64(input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 8];
        input.read_exact(&mut raw).map_err(io_err)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.push(Parameter::new(name, Tensor::new(shape, data)?));
    }
    Ok(params)
}
