//! Flat little-endian parameter files: magic `RISNN1`, u32 version, u64
//! parameter count, then per parameter a u32 name length, the UTF-8 name,
//! u32 rank, u64 extents and f32 values.

use std::io::{Read, Write};

use crate::element::Element;
use crate::error::{NnError, Result};
use crate::param::Parameter;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"RISNN1";
pub const VERSION: u32 = 1;

pub fn write_params<T: Element, W: Write>(params: &[Parameter<T>], mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &e in p.value.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub fn read_params<T: Element, R: Read>(mut r: R) -> Result<Vec<Parameter<T>>> {
    if &read_array::<6>(&mut r)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u64(&mut r)?;
    let mut params = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| NnError::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| read_array::<4>(&mut r).map(|b| T::lit(f32::from_le_bytes(b) as f64)))
            .collect::<Result<Vec<_>>>()?;
        params.push(Parameter::new(name, Tensor::from_vec(&shape, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}
