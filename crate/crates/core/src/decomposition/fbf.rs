//! FBF1 factored-bias files: magic `FBF1`, u8 dtype, u8 origin tag,
//! u64 N, u64 M, u64 R, then `fq` and `fk` row-major little-endian.

use std::io::{Read, Write};

use super::{FactoredBias, Origin};
use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::io::{read_dtype, read_payload, read_u64, read_u8, write_payload};

pub const FBF_MAGIC: &[u8; 4] = b"FBF1";

#[derive(Clone, Debug, PartialEq)]
pub enum AnyFactoredBias {
    F64(FactoredBias<f64>),
    F32(FactoredBias<f32>),
}

pub fn write_fbf<T: Scalar, W: Write>(mut w: W, fb: &FactoredBias<T>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(FBF_MAGIC);
    buf.push(T::DTYPE.code());
    buf.push(fb.origin.tag());
    for dim in [fb.n(), fb.m(), fb.rank()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    write_payload(&mut buf, fb.fq());
    write_payload(&mut buf, fb.fk());
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_fbf<R: Read>(mut r: R) -> Result<AnyFactoredBias> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FBF_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected FBF1")));
    }
    let dtype = read_dtype(&mut r)?;
    let tag = read_u8(&mut r)?;
    let origin =
        Origin::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown origin tag {tag}")))?;
    let n = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let rank = read_u64(&mut r)? as usize;
    fn body<T: Scalar, R: Read>(
        r: &mut R,
        n: usize,
        m: usize,
        rank: usize,
        origin: Origin,
    ) -> Result<FactoredBias<T>> {
        let fq = read_payload(r, n, rank)?;
        let fk = read_payload(r, m, rank)?;
        FactoredBias::new(fq, fk, origin, "fbf1")
    }
    Ok(match dtype {
        Dtype::F64 => AnyFactoredBias::F64(body(&mut r, n, m, rank, origin)?),
        Dtype::F32 => AnyFactoredBias::F32(body(&mut r, n, m, rank, origin)?),
    })
}
