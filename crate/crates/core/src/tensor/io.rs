//! DBM1 dense matrix files.
//!
//! Layout: magic `DBM1`, u8 dtype code (0 = f64, 1 = f32), u64 rows,
//! u64 cols, then the row-major little-endian payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Matrix;

pub const DBM_MAGIC: &[u8; 4] = b"DBM1";

/// A matrix of whichever element type a file declared.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyMatrix {
    F64(Matrix<f64>),
    F32(Matrix<f32>),
}

impl AnyMatrix {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnyMatrix::F64(_) => Dtype::F64,
            AnyMatrix::F32(_) => Dtype::F32,
        }
    }

    /// Widens to f64; exact for both element types.
    pub fn into_f64(self) -> Matrix<f64> {
        match self {
            AnyMatrix::F64(m) => m,
            AnyMatrix::F32(m) => m.cast(),
        }
    }
}

pub fn write_dbm<T: Scalar, W: Write>(mut w: W, m: &Matrix<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(21 + m.as_slice().len() * T::DTYPE.size_bytes());
    buf.extend_from_slice(DBM_MAGIC);
    buf.push(T::DTYPE.code());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    write_payload(&mut buf, m);
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dbm<R: Read>(mut r: R) -> Result<AnyMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DBM_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected DBM1")));
    }
    let dtype = read_dtype(&mut r)?;
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    Ok(match dtype {
        Dtype::F64 => AnyMatrix::F64(read_payload(&mut r, rows, cols)?),
        Dtype::F32 => AnyMatrix::F32(read_payload(&mut r, rows, cols)?),
    })
}

pub(crate) fn write_payload<T: Scalar>(buf: &mut Vec<u8>, m: &Matrix<T>) {
    for &x in m.as_slice() {
        x.write_le(buf);
    }
}

pub(crate) fn read_dtype<R: Read>(r: &mut R) -> Result<Dtype> {
    let code = read_u8(r)?;
    Dtype::from_code(code).ok_or_else(|| Error::Format(format!("unknown dtype code {code}")))
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_payload<T: Scalar, R: Read>(
    r: &mut R,
    rows: usize,
    cols: usize,
) -> Result<Matrix<T>> {
    let width = T::DTYPE.size_bytes();
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::Format(format!("{rows}x{cols} payload size overflows")))?;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(width).map(T::read_le).collect();
    let m = Matrix::new(rows, cols, data)?;
    m.ensure_finite("payload")?;
    Ok(m)
}
