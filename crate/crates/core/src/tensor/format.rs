//! `.csem` tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size      | field                               |
//! |--------|-----------|-------------------------------------|
//! | 0      | 4         | magic `CSEM`                        |
//! | 4      | 2         | version, `u16` = 1                  |
//! | 6      | 1         | dtype, `u8` (0 = `f64` LE)          |
//! | 7      | 1         | ndim, `u8`                          |
//! | 8      | 8 * ndim  | dims, `u64` each                    |
//! | ...    | 8 * prod  | row-major payload                   |

use std::fs;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSEM";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 0;
/// Fixed part of the header, before the dims.
pub const HEADER_LEN: usize = 8;

/// Serializes a matrix as a 2-D tensor.
pub fn encode_tensor(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 + 8 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F64);
    out.push(2);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Parses a tensor of rank 0, 1 or 2. Rank-1 tensors become column vectors.
pub fn decode_tensor(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dtype = bytes[6];
    if dtype != DTYPE_F64 {
        return Err(Error::format(6, format!("unsupported dtype {dtype}")));
    }
    let ndim = bytes[7] as usize;
    if ndim > 2 {
        return Err(Error::format(7, format!("unsupported rank {ndim}, expected at most 2")));
    }

    let dims_end = HEADER_LEN + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated dims: need {dims_end} header bytes"),
        ));
    }
    let dims: Vec<u64> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let (rows, cols) = match dims.as_slice() {
        [] => (1, 1),
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => unreachable!(),
    };

    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(HEADER_LEN as u64, "dims overflow"))?;
    let payload = &bytes[dims_end..];
    if (payload.len() as u64) < count {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: {} of {count} bytes", payload.len()),
        ));
    }
    if (payload.len() as u64) > count {
        return Err(Error::format(
            dims_end as u64 + count,
            format!("{} trailing bytes after payload", payload.len() as u64 - count),
        ));
    }

    let mut data = Vec::with_capacity((count / 8) as usize);
    for (i, c) in payload.chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        if !x.is_finite() {
            return Err(Error::format(
                (dims_end + 8 * i) as u64,
                format!("non-finite value {x}"),
            ));
        }
        data.push(x);
    }
    Matrix::new(rows as usize, cols as usize, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn write_tensor(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(m)).map_err(|e| Error::io(path, e))
}
