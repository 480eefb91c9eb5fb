//! Little-endian primitives shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4], what: &'static str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Format {
            what,
            detail: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf),
                String::from_utf8_lossy(magic)
            ),
        });
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f32s<W: Write, I: IntoIterator<Item = f64>>(w: &mut W, values: I) -> Result<()> {
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Validates a dimension / count field read from a file before allocating.
pub(crate) fn check_len(value: u32, limit: u32, what: &'static str, field: &str) -> Result<usize> {
    if value > limit {
        return Err(Error::Format {
            what,
            detail: format!("{field}={value} exceeds limit {limit}"),
        });
    }
    Ok(value as usize)
}
