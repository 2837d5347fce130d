//! Small helpers for the versioned binary containers (datasets, network
//! weights, trained models, checkpoints). Numbers are little-endian; float
//! arrays are stored as raw IEEE-754 bytes so round trips are bit-exact.

use std::io::{Read, Write};

use crate::error::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::Format(format!("container truncated or unreadable: {e}"))
}

pub fn write_magic(w: &mut impl Write, magic: &[u8; 4], version: u32) -> Result<()> {
    w.write_all(magic).map_err(io_err)?;
    w.write_all(&version.to_le_bytes()).map_err(io_err)
}

pub fn read_magic(r: &mut impl Read, magic: &[u8; 4], max_version: u32) -> Result<u32> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(io_err)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version == 0 || version > max_version {
        return Err(Error::Format(format!(
            "unsupported container version {version} (this build reads <= {max_version})"
        )));
    }
    Ok(version)
}

pub fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_f64_slice(w: &mut impl Write, values: &[f64]) -> Result<()> {
    write_u64(w, values.len() as u64)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_f64_vec(r: &mut impl Read) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    if len > (1 << 32) {
        return Err(Error::Format(format!("implausible array length {len}")));
    }
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Length-prefixed UTF-8 block, used for JSON headers.
pub fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    write_u64(w, bytes.len() as u64)?;
    w.write_all(bytes).map_err(io_err)
}

pub fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u64(r)? as usize;
    if len > (1 << 30) {
        return Err(Error::Format(format!("implausible block length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

/// FNV-1a over raw bytes; used to fingerprint dataset manifests in model
/// provenance blocks.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    format!("{h:016x}")
}
