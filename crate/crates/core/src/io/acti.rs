//! ACTI active-set files: magic `ACTI`, u32 version = 1, u32 k, u64 n, then
//! `n` records of `k` u32 atom indices, short sets padded with `0xFFFFFFFF`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::binary::{write_bytes_atomic, ByteReader, ByteWriter};

const VERSION: u32 = 1;
const PAD: u32 = u32::MAX;

pub fn write_acti(path: &Path, k: usize, sets: &[Vec<usize>]) -> Result<()> {
    let mut w = ByteWriter::default();
    w.bytes(b"ACTI");
    w.u32(VERSION);
    w.len_u32(k, "k")?;
    w.u64(sets.len() as u64);
    for (i, s) in sets.iter().enumerate() {
        if s.len() > k {
            return Err(Error::InvalidInput(format!(
                "active set {i} has {} entries, more than k = {k}",
                s.len()
            )));
        }
        for &a in s {
            match u32::try_from(a) {
                Ok(v) if v != PAD => w.u32(v),
                _ => return Err(Error::InvalidInput(format!("atom index {a} out of range"))),
            }
        }
        for _ in s.len()..k {
            w.u32(PAD);
        }
    }
    write_bytes_atomic(path, &w.buf)
}

/// Returns `(k, sets)`; padding is dropped and must trail each record.
pub fn read_acti(path: &Path) -> Result<(usize, Vec<Vec<usize>>)> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(b"ACTI")?;
    r.version(VERSION)?;
    let k = r.dim("k")?;
    let n_at = r.offset();
    let n = r.u64("n")?;
    let expected = 20u128 + n as u128 * k as u128 * 4;
    if bytes.len() as u128 != expected {
        return Err(r.error_at(
            (bytes.len() as u128).min(expected) as u64,
            format!("payload length does not match n={n}, k={k} (expected {expected} bytes)"),
        ));
    }
    let n = usize::try_from(n).map_err(|_| r.error_at(n_at, "n does not fit in memory"))?;
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut set = Vec::with_capacity(k);
        let mut padded = false;
        for _ in 0..k {
            let at = r.offset();
            let v = r.u32("atom index")?;
            if v == PAD {
                padded = true;
            } else if padded {
                return Err(r.error_at(at, "atom index after padding"));
            } else {
                set.push(v as usize);
            }
        }
        sets.push(set);
    }
    r.finish()?;
    Ok((k, sets))
}
