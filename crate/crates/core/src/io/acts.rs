//! ACTS activation files: a 64-byte header followed by row-major f32 rows.
//!
//! Header: magic `ACTS`, u32 version = 1, u32 d, u64 n, u32 dtype = 0 (f32),
//! then zero padding up to byte 64.

use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::binary::{write_atomic, ByteReader};
use crate::linalg::DenseMatrix;

pub const ACTS_HEADER_LEN: u64 = 64;
const VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;

/// Samples held in 64-bit, stored on disk as 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDataset {
    pub data: DenseMatrix,
    /// Free text (source model, layer, corpus). Kept in a `.provenance`
    /// sidecar next to the ACTS file.
    pub provenance: String,
}

impl ActivationDataset {
    pub fn new(data: DenseMatrix, provenance: impl Into<String>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidInput(
                "dataset needs n >= 1 and d >= 1".into(),
            ));
        }
        if !data.is_finite() {
            return Err(Error::NonFinite("activation dataset".into()));
        }
        Ok(Self {
            data,
            provenance: provenance.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn d(&self) -> usize {
        self.data.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActsHeader {
    pub d: usize,
    pub n: usize,
}

pub fn provenance_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance");
    path.with_file_name(name)
}

/// Writes the dataset (values rounded to f32) and its provenance sidecar.
pub fn write_acts(path: &Path, dataset: &ActivationDataset) -> Result<()> {
    let (n, d) = dataset.data.shape();
    let d32 = u32::try_from(d).map_err(|_| Error::InvalidInput(format!("d = {d} too large")))?;
    write_atomic(path, |w| {
        let mut header = Vec::with_capacity(ACTS_HEADER_LEN as usize);
        header.extend_from_slice(b"ACTS");
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&d32.to_le_bytes());
        header.extend_from_slice(&(n as u64).to_le_bytes());
        header.extend_from_slice(&DTYPE_F32.to_le_bytes());
        header.resize(ACTS_HEADER_LEN as usize, 0);
        w.write_all(&header)?;
        let mut row = Vec::with_capacity(4 * d);
        for i in 0..n {
            row.clear();
            for &v in dataset.data.row(i) {
                row.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&row)?;
        }
        Ok(())
    })?;
    let side = provenance_path(path);
    if dataset.provenance.is_empty() {
        if side.exists() {
            fs::remove_file(side)?;
        }
    } else {
        fs::write(side, &dataset.provenance)?;
    }
    Ok(())
}

/// Streaming reader yielding row blocks.
pub struct ActsReader {
    path: PathBuf,
    inner: BufReader<File>,
    header: ActsHeader,
    rows_read: usize,
}

impl ActsReader {
    /// Validates the header and the exact payload length before any rows
    /// are read.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut inner = BufReader::new(file);
        let mut raw = vec![0u8; ACTS_HEADER_LEN.min(file_len) as usize];
        inner.read_exact(&mut raw)?;
        let mut r = ByteReader::new(&raw, path);
        r.magic(b"ACTS")?;
        r.version(VERSION)?;
        let d = r.dim("d")?;
        let n_at = r.offset();
        let n = r.u64("n")?;
        if n == 0 {
            return Err(r.error_at(n_at, "n must be >= 1"));
        }
        let dtype_at = r.offset();
        let dtype = r.u32("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(r.error_at(
                dtype_at,
                format!("unsupported dtype {dtype}, expected 0 (f32)"),
            ));
        }
        if raw.len() < ACTS_HEADER_LEN as usize {
            return Err(r.error_at(raw.len() as u64, "truncated header: expected 64 bytes"));
        }
        if let Some(i) = raw[r.offset() as usize..].iter().position(|&b| b != 0) {
            return Err(r.error_at(r.offset() + i as u64, "nonzero header padding"));
        }
        let expected = (n as u128) * (d as u128) * 4 + ACTS_HEADER_LEN as u128;
        if (file_len as u128) != expected {
            let message = if (file_len as u128) < expected {
                format!("truncated payload: expected {expected} bytes for n={n}, d={d}")
            } else {
                format!(
                    "{} trailing bytes after payload",
                    file_len as u128 - expected
                )
            };
            let offset = (file_len as u128).min(expected) as u64;
            return Err(r.error_at(offset, message));
        }
        let n = usize::try_from(n).map_err(|_| r.error_at(n_at, "n does not fit in memory"))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
            header: ActsHeader { d, n },
            rows_read: 0,
        })
    }

    pub fn header(&self) -> ActsHeader {
        self.header
    }

    /// Up to `max_rows` further rows, or `None` at the end.
    pub fn next_block(&mut self, max_rows: usize) -> Result<Option<DenseMatrix>> {
        let rows = max_rows.max(1).min(self.header.n - self.rows_read);
        if rows == 0 {
            return Ok(None);
        }
        let d = self.header.d;
        let mut raw = vec![0u8; rows * d * 4];
        self.inner.read_exact(&mut raw)?;
        let base = ACTS_HEADER_LEN + (self.rows_read * d * 4) as u64;
        let mut data = Vec::with_capacity(rows * d);
        for (i, c) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::Format {
                    path: self.path.clone(),
                    offset: base + 4 * i as u64,
                    message: "non-finite activation".into(),
                });
            }
            data.push(v as f64);
        }
        self.rows_read += rows;
        Ok(Some(DenseMatrix::from_vec(rows, d, data)?))
    }
}

pub fn read_acts_header(path: &Path) -> Result<ActsHeader> {
    Ok(ActsReader::open(path)?.header())
}

/// Reads the whole file (and its provenance sidecar, if present).
pub fn read_acts(path: &Path) -> Result<ActivationDataset> {
    let mut reader = ActsReader::open(path)?;
    let ActsHeader { d, n } = reader.header();
    let mut data = Vec::with_capacity(n * d);
    while let Some(block) = reader.next_block(8192)? {
        data.extend_from_slice(block.data());
    }
    let provenance = fs::read_to_string(provenance_path(path)).unwrap_or_default();
    ActivationDataset::new(DenseMatrix::from_vec(n, d, data)?, provenance)
}
