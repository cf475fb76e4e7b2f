//! Mean/covariance moments, MOMS files, and matched-moment Gaussian controls.
//!
//! MOMS layout: magic `MOMS`, u32 version = 1, u32 d, then the mean (d f64)
//! and the row-major covariance (d*d f64). The Cholesky factor is derived on
//! load.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::io::binary::{write_bytes_atomic, ByteReader, ByteWriter};
use crate::io::ActivationDataset;
use crate::linalg::DenseMatrix;
use crate::rng::{item_rng, Stream};

const VERSION: u32 = 1;
const SYMMETRY_TOLERANCE: f64 = 1e-6;
const MOMENT_CHUNK: usize = 1024;
const MAX_JITTER_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    /// Lower-triangular `L` with `L L^T = covariance + jitter I`.
    pub cholesky: DenseMatrix,
    pub jitter: f64,
}

impl Moments {
    /// Validates symmetry and factors `covariance`, adding diagonal jitter
    /// (starting at `1e-10 * trace / d`, or `1e-10` for a zero trace, and
    /// doubling) only if the plain factorization fails.
    pub fn new(mean: Vec<f64>, covariance: DenseMatrix) -> Result<Self> {
        let d = mean.len();
        check_dim("covariance rows", d, covariance.rows())?;
        check_dim("covariance columns", d, covariance.cols())?;
        if d == 0 {
            return Err(Error::InvalidInput("moments need d >= 1".into()));
        }
        if !covariance.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("moments".into()));
        }
        let asym = covariance.asymmetry();
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "covariance is not symmetric (max |C - C^T| = {asym:e})"
            )));
        }
        let (cholesky, jitter) = factor_with_jitter(&covariance)?;
        Ok(Self {
            mean,
            covariance,
            cholesky,
            jitter,
        })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }
}

fn factor_with_jitter(c: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    if let Ok(l) = c.cholesky() {
        return Ok((l, 0.0));
    }
    let d = c.rows();
    let trace = c.trace();
    let mut jitter = if trace > 0.0 {
        1e-10 * trace / d as f64
    } else {
        1e-10
    };
    for _ in 0..MAX_JITTER_DOUBLINGS {
        let mut shifted = c.clone();
        for i in 0..d {
            shifted[(i, i)] += jitter;
        }
        if let Ok(l) = shifted.cholesky() {
            return Ok((l, jitter));
        }
        jitter *= 2.0;
    }
    Err(Error::InvalidInput(
        "covariance could not be factored with any jitter".into(),
    ))
}

/// Mean and unbiased covariance, accumulated in fixed row chunks combined
/// by a pairwise tree (identical for any thread count).
pub fn compute_moments(dataset: &ActivationDataset) -> Result<Moments> {
    let x = &dataset.data;
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InvalidInput("moments need n >= 2".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("activation dataset".into()));
    }
    let starts: Vec<usize> = (0..n).step_by(MOMENT_CHUNK).collect();
    let sums: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = vec![0.0; d];
            for i in s..(s + MOMENT_CHUNK).min(n) {
                acc.iter_mut().zip(x.row(i)).for_each(|(a, v)| *a += v);
            }
            acc
        })
        .collect();
    let mut mean = pairwise(sums);
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let partial: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = vec![0.0; d * d];
            let mut c = vec![0.0; d];
            for r in s..(s + MOMENT_CHUNK).min(n) {
                c.iter_mut()
                    .zip(x.row(r))
                    .zip(&mean)
                    .for_each(|((c, v), m)| *c = v - m);
                for i in 0..d {
                    let ci = c[i];
                    let row = &mut acc[i * d + i..(i + 1) * d];
                    row.iter_mut()
                        .zip(&c[i..])
                        .for_each(|(a, cj)| *a += ci * cj);
                }
            }
            acc
        })
        .collect();
    let upper = pairwise(partial);
    let scale = 1.0 / (n - 1) as f64;
    let cov = DenseMatrix::from_fn(d, d, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        upper[a * d + b] * scale
    });
    Moments::new(mean, cov)
}

fn pairwise(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// `x_i = mean + L z_i` with `z_i` standard normal drawn from the stream of
/// sample `i`, so any sample can be regenerated independently.
pub fn sample_gaussian_control(
    moments: &Moments,
    n: usize,
    seed: u64,
) -> Result<ActivationDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let d = moments.d();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, Stream::GaussianControl, i as u64);
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mut x = moments.mean.clone();
            for (r, xr) in x.iter_mut().enumerate() {
                let l = &moments.cholesky.row(r)[..=r];
                *xr += l.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            }
            x
        })
        .collect();
    ActivationDataset::new(
        DenseMatrix::from_rows(&rows)?,
        format!("gaussian control n={n} seed={seed}"),
    )
}

pub fn write_moms(path: &Path, moments: &Moments) -> Result<()> {
    let mut w = ByteWriter::default();
    w.bytes(b"MOMS");
    w.u32(VERSION);
    w.len_u32(moments.d(), "d")?;
    w.f64s(&moments.mean);
    w.f64s(moments.covariance.data());
    write_bytes_atomic(path, &w.buf)
}

pub fn read_moms(path: &Path) -> Result<Moments> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(b"MOMS")?;
    r.version(VERSION)?;
    let d = r.dim("d")?;
    let mean = r.f64s(d, "mean")?;
    let cov_at = r.offset();
    let cov = r.f64s(d * d, "covariance")?;
    r.finish()?;
    let cov = DenseMatrix::from_vec(d, d, cov)?;
    if cov.asymmetry() > SYMMETRY_TOLERANCE {
        return Err(r.error_at(cov_at, "covariance is not symmetric"));
    }
    Moments::new(mean, cov)
}
