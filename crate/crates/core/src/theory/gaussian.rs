use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::metrics::fvu;
use crate::rng::{item_rng, Stream};

/// Smallest FVU reachable on the identity target under `N(0, I_d/d)` by a
/// model whose first layer has rank at most `width`: `(d - width) / d`.
pub fn gaussian_identity_floor(d: usize, width: usize) -> f64 {
    if width >= d {
        0.0
    } else {
        (d - width) as f64 / d as f64
    }
}

/// `n` rows of `N(0, I_d/d)`; row `i` depends only on `(seed, i)`.
pub fn isotropic_gaussian(n: usize, d: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("need n >= 1 and d >= 1".into()));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, Stream::Isotropic, i as u64);
            (0..d)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    DenseMatrix::from_rows(&rows)
}

/// FVU of the linear map keeping the first `width` coordinates, as a
/// student for the identity on `n` samples of `N(0, I_d/d)`. It attains the
/// floor up to sampling error.
pub fn projection_witness_fvu(d: usize, width: usize, n: usize, seed: u64) -> Result<f64> {
    if d == 0 || n < 2 {
        return Err(Error::InvalidInput(
            "witness needs d >= 1 and n >= 2".into(),
        ));
    }
    let x = isotropic_gaussian(n, d, seed)?;
    let projected = DenseMatrix::from_fn(n, d, |i, j| if j < width { x[(i, j)] } else { 0.0 });
    fvu(&projected, &x)
}
