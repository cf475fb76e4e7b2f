//! Dictionaries of unit atoms and synthetic dictionary-sparse data.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, orthonormal_basis, DenseMatrix};
use crate::rng::{item_rng, Stream};

const UNIT_TOLERANCE: f64 = 1e-9;

/// `m` unit-norm atoms in `R^d`, stored as the rows of an `m x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DenseMatrix,
}

impl Dictionary {
    /// Wraps a matrix whose rows are already unit-norm.
    pub fn new(atoms: DenseMatrix) -> Result<Self> {
        if atoms.rows() == 0 || atoms.cols() == 0 {
            return Err(Error::InvalidInput(
                "dictionary needs m >= 1 and d >= 1".into(),
            ));
        }
        for i in 0..atoms.rows() {
            let n = norm(atoms.row(i));
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "dictionary atom {i} has norm {n}, expected 1"
                )));
            }
        }
        Ok(Self { atoms })
    }

    /// Normalizes every row of `atoms`.
    pub fn normalized(mut atoms: DenseMatrix) -> Result<Self> {
        for i in 0..atoms.rows() {
            let row = atoms.row_mut(i);
            let n = norm(row);
            if n == 0.0 {
                return Err(Error::InvalidInput(format!("dictionary atom {i} is zero")));
            }
            row.iter_mut().for_each(|x| *x /= n);
        }
        Self::new(atoms)
    }

    pub fn standard_basis(d: usize) -> Result<Self> {
        Self::new(DenseMatrix::identity(d))
    }

    /// Rows i.i.d. uniform on the unit sphere; atom `i` depends only on `(seed, i)`.
    pub fn random(m: usize, d: usize, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidInput(
                "dictionary needs m >= 1 and d >= 1".into(),
            ));
        }
        let mut atoms = DenseMatrix::zeros(m, d);
        for i in 0..m {
            let mut rng = item_rng(seed, Stream::Dictionary, i as u64);
            loop {
                let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&row);
                if n > 0.0 {
                    atoms
                        .row_mut(i)
                        .iter_mut()
                        .zip(&row)
                        .for_each(|(a, r)| *a = r / n);
                    break;
                }
            }
        }
        Self::new(atoms)
    }

    /// Random atoms orthonormalized in index order; requires `m <= d`.
    pub fn random_orthonormal(m: usize, d: usize, seed: u64) -> Result<Self> {
        if m > d {
            return Err(Error::InvalidInput(format!(
                "cannot orthonormalize {m} atoms in dimension {d}"
            )));
        }
        let raw = Self::random(m, d, seed)?;
        let rows: Vec<&[f64]> = (0..m).map(|i| raw.atom(i)).collect();
        let basis = orthonormal_basis(&rows, 1e-10);
        if basis.len() != m {
            return Err(Error::InvalidInput(
                "random atoms were rank-deficient".into(),
            ));
        }
        Self::new(DenseMatrix::from_rows(&basis)?)
    }

    pub fn m(&self) -> usize {
        self.atoms.rows()
    }

    pub fn d(&self) -> usize {
        self.atoms.cols()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        self.atoms.row(i)
    }

    pub fn atoms(&self) -> &DenseMatrix {
        &self.atoms
    }

    /// `sum_{i in active} v_i v_i^T x`.
    pub fn projector_sum(&self, active: &[usize], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        for &i in active {
            let v = self.atom(i);
            axpy(dot(v, x), v, &mut out);
        }
        out
    }

    /// Per-sample residual `ξ(x) = sum_{i in active} v_i v_i^T x - x`.
    pub fn projector_residual(&self, active: &[usize], x: &[f64]) -> Vec<f64> {
        let mut xi = self.projector_sum(active, x);
        axpy(-1.0, x, &mut xi);
        xi
    }

    /// Top-`k` atoms by `|v_i . x|`, ties toward the lower index, sorted.
    pub fn projection_gate(&self, x: &[f64], k: usize) -> Vec<usize> {
        let scores: Vec<f64> = (0..self.m()).map(|i| dot(self.atom(i), x).abs()).collect();
        let mut order: Vec<usize> = (0..self.m()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
        chosen.sort_unstable();
        chosen
    }
}

/// One data point together with the atoms it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSample {
    pub x: Vec<f64>,
    /// Sorted atom indices.
    pub active: Vec<usize>,
    /// Coefficient of each active atom, in `active` order.
    pub coefficients: Vec<f64>,
}

/// Sampled lower bound on the approximate-orthogonality constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub gamma_hat: f64,
    pub trials: usize,
    /// Subset and test vector attaining `gamma_hat`.
    pub worst_case: Option<(Vec<usize>, Vec<f64>)>,
}

/// Ratio `|sum v v^T x - z| / |z|` for one subset, with `z` the orthogonal
/// projection of `x` onto the span of the selected atoms. `None` when `|z|`
/// is negligible.
pub fn orthogonality_ratio(dict: &Dictionary, subset: &[usize], x: &[f64]) -> Option<f64> {
    let rows: Vec<&[f64]> = subset.iter().map(|&i| dict.atom(i)).collect();
    let basis = orthonormal_basis(&rows, 1e-10);
    let mut z = vec![0.0; dict.d()];
    for q in &basis {
        axpy(dot(q, x), q, &mut z);
    }
    let zn = norm(&z);
    if zn < 1e-12 {
        return None;
    }
    let mut diff = dict.projector_sum(subset, x);
    axpy(-1.0, &z, &mut diff);
    Some(norm(&diff) / zn)
}

/// Ratio, subset and test vector of one gamma trial.
type Trial = (f64, Vec<usize>, Vec<f64>);

/// Samples `trials` random `k`-subsets and Gaussian test vectors and returns
/// the largest orthogonality ratio seen. Trial `t` depends only on
/// `(seed, t)`, so the estimate is nondecreasing in `trials`.
pub fn measure_gamma(
    dict: &Dictionary,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    if k == 0 || k > dict.m() {
        return Err(Error::InvalidInput(format!(
            "k = {k} must be in 1..={}",
            dict.m()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let ratios: Vec<Option<Trial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = item_rng(seed, Stream::Gamma, t as u64);
            let mut subset = index::sample(&mut rng, dict.m(), k).into_vec();
            subset.sort_unstable();
            let x: Vec<f64> = (0..dict.d()).map(|_| rng.sample(StandardNormal)).collect();
            orthogonality_ratio(dict, &subset, &x).map(|r| (r, subset, x))
        })
        .collect();
    let mut best = GammaEstimate {
        gamma_hat: 0.0,
        trials,
        worst_case: None,
    };
    for (r, subset, x) in ratios.into_iter().flatten() {
        if best.worst_case.is_none() || r > best.gamma_hat {
            best.gamma_hat = r;
            best.worst_case = Some((subset, x));
        }
    }
    Ok(best)
}

/// Draws `n` samples, each from a uniform `k`-subset of atoms with standard
/// normal coefficients, rescaled to radius `u^(1/d)` for `u` uniform in
/// `(0, 1]`. Sample `i` depends only on `(seed, i)`.
pub fn generate_sparse_dataset(
    dict: &Dictionary,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<SparseSample>> {
    if k == 0 || k > dict.m() {
        return Err(Error::InvalidInput(format!(
            "k = {k} must be in 1..={}",
            dict.m()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let d = dict.d();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, Stream::SparseData, i as u64);
            loop {
                let mut active = index::sample(&mut rng, dict.m(), k).into_vec();
                active.sort_unstable();
                let mut coefficients: Vec<f64> =
                    active.iter().map(|_| rng.sample(StandardNormal)).collect();
                let u: f64 = 1.0 - rng.random::<f64>();
                let raw = combine(dict, &active, &coefficients);
                let raw_norm = norm(&raw);
                if raw_norm < 1e-12 {
                    continue;
                }
                let radius = u.powf(1.0 / d as f64);
                let scale = radius / raw_norm;
                coefficients.iter_mut().for_each(|c| *c *= scale);
                let mut x = combine(dict, &active, &coefficients);
                // rounding can push a radius-1 sample a few ulps outside the ball
                let xn = norm(&x);
                if xn > 1.0 {
                    let shrink = (1.0 - 4.0 * f64::EPSILON) / xn;
                    coefficients.iter_mut().for_each(|c| *c *= shrink);
                    x = combine(dict, &active, &coefficients);
                }
                assert!(norm(&x) <= 1.0, "sample {i} left the unit ball");
                return SparseSample {
                    x,
                    active,
                    coefficients,
                };
            }
        })
        .collect())
}

fn combine(dict: &Dictionary, active: &[usize], coefficients: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; dict.d()];
    for (&i, &c) in active.iter().zip(coefficients) {
        axpy(c, dict.atom(i), &mut x);
    }
    x
}

/// Stacks sample vectors into an `n x d` matrix and collects their active sets.
pub fn samples_to_matrix(samples: &[SparseSample]) -> (DenseMatrix, Vec<Vec<usize>>) {
    let d = samples.first().map_or(0, |s| s.x.len());
    let mut data = Vec::with_capacity(samples.len() * d);
    let mut active = Vec::with_capacity(samples.len());
    for s in samples {
        data.extend_from_slice(&s.x);
        active.push(s.active.clone());
    }
    (
        DenseMatrix::from_vec(samples.len(), d, data).expect("uniform sample length"),
        active,
    )
}
