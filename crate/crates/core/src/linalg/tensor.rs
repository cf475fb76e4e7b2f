//! Small dense tensors over `(R^d)^{⊗order}` and their rank decompositions.
//!
//! Slot 0 is the output slot; the remaining `order - 1` slots are the ones
//! contracted against inputs when a tensor defines a homogeneous polynomial
//! map `[f(x)]_{j0} = sum A[j0, j1, .., jp] x[j1] .. x[jp]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::matrix::{axpy, norm, DenseMatrix};
use crate::rng::{item_rng, Stream};

/// Dense tensor of a given order with every slot of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn from_vec(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput(
                "tensor order must be at least 1".into(),
            ));
        }
        check_dim("tensor data length", dim.pow(order as u32), data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Self { order, dim, data })
    }

    pub fn from_matrix(m: &DenseMatrix) -> Result<Self> {
        check_dim("square matrix as order-2 tensor", m.rows(), m.cols())?;
        Self::from_vec(2, m.rows(), m.data().to_vec())
    }

    /// Outer product `v_0 ⊗ v_1 ⊗ ..`.
    pub fn outer(factors: &[&[f64]]) -> Result<Self> {
        let dim = factors
            .first()
            .map(|f| f.len())
            .ok_or_else(|| Error::InvalidInput("outer product of zero factors".into()))?;
        for f in factors {
            check_dim("outer product factor length", dim, f.len())?;
        }
        let mut t = Self::zeros(factors.len(), dim);
        t.add_outer(1.0, factors);
        Ok(t)
    }

    /// `self += alpha * v_0 ⊗ v_1 ⊗ ..` (factor lengths must equal `dim`).
    pub fn add_outer(&mut self, alpha: f64, factors: &[&[f64]]) {
        debug_assert_eq!(factors.len(), self.order);
        let mut idx = vec![0usize; self.order];
        for cell in self.data.iter_mut() {
            let mut p = alpha;
            for (f, &j) in factors.iter().zip(&idx) {
                p *= f[j];
            }
            *cell += p;
            increment(&mut idx, self.dim);
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &j| acc * self.dim + j)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Relative Frobenius distance `|self - other| / max(|other|, tiny)`.
    pub fn relative_error(&self, other: &DenseTensor) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diff / other.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    /// Contraction along the last slot: `[Av]_{j0..j(p-1)} = sum_jp A[j0..jp] v[jp]`.
    pub fn tensor_vector_product(&self, v: &[f64]) -> Result<DenseTensor> {
        if self.order < 2 {
            return Err(Error::InvalidInput(
                "tensor-vector product needs order >= 2".into(),
            ));
        }
        check_dim("tensor-vector product", self.dim, v.len())?;
        let data = self
            .data
            .chunks_exact(self.dim)
            .map(|fiber| fiber.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        Ok(DenseTensor {
            order: self.order - 1,
            dim: self.dim,
            data,
        })
    }

    /// Evaluates the polynomial map: contracts every slot but the first with `x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut t = self.clone();
        while t.order > 1 {
            t = t.tensor_vector_product(x)?;
        }
        Ok(t.data)
    }

    /// Contracts slots `1..order` with `vectors[0..]`, leaving slot 0 free.
    pub fn contract_tail(&self, vectors: &[&[f64]]) -> Result<Vec<f64>> {
        check_dim(
            "tail contraction vector count",
            self.order - 1,
            vectors.len(),
        )?;
        let mut t = self.clone();
        for v in vectors.iter().rev() {
            t = t.tensor_vector_product(v)?;
        }
        Ok(t.data)
    }

    /// Full multilinear form `sum A[j0..jp] v0[j0] .. vp[jp]`.
    pub fn multilinear(&self, vectors: &[&[f64]]) -> Result<f64> {
        check_dim("multilinear form vector count", self.order, vectors.len())?;
        let head = self.contract_tail(&vectors[1..])?;
        Ok(head.iter().zip(vectors[0]).map(|(a, b)| a * b).sum())
    }

    /// Contraction of every slot except `skip`, returning a vector over `skip`.
    fn contract_except(&self, vectors: &[Vec<f64>], skip: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut idx = vec![0usize; self.order];
        for &a in &self.data {
            if a != 0.0 {
                let mut p = a;
                for (s, &j) in idx.iter().enumerate() {
                    if s != skip {
                        p *= vectors[s][j];
                    }
                }
                out[idx[skip]] += p;
            }
            increment(&mut idx, self.dim);
        }
        out
    }

    /// Tensor with its slots permuted: `out[idx] = self[idx ∘ perm]`, i.e.
    /// output slot `s` reads input slot `perm[s]`.
    pub fn permute_slots(&self, perm: &[usize]) -> DenseTensor {
        debug_assert_eq!(perm.len(), self.order);
        let mut out = DenseTensor::zeros(self.order, self.dim);
        let mut idx = vec![0usize; self.order];
        let mut src = vec![0usize; self.order];
        for cell in out.data.iter_mut() {
            for (s, &p) in perm.iter().enumerate() {
                src[p] = idx[s];
            }
            *cell = self.data[self.flat(&src)];
            increment(&mut idx, self.dim);
        }
        out
    }

    /// Average over all permutations of slots `1..order`.
    pub fn symmetrize_last(&self) -> DenseTensor {
        let tail: Vec<usize> = (1..self.order).collect();
        let perms = permutations(&tail);
        let mut out = DenseTensor::zeros(self.order, self.dim);
        let scale = 1.0 / perms.len() as f64;
        for tail_perm in &perms {
            let mut perm = vec![0usize];
            perm.extend_from_slice(tail_perm);
            let permuted = self.permute_slots(&perm);
            for (o, v) in out.data.iter_mut().zip(&permuted.data) {
                *o += scale * v;
            }
        }
        out
    }

    /// Largest entrywise change under a transposition of two adjacent slots
    /// among the trailing `slots` slots. Adjacent transpositions generate the
    /// symmetric group, so zero defect means full symmetry.
    pub fn symmetry_defect(&self, slots: usize) -> f64 {
        let first = self.order - slots.min(self.order);
        let mut worst: f64 = 0.0;
        for s in first..self.order.saturating_sub(1) {
            let mut perm: Vec<usize> = (0..self.order).collect();
            perm.swap(s, s + 1);
            worst = worst.max(self.permute_slots(&perm).max_abs_diff(self));
        }
        worst
    }

    /// Lower bound on the operator norm by alternating maximization over unit
    /// vectors from `restarts` random starts. Restart `i` always uses the same
    /// stream, so more restarts never lower the estimate.
    pub fn operator_norm_estimate(&self, restarts: usize, iters: usize, seed: u64) -> f64 {
        let mut best: f64 = 0.0;
        for restart in 0..restarts.max(1) {
            let mut rng = item_rng(seed, Stream::OperatorNorm, restart as u64);
            let mut vs: Vec<Vec<f64>> = (0..self.order)
                .map(|_| {
                    let mut v: Vec<f64> =
                        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                    let n = norm(&v).max(f64::MIN_POSITIVE);
                    v.iter_mut().for_each(|x| *x /= n);
                    v
                })
                .collect();
            let mut value = 0.0;
            for _ in 0..iters.max(1) {
                let mut last_norm = 0.0;
                for s in 0..self.order {
                    let g = self.contract_except(&vs, s);
                    let n = norm(&g);
                    last_norm = n;
                    if n == 0.0 {
                        break;
                    }
                    vs[s] = g.into_iter().map(|x| x / n).collect();
                }
                let converged = (last_norm - value).abs() <= 1e-15 * last_norm.max(1.0);
                value = last_norm;
                if converged {
                    break;
                }
            }
            best = best.max(value);
        }
        best
    }
}

/// Advances a row-major multi-index, last slot fastest.
fn increment(idx: &mut [usize], dim: usize) {
    for j in idx.iter_mut().rev() {
        *j += 1;
        if *j < dim {
            return;
        }
        *j = 0;
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Sum of rank-one terms; term `i` holds one factor vector per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDecomposition {
    order: usize,
    dim: usize,
    terms: Vec<Vec<Vec<f64>>>,
}

impl RankDecomposition {
    pub fn new(order: usize, dim: usize, terms: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput(
                "decomposition order must be at least 1".into(),
            ));
        }
        for term in &terms {
            check_dim("factors per rank-one term", order, term.len())?;
            for f in term {
                check_dim("factor vector length", dim, f.len())?;
            }
        }
        Ok(Self { order, dim, terms })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Vec<Vec<f64>>] {
        &self.terms
    }

    pub fn materialize(&self) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.order, self.dim);
        for term in &self.terms {
            let refs: Vec<&[f64]> = term.iter().map(Vec::as_slice).collect();
            t.add_outer(1.0, &refs);
        }
        t
    }

    /// Appends `v` as a new last factor of every term (rank is unchanged).
    pub fn extend_last(&self, v: &[f64]) -> Result<RankDecomposition> {
        check_dim("appended factor length", self.dim, v.len())?;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.push(v.to_vec());
                t
            })
            .collect();
        Ok(RankDecomposition {
            order: self.order + 1,
            dim: self.dim,
            terms,
        })
    }
}

/// Sum of terms `w_i ⊗ u_i^{⊗(order-1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LastSymmetricDecomposition {
    order: usize,
    dim: usize,
    terms: Vec<(Vec<f64>, Vec<f64>)>,
}

impl LastSymmetricDecomposition {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.terms
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn materialize(&self) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.order, self.dim);
        for (w, u) in &self.terms {
            let mut factors: Vec<&[f64]> = vec![w];
            factors.extend(std::iter::repeat_n(u.as_slice(), self.order - 1));
            t.add_outer(1.0, &factors);
        }
        t
    }
}

/// Per-term cap on last-symmetric terms for a tensor of the given order:
/// `order^(order-1)`.
pub fn symmetric_rank_factor(order: usize) -> usize {
    order.pow(order.saturating_sub(1) as u32)
}

/// Coefficients `c_1..c_n` on the nodes `1..n` that extract the linear
/// coefficient of a polynomial of degree below `n`: `sum_i c_i i^j = δ_{j1}`
/// for `0 <= j < n`. With a single node the polynomial is linear and
/// homogeneous, so `c = [1]`.
pub fn interpolation_coefficients(n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::InvalidInput(
            "need at least one interpolation node".into(),
        )),
        1 => Ok(vec![1.0]),
        _ => {
            let vandermonde = DenseMatrix::from_fn(n, n, |j, i| ((i + 1) as f64).powi(j as i32));
            let rhs: Vec<f64> = (0..n).map(|j| if j == 1 { 1.0 } else { 0.0 }).collect();
            vandermonde.solve(&rhs)
        }
    }
}

/// Rewrites `v ⊗ sym(u_1, .., u_n)` (the average over orderings of the `u`s)
/// as a sum of terms `w ⊗ u^{⊗n}` by iterated interpolation of
/// `v ⊗ (sum_j t_j u_j)^{⊗n}` at the integer nodes `t_j ∈ {1..n}`.
pub fn symmetric_tail_terms(v: &[f64], us: &[&[f64]]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = us.len();
    if n == 0 {
        return Err(Error::InvalidInput(
            "symmetric tail needs at least one factor".into(),
        ));
    }
    if us.iter().all(|u| *u == us[0]) {
        return Ok(vec![(v.to_vec(), us[0].to_vec())]);
    }
    let coeffs = interpolation_coefficients(n)?;
    let norm_const = factorial(n);
    let mut out = Vec::with_capacity(n.pow(n as u32));
    let mut nodes = vec![0usize; n];
    loop {
        let weight: f64 = nodes.iter().map(|&t| coeffs[t]).product::<f64>() / norm_const;
        if weight != 0.0 {
            let mut u = vec![0.0; v.len()];
            for (&t, uj) in nodes.iter().zip(us) {
                axpy((t + 1) as f64, uj, &mut u);
            }
            out.push((v.iter().map(|x| x * weight).collect(), u));
        }
        let mut carry = true;
        for t in nodes.iter_mut().rev() {
            *t += 1;
            if *t < n {
                carry = false;
                break;
            }
            *t = 0;
        }
        if carry {
            break;
        }
    }
    Ok(out)
}

/// Converts a rank decomposition of a tensor that is symmetric in its last
/// `order - 1` slots into a last-symmetric decomposition with at most
/// `symmetric_rank_factor(order) * rank` terms.
///
/// `tolerance` bounds the symmetry defect relative to the largest entry.
pub fn last_symmetric_decompose(
    b: &RankDecomposition,
    tolerance: f64,
) -> Result<LastSymmetricDecomposition> {
    if b.order < 2 {
        return Err(Error::InvalidInput(
            "last-symmetric decomposition needs order >= 2".into(),
        ));
    }
    let dense = b.materialize();
    let scale = dense.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let defect = dense.symmetry_defect(b.order - 1);
    if defect > tolerance * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric {
            slots: b.order - 1,
            defect,
            tolerance,
        });
    }
    symmetrized_decomposition(b)
}

/// Last-symmetric decomposition of the symmetrization of `b` over its last
/// `order - 1` slots. The result agrees with `b` on every contraction
/// against `x^{⊗(order-1)}`, whether or not `b` itself is symmetric.
pub fn symmetrized_decomposition(b: &RankDecomposition) -> Result<LastSymmetricDecomposition> {
    if b.order < 2 {
        return Err(Error::InvalidInput(
            "last-symmetric decomposition needs order >= 2".into(),
        ));
    }
    let mut terms = Vec::new();
    for term in &b.terms {
        let tail: Vec<&[f64]> = term[1..].iter().map(Vec::as_slice).collect();
        terms.extend(symmetric_tail_terms(&term[0], &tail)?);
    }
    Ok(LastSymmetricDecomposition {
        order: b.order,
        dim: b.dim,
        terms,
    })
}
