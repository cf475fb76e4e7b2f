use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dictionary::{Dictionary, SparseSample};
use crate::error::{check_dim, Error, Result};
use crate::layers::{Activation, MlpParams, MoeParams, Router};
use crate::linalg::{
    norm, symmetrized_decomposition, DenseMatrix, DenseTensor, LastSymmetricDecomposition,
    RankDecomposition,
};
use crate::rng::{item_rng, Stream};
use crate::theory::linear::summarize;
use crate::theory::ConstructionReport;

const DECOMPOSITION_TOLERANCE: f64 = 1e-9;

/// Degree-`p` map `f(x)_{j1} = sum A[j1, j2, .., j(p+1)] x_{j2} .. x_{j(p+1)}`
/// together with a rank decomposition of `A v_i` for every atom `v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialTarget {
    pub a: DenseTensor,
    pub p: usize,
    /// Largest allowed rank of a per-atom decomposition.
    pub r: usize,
    pub per_atom: Vec<RankDecomposition>,
}

impl PolynomialTarget {
    pub fn new(
        a: DenseTensor,
        per_atom: Vec<RankDecomposition>,
        r: usize,
        dict: &Dictionary,
    ) -> Result<Self> {
        if a.order() < 2 {
            return Err(Error::InvalidInput(
                "polynomial target needs order >= 2".into(),
            ));
        }
        let t = Self {
            p: a.order() - 1,
            a,
            r,
            per_atom,
        };
        t.validate(dict)?;
        Ok(t)
    }

    /// `A = sum_{t<r} a_t^1 ⊗ .. ⊗ a_t^(p+1)` with factors i.i.d.
    /// `N(0, 1/d)`. Then `A v_i = sum_t (a_t^(p+1) . v_i) a_t^1 ⊗ .. ⊗ a_t^p`
    /// has rank at most `r` and its decomposition is exact by construction.
    pub fn planted(dict: &Dictionary, p: usize, r: usize, seed: u64) -> Result<Self> {
        if p == 0 || r == 0 {
            return Err(Error::InvalidInput(
                "planted target needs p >= 1 and r >= 1".into(),
            ));
        }
        let d = dict.d();
        let scale = 1.0 / (d as f64).sqrt();
        let factors: Vec<Vec<Vec<f64>>> = (0..r)
            .map(|t| {
                let mut rng = item_rng(seed, Stream::Planted, t as u64);
                (0..=p)
                    .map(|_| {
                        (0..d)
                            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let a = RankDecomposition::new(p + 1, d, factors.clone())?.materialize();
        let per_atom = (0..dict.m())
            .map(|i| {
                let v = dict.atom(i);
                let terms = factors
                    .iter()
                    .map(|f| {
                        let c: f64 = f[p].iter().zip(v).map(|(a, b)| a * b).sum();
                        let mut head = f[..p].to_vec();
                        head[0].iter_mut().for_each(|x| *x *= c);
                        head
                    })
                    .collect();
                RankDecomposition::new(p, d, terms)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(a, per_atom, r, dict)
    }

    /// Rejects decompositions that exceed rank `r` or do not reproduce
    /// `A v_i` to `1e-9` (relative to the largest entry, floored at 1).
    pub fn validate(&self, dict: &Dictionary) -> Result<()> {
        check_dim("polynomial target dimension", dict.d(), self.a.dim())?;
        check_dim(
            "per-atom decomposition count",
            dict.m(),
            self.per_atom.len(),
        )?;
        for (i, b) in self.per_atom.iter().enumerate() {
            if b.rank() > self.r {
                return Err(Error::InvalidInput(format!(
                    "decomposition for atom {i} has rank {} > r = {}",
                    b.rank(),
                    self.r
                )));
            }
            check_dim("per-atom decomposition order", self.p, b.order())?;
            let want = self.a.tensor_vector_product(dict.atom(i))?;
            let got = b.materialize();
            let scale = want.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let err = got.max_abs_diff(&want);
            if err > DECOMPOSITION_TOLERANCE * scale {
                return Err(Error::InvalidInput(format!(
                    "decomposition for atom {i} differs from A v_i by {err:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.a.apply(x)
    }
}

/// Largest expert width the construction may use: `p! * p^(p-1) * r`.
pub fn width_cap(p: usize, r: usize) -> usize {
    let factorial: usize = (1..=p).product();
    factorial * p.pow(p.saturating_sub(1) as u32) * r
}

/// Bias-free MLP `x -> scale * sum_t w_t (u_t . x)^n` computing the
/// contraction of a last-symmetric tensor with `x^{⊗n}`.
pub fn power_mlp(decomp: &LastSymmetricDecomposition, scale: f64) -> Result<MlpParams> {
    let n = decomp.order() - 1;
    let activation = if n == 1 {
        Activation::Identity
    } else {
        Activation::Power(n as u32)
    };
    let width = decomp.rank();
    let d = decomp.dim();
    let mut w_in = DenseMatrix::zeros(width, d);
    let mut w_out = DenseMatrix::zeros(d, width);
    for (t, (w, u)) in decomp.terms().iter().enumerate() {
        w_in.row_mut(t).copy_from_slice(u);
        for (j, wj) in w.iter().enumerate() {
            w_out.data_mut()[j * width + t] = scale * wj;
        }
    }
    MlpParams::plain(w_out, w_in, activation)
}

/// [`power_mlp`] applied to the tail symmetrization of a rank decomposition.
pub fn power_mlp_from_rank(b: &RankDecomposition) -> Result<MlpParams> {
    power_mlp(&symmetrized_decomposition(b)?, 1.0)
}

/// One power-activation expert per atom computing
/// `f_i(x) = k ((A v_i) ⊗ v_i)(x, .., x)`, zero-padded to a common width,
/// under a hard oracle router.
pub fn build_polynomial_moe(
    target: &PolynomialTarget,
    dict: &Dictionary,
    k: usize,
) -> Result<MoeParams> {
    target.validate(dict)?;
    let experts = target
        .per_atom
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let c = b.extend_last(dict.atom(i))?;
            power_mlp(&symmetrized_decomposition(&c)?, k as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let width = experts
        .iter()
        .map(MlpParams::d_hidden)
        .max()
        .unwrap_or(0)
        .max(1);
    let experts = experts.into_iter().map(|e| pad_width(e, width)).collect();
    MoeParams::new(experts, Router::oracle(dict.m(), k), None)
}

fn pad_width(e: MlpParams, width: usize) -> MlpParams {
    let h = e.d_hidden();
    if h == width {
        return e;
    }
    let w_in = DenseMatrix::from_fn(
        width,
        e.d_in(),
        |i, j| if i < h { e.w_in[(i, j)] } else { 0.0 },
    );
    let w_out = DenseMatrix::from_fn(
        e.d_out(),
        width,
        |i, j| if j < h { e.w_out[(i, j)] } else { 0.0 },
    );
    MlpParams { w_in, w_out, ..e }
}

/// Checks `f_MoE(x) - f*(x) = A(x, .., x, ξ(x))` on every sample.
pub fn verify_polynomial_construction(
    moe: &MoeParams,
    target: &PolynomialTarget,
    dict: &Dictionary,
    samples: &[SparseSample],
) -> Result<ConstructionReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("verification needs samples".into()));
    }
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let y = moe.forward(&s.x, Some(&s.active))?;
            let want = target.apply(&s.x)?;
            let resid: Vec<f64> = y.iter().zip(&want).map(|(a, b)| a - b).collect();
            let xi = dict.projector_residual(&s.active, &s.x);
            let mut slots: Vec<&[f64]> = vec![&s.x; target.p - 1];
            slots.push(&xi);
            let predicted = target.a.contract_tail(&slots)?;
            let violation = resid
                .iter()
                .zip(&predicted)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            Ok((y, want, norm(&resid), violation, true))
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(moe, per_sample)
}
