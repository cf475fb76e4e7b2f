use rayon::prelude::*;

use crate::dictionary::{Dictionary, SparseSample};
use crate::error::{check_dim, Error, Result};
use crate::layers::{Activation, MlpParams, MoeParams, Router};
use crate::linalg::{norm, DenseMatrix};
use crate::metrics::fvu;
use crate::theory::ConstructionReport;

/// The map `x -> A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTarget {
    pub a: DenseMatrix,
}

impl LinearTarget {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::NonFinite("linear target".into()));
        }
        Ok(Self { a })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }
}

/// One single-neuron identity expert per atom, `f_i(x) = k A v_i v_i^T x`,
/// under a hard oracle router over the stored active sets.
pub fn build_linear_moe(target: &LinearTarget, dict: &Dictionary, k: usize) -> Result<MoeParams> {
    check_dim("linear target input dimension", dict.d(), target.a.cols())?;
    let experts = (0..dict.m())
        .map(|i| {
            let v = dict.atom(i);
            let c: Vec<f64> = target.a.matvec(v).iter().map(|a| k as f64 * a).collect();
            MlpParams::plain(
                DenseMatrix::column(&c),
                DenseMatrix::row_vector(v),
                Activation::Identity,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MoeParams::new(experts, Router::oracle(dict.m(), k), None)
}

/// Checks `f_MoE(x) - A x = A ξ(x)` and `|f_MoE(x) - A x| <= |A|_2 |ξ(x)|`
/// on every sample.
pub fn verify_linear_construction(
    moe: &MoeParams,
    target: &LinearTarget,
    dict: &Dictionary,
    samples: &[SparseSample],
) -> Result<ConstructionReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("verification needs samples".into()));
    }
    let op_norm = target.a.spectral_norm();
    let per_sample: Vec<SampleCheck> = samples
        .par_iter()
        .map(|s| {
            let y = moe.forward(&s.x, Some(&s.active))?;
            let want = target.apply(&s.x);
            let resid: Vec<f64> = y.iter().zip(&want).map(|(a, b)| a - b).collect();
            let xi = dict.projector_residual(&s.active, &s.x);
            let predicted = target.apply(&xi);
            let violation = resid
                .iter()
                .zip(&predicted)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let rn = norm(&resid);
            let bound_ok = rn <= op_norm * norm(&xi) * (1.0 + 1e-9) + 1e-12;
            Ok((y, want, rn, violation, bound_ok))
        })
        .collect::<Result<_>>()?;
    summarize(moe, per_sample)
}

/// Per-sample output, target, residual norm, identity violation and whether
/// the norm bound held.
pub(crate) type SampleCheck = (Vec<f64>, Vec<f64>, f64, f64, bool);

pub(crate) fn summarize(
    moe: &MoeParams,
    per_sample: Vec<SampleCheck>,
) -> Result<ConstructionReport> {
    let n = per_sample.len();
    let mut max_residual: f64 = 0.0;
    let mut violation: f64 = 0.0;
    let mut bound_violations = 0;
    let mut predicted = Vec::with_capacity(n);
    let mut reference = Vec::with_capacity(n);
    for (y, want, rn, v, ok) in per_sample {
        max_residual = max_residual.max(rn);
        violation = violation.max(v);
        bound_violations += usize::from(!ok);
        predicted.push(y);
        reference.push(want);
    }
    Ok(ConstructionReport {
        samples: n,
        max_residual,
        residual_identity_violation: violation,
        bound_violations,
        active_neurons: moe.active_neurons(),
        fvu: fvu(
            &DenseMatrix::from_rows(&predicted)?,
            &DenseMatrix::from_rows(&reference)?,
        )?,
    })
}
