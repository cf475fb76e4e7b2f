//! Exact gradients of the batch mean squared error.
//!
//! Top-k selection is treated as locally constant: gradients reach the
//! router only through the softmax weights of the selected experts.
//!
//! Per-sample gradients are summed sequentially inside fixed chunks of
//! [`REDUCTION_CHUNK`] samples, and the chunk sums are combined by a pairwise
//! tree over the chunk list. The layout depends only on the batch, so the
//! result is bit-identical for any number of worker threads.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::layers::{Model, MoeParams, Parameters, RouterForm};
use crate::linalg::{axpy, dot, DenseMatrix};

pub const REDUCTION_CHUNK: usize = 64;

/// Inputs, targets and optional per-row active sets.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a DenseMatrix,
    pub targets: &'a DenseMatrix,
    pub active: Option<&'a [Vec<usize>]>,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a DenseMatrix, targets: &'a DenseMatrix) -> Self {
        Self {
            inputs,
            targets,
            active: None,
        }
    }

    pub fn with_active(mut self, active: &'a [Vec<usize>]) -> Self {
        self.active = Some(active);
        self
    }

    fn active_row(&self, i: usize) -> Option<&'a [usize]> {
        self.active.map(|a| a[i].as_slice())
    }
}

/// Loss `mean_i |f(x_i) - y_i|^2` over the listed rows and its gradient.
pub fn backward_rows(model: &Model, batch: Batch<'_>, rows: &[usize]) -> Result<(f64, Model)> {
    check_dim("batch targets", batch.inputs.rows(), batch.targets.rows())?;
    check_dim("model input", model.d_in(), batch.inputs.cols())?;
    check_dim("model output", model.d_out(), batch.targets.cols())?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let scale = 2.0 / rows.len() as f64;
    let partials: Result<Vec<(f64, Model)>> = rows
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut grad = model.zeros_like();
            let mut sq = 0.0;
            for &i in chunk {
                sq += accumulate_sample(
                    model,
                    batch.inputs.row(i),
                    batch.targets.row(i),
                    batch.active_row(i),
                    scale,
                    &mut grad,
                )?;
            }
            Ok((sq, grad))
        })
        .collect();
    let (sq, grad) = pairwise_reduce(partials?);
    Ok((sq / rows.len() as f64, grad))
}

/// [`backward_rows`] over the whole batch.
pub fn backward(model: &Model, batch: Batch<'_>) -> Result<(f64, Model)> {
    let rows: Vec<usize> = (0..batch.inputs.rows()).collect();
    backward_rows(model, batch, &rows)
}

fn pairwise_reduce(mut parts: Vec<(f64, Model)>) -> (f64, Model) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((mut sa, mut ga)) = it.next() {
            if let Some((sb, gb)) = it.next() {
                sa += sb;
                ga.add_assign(&gb);
            }
            next.push((sa, ga));
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Adds the gradient of `(scale / 2) |f(x) - t|^2` into `grad` and returns
/// `|f(x) - t|^2`.
fn accumulate_sample(
    model: &Model,
    x: &[f64],
    target: &[f64],
    active: Option<&[usize]>,
    scale: f64,
    grad: &mut Model,
) -> Result<f64> {
    match (model, grad) {
        (Model::Mlp(p), Model::Mlp(g)) => {
            let cache = p.forward_cached(x);
            let resid: Vec<f64> = cache.out.iter().zip(target).map(|(a, b)| a - b).collect();
            let g_out: Vec<f64> = resid.iter().map(|r| scale * r).collect();
            p.accumulate_gradient(x, &cache, &g_out, g);
            Ok(dot(&resid, &resid))
        }
        (Model::Moe(p), Model::Moe(g)) => moe_sample(p, x, target, active, scale, g),
        _ => unreachable!("gradient has the model's variant"),
    }
}

fn moe_sample(
    p: &MoeParams,
    x: &[f64],
    target: &[f64],
    active: Option<&[usize]>,
    scale: f64,
    grad: &mut MoeParams,
) -> Result<f64> {
    let scored = p.router.scores(x);
    let (gate, kept) = match &scored {
        Some((s, _)) => {
            let (g, kept) = p.router.gate_from_scores(s);
            (g, Some(kept))
        }
        None => (p.router.gate(x, active)?, None),
    };

    let shared_cache = p.shared.as_ref().map(|s| s.forward_cached(x));
    let mut y = match &shared_cache {
        Some(c) => c.out.clone(),
        None => vec![0.0; p.d_out()],
    };
    let caches: Vec<_> = gate
        .indices
        .iter()
        .map(|&i| p.experts[i].forward_cached(x))
        .collect();
    for (c, &w) in caches.iter().zip(&gate.weights) {
        axpy(w, &c.out, &mut y);
    }

    let resid: Vec<f64> = y.iter().zip(target).map(|(a, b)| a - b).collect();
    let g_y: Vec<f64> = resid.iter().map(|r| scale * r).collect();

    if let (Some(s), Some(c), Some(gs)) = (&p.shared, &shared_cache, grad.shared.as_mut()) {
        s.accumulate_gradient(x, c, &g_y, gs);
    }

    let mut g_weight = Vec::with_capacity(caches.len());
    for ((&i, c), &w) in gate.indices.iter().zip(&caches).zip(&gate.weights) {
        g_weight.push(dot(&g_y, &c.out));
        let g_e: Vec<f64> = g_y.iter().map(|v| w * v).collect();
        p.experts[i].accumulate_gradient(x, c, &g_e, &mut grad.experts[i]);
    }

    if let (Some((_, proj)), Some(kept)) = (&scored, &kept) {
        let mean: f64 = gate.weights.iter().zip(&g_weight).map(|(w, a)| w * a).sum();
        let centered: Vec<f64> = g_weight.iter().map(|a| a - mean).collect();
        if p.router.train_beta {
            grad.router.beta += gate
                .weights
                .iter()
                .zip(kept)
                .zip(&centered)
                .map(|((w, s), c)| w * s * c)
                .sum::<f64>();
        }
        if p.router.beta != 0.0 {
            let g_score: Vec<f64> = gate
                .weights
                .iter()
                .zip(&centered)
                .map(|(w, c)| p.router.beta * w * c)
                .collect();
            router_scores_backward(p, &gate.indices, &g_score, x, proj.as_deref(), grad);
        }
    }
    Ok(dot(&resid, &resid))
}

fn router_scores_backward(
    p: &MoeParams,
    indices: &[usize],
    g_score: &[f64],
    x: &[f64],
    proj: Option<&[f64]>,
    grad: &mut MoeParams,
) {
    match (&p.router.form, &mut grad.router.form) {
        (RouterForm::Full(_), RouterForm::Full(gr)) => {
            for (&i, &gs) in indices.iter().zip(g_score) {
                axpy(gs, x, gr.row_mut(i));
            }
        }
        (RouterForm::LowRank { r1, .. }, RouterForm::LowRank { r1: g1, r2: g2 }) => {
            let h = proj.expect("low-rank scores keep the projection");
            let mut g_h = vec![0.0; r1.cols()];
            for (&i, &gs) in indices.iter().zip(g_score) {
                axpy(gs, h, g1.row_mut(i));
                axpy(gs, r1.row(i), &mut g_h);
            }
            for (j, &gh) in g_h.iter().enumerate() {
                if gh != 0.0 {
                    axpy(gh, x, g2.row_mut(j));
                }
            }
        }
        _ => {}
    }
}

/// Mean squared error of a model on a batch, without gradients.
pub fn batch_loss(model: &Model, batch: Batch<'_>) -> Result<f64> {
    let n = batch.inputs.rows();
    let errs: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = model.forward(batch.inputs.row(i), batch.active_row(i))?;
            Ok(y.iter()
                .zip(batch.targets.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum())
        })
        .collect();
    Ok(errs?.iter().sum::<f64>() / n as f64)
}
