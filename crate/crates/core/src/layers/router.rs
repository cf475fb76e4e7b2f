//! Linear top-k routing with a softmax over the kept scores.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::layers::mlp::gaussian_matrix;
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum RouterForm {
    /// Scores `R x` with `R` of shape `m x d`.
    Full(DenseMatrix),
    /// Scores `R1 (R2 x)` with `R1: m x d_proj`, `R2: d_proj x d`.
    LowRank { r1: DenseMatrix, r2: DenseMatrix },
    /// Active set supplied with each input.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Router {
    pub form: RouterForm,
    /// Inverse temperature; zero gives hard (uniform) gating.
    pub beta: f64,
    pub k: usize,
    /// Number of experts routed over.
    pub m: usize,
    /// Whether `beta` is a trainable parameter.
    pub train_beta: bool,
}

/// Selected experts (ascending) and their mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Router {
    pub fn new(form: RouterForm, m: usize, k: usize, beta: f64) -> Result<Self> {
        let r = Self {
            form,
            beta,
            k,
            m,
            train_beta: false,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn oracle(m: usize, k: usize) -> Self {
        Self {
            form: RouterForm::Oracle,
            beta: 0.0,
            k,
            m,
            train_beta: false,
        }
    }

    pub fn init_full(rng: &mut impl Rng, m: usize, d: usize, k: usize, beta: f64) -> Self {
        Self {
            form: RouterForm::Full(gaussian_matrix(rng, m, d)),
            beta,
            k,
            m,
            train_beta: false,
        }
    }

    pub fn init_low_rank(
        rng: &mut impl Rng,
        m: usize,
        d: usize,
        d_proj: usize,
        k: usize,
        beta: f64,
    ) -> Self {
        let r2 = gaussian_matrix(rng, d_proj, d);
        let r1 = gaussian_matrix(rng, m, d_proj);
        Self {
            form: RouterForm::LowRank { r1, r2 },
            beta,
            k,
            m,
            train_beta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.m {
            return Err(Error::InvalidInput(format!(
                "router k = {} must be in 1..={}",
                self.k, self.m
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "router beta = {} must be >= 0",
                self.beta
            )));
        }
        match &self.form {
            RouterForm::Full(r) => check_dim("router rows", self.m, r.rows()),
            RouterForm::LowRank { r1, r2 } => {
                check_dim("low-rank router rows", self.m, r1.rows())?;
                check_dim("low-rank router inner dimension", r1.cols(), r2.rows())
            }
            RouterForm::Oracle => Ok(()),
        }
    }

    /// Input dimension, when the form fixes one.
    pub fn d_in(&self) -> Option<usize> {
        match &self.form {
            RouterForm::Full(r) => Some(r.cols()),
            RouterForm::LowRank { r2, .. } => Some(r2.cols()),
            RouterForm::Oracle => None,
        }
    }

    pub fn d_proj(&self) -> Option<usize> {
        match &self.form {
            RouterForm::LowRank { r1, .. } => Some(r1.cols()),
            _ => None,
        }
    }

    /// Router scores and, for the low-rank form, the projection `R2 x`.
    pub fn scores(&self, x: &[f64]) -> Option<(Vec<f64>, Option<Vec<f64>>)> {
        match &self.form {
            RouterForm::Full(r) => Some((r.matvec(x), None)),
            RouterForm::LowRank { r1, r2 } => {
                let h = r2.matvec(x);
                Some((r1.matvec(&h), Some(h)))
            }
            RouterForm::Oracle => None,
        }
    }

    pub fn gate(&self, x: &[f64], active: Option<&[usize]>) -> Result<GateResult> {
        if let Some(d) = self.d_in() {
            check_dim("router input", d, x.len())?;
        }
        match self.scores(x) {
            Some((s, _)) => Ok(self.gate_from_scores(&s).0),
            None => self.oracle_gate(active),
        }
    }

    fn oracle_gate(&self, active: Option<&[usize]>) -> Result<GateResult> {
        let active = active.ok_or_else(|| {
            Error::InvalidInput("oracle routing needs a stored active set".into())
        })?;
        if active.is_empty() || active.len() > self.k {
            return Err(Error::InvalidInput(format!(
                "active set of size {} for k = {}",
                active.len(),
                self.k
            )));
        }
        let mut indices = active.to_vec();
        indices.sort_unstable();
        indices.dedup();
        if indices.len() != active.len() || indices.last().is_some_and(|&i| i >= self.m) {
            return Err(Error::InvalidInput(format!(
                "active set {active:?} is not a set of distinct experts below {}",
                self.m
            )));
        }
        let w = 1.0 / indices.len() as f64;
        Ok(GateResult {
            weights: vec![w; indices.len()],
            indices,
        })
    }

    /// Top-k (ties toward the lower index) followed by a softmax of
    /// `beta * score` over the kept entries. Also returns the kept scores in
    /// `indices` order.
    pub fn gate_from_scores(&self, scores: &[f64]) -> (GateResult, Vec<f64>) {
        let indices = top_k(scores, self.k);
        let kept: Vec<f64> = indices.iter().map(|&i| scores[i]).collect();
        let weights = if self.beta == 0.0 {
            vec![1.0 / indices.len() as f64; indices.len()]
        } else {
            softmax(&kept, self.beta)
        };
        (GateResult { indices, weights }, kept)
    }
}

/// Indices of the `k` largest scores, ties toward the lower index, returned
/// in ascending index order.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let cmp = |&a: &usize, &b: &usize| scores[b].total_cmp(&scores[a]).then(a.cmp(&b));
    let k = k.min(scores.len());
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Gap between the k-th and (k+1)-th largest score; infinite when `k >= m`.
pub fn top_k_margin(scores: &[f64], k: usize) -> f64 {
    if k >= scores.len() {
        return f64::INFINITY;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[k - 1] - sorted[k]
}

fn softmax(z: &[f64], beta: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (beta * (v - max)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn router_with_scores(m: usize, k: usize, beta: f64) -> Router {
        Router::new(RouterForm::Full(DenseMatrix::identity(m)), m, k, beta).unwrap()
    }

    #[test]
    fn hard_gate_is_uniform() {
        let r = router_with_scores(3, 2, 0.0);
        let g = r.gate(&[2.0, -1.0, 0.5], None).unwrap();
        assert_eq!(g.indices, vec![0, 2]);
        assert_eq!(g.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn equal_scores_give_uniform_weights() {
        let r = router_with_scores(4, 4, 3.0);
        let g = r.gate(&[0.7; 4], None).unwrap();
        assert_eq!(g.indices, vec![0, 1, 2, 3]);
        for w in g.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_softmax() {
        let r = router_with_scores(3, 2, 1.0);
        let g = r.gate(&[2f64.ln(), 0.0, -5.0], None).unwrap();
        assert_eq!(g.indices, vec![0, 1]);
        assert!((g.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.weights[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_break_toward_lower_index() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 3.0], 2), vec![1, 2]);
        assert_eq!(top_k(&[0.0; 5], 3), vec![0, 1, 2]);
    }

    #[test]
    fn oracle_gate_needs_active_set() {
        let r = Router::oracle(5, 2);
        assert!(matches!(
            r.gate(&[0.0; 3], None),
            Err(Error::InvalidInput(_))
        ));
        let g = r.gate(&[0.0; 3], Some(&[4, 1])).unwrap();
        assert_eq!(g.indices, vec![1, 4]);
        assert_eq!(g.weights, vec![0.5, 0.5]);
        assert!(r.gate(&[0.0; 3], Some(&[1, 1])).is_err());
        assert!(r.gate(&[0.0; 3], Some(&[5])).is_err());
    }

    #[test]
    fn margin_of_scores() {
        assert_eq!(top_k_margin(&[3.0, 1.0, 2.0], 1), 1.0);
        assert_eq!(top_k_margin(&[3.0, 1.0], 2), f64::INFINITY);
    }

    #[test]
    fn invalid_routers_are_rejected() {
        assert!(Router::new(RouterForm::Full(DenseMatrix::identity(3)), 3, 4, 0.0).is_err());
        assert!(Router::new(RouterForm::Full(DenseMatrix::identity(3)), 3, 1, -1.0).is_err());
        assert!(Router::new(RouterForm::Full(DenseMatrix::identity(3)), 2, 1, 0.0).is_err());
    }
}
