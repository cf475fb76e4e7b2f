use crate::error::Result;
use crate::layers::{MlpParams, MoeParams, Router, RouterForm};
use crate::linalg::DenseMatrix;

/// Either architecture, as trained or used as a teacher.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(MlpParams),
    Moe(MoeParams),
}

impl Model {
    pub fn d_in(&self) -> usize {
        match self {
            Model::Mlp(p) => p.d_in(),
            Model::Moe(p) => p.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            Model::Mlp(p) => p.d_out(),
            Model::Moe(p) => p.d_out(),
        }
    }

    pub fn active_neurons(&self) -> usize {
        match self {
            Model::Mlp(p) => p.d_hidden(),
            Model::Moe(p) => p.active_neurons(),
        }
    }

    pub fn forward(&self, x: &[f64], active: Option<&[usize]>) -> Result<Vec<f64>> {
        match self {
            Model::Mlp(p) => p.forward(x),
            Model::Moe(p) => p.forward(x, active),
        }
    }

    /// Row-by-row outputs for an `n x d_in` batch.
    pub fn forward_batch(
        &self,
        x: &DenseMatrix,
        active: Option<&[Vec<usize>]>,
    ) -> Result<DenseMatrix> {
        use rayon::prelude::*;
        let rows: Result<Vec<Vec<f64>>> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.forward(x.row(i), active.map(|a| a[i].as_slice())))
            .collect();
        let rows = rows?;
        let mut data = Vec::with_capacity(x.rows() * self.d_out());
        for r in rows {
            data.extend(r);
        }
        DenseMatrix::from_vec(x.rows(), self.d_out(), data)
    }
}

/// Uniform view of every trainable scalar as a list of slices. A gradient
/// has the same type and slice layout as the parameters it belongs to.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Flattened copy of all trainable values.
    fn flatten(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    /// `self += other`, slice by slice.
    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self
            .param_slices_mut()
            .into_iter()
            .zip(other.param_slices())
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl Parameters for MlpParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        self.slices(&mut v);
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        self.slices_mut(&mut v);
        v
    }

    fn zeros_like(&self) -> Self {
        MlpParams::zeros_like(self)
    }
}

impl Parameters for Router {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = match &self.form {
            RouterForm::Full(r) => vec![r.data()],
            RouterForm::LowRank { r1, r2 } => vec![r1.data(), r2.data()],
            RouterForm::Oracle => vec![],
        };
        if self.train_beta {
            v.push(std::slice::from_ref(&self.beta));
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = match &mut self.form {
            RouterForm::Full(r) => vec![r.data_mut()],
            RouterForm::LowRank { r1, r2 } => vec![r1.data_mut(), r2.data_mut()],
            RouterForm::Oracle => vec![],
        };
        if self.train_beta {
            v.push(std::slice::from_mut(&mut self.beta));
        }
        v
    }

    fn zeros_like(&self) -> Self {
        let form = match &self.form {
            RouterForm::Full(r) => RouterForm::Full(DenseMatrix::zeros(r.rows(), r.cols())),
            RouterForm::LowRank { r1, r2 } => RouterForm::LowRank {
                r1: DenseMatrix::zeros(r1.rows(), r1.cols()),
                r2: DenseMatrix::zeros(r2.rows(), r2.cols()),
            },
            RouterForm::Oracle => RouterForm::Oracle,
        };
        Router {
            form,
            beta: 0.0,
            k: self.k,
            m: self.m,
            train_beta: self.train_beta,
        }
    }
}

impl Parameters for MoeParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for e in &self.experts {
            e.slices(&mut v);
        }
        v.extend(self.router.param_slices());
        if let Some(s) = &self.shared {
            s.slices(&mut v);
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for e in &mut self.experts {
            e.slices_mut(&mut v);
        }
        v.extend(self.router.param_slices_mut());
        if let Some(s) = &mut self.shared {
            s.slices_mut(&mut v);
        }
        v
    }

    fn zeros_like(&self) -> Self {
        MoeParams {
            experts: self.experts.iter().map(MlpParams::zeros_like).collect(),
            router: self.router.zeros_like(),
            shared: self.shared.as_ref().map(MlpParams::zeros_like),
        }
    }
}

impl Parameters for Model {
    fn param_slices(&self) -> Vec<&[f64]> {
        match self {
            Model::Mlp(p) => p.param_slices(),
            Model::Moe(p) => p.param_slices(),
        }
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Mlp(p) => p.param_slices_mut(),
            Model::Moe(p) => p.param_slices_mut(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Model::Mlp(p) => Model::Mlp(MlpParams::zeros_like(p)),
            Model::Moe(p) => Model::Moe(p.zeros_like()),
        }
    }
}
