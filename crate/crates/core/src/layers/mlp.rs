use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::layers::Activation;
use crate::linalg::{axpy, DenseMatrix};

/// Two-matrix feedforward layer `w_out σ(w_in x + bias_in) + bias_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `d_out x d_hidden`
    pub w_out: DenseMatrix,
    /// `d_hidden x d_in`
    pub w_in: DenseMatrix,
    pub bias_in: Option<Vec<f64>>,
    pub bias_out: Option<Vec<f64>>,
    pub activation: Activation,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl MlpParams {
    pub fn new(
        w_out: DenseMatrix,
        w_in: DenseMatrix,
        bias_in: Option<Vec<f64>>,
        bias_out: Option<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        let p = Self {
            w_out,
            w_in,
            bias_in,
            bias_out,
            activation,
        };
        p.validate()?;
        Ok(p)
    }

    /// Bias-free layer.
    pub fn plain(w_out: DenseMatrix, w_in: DenseMatrix, activation: Activation) -> Result<Self> {
        Self::new(w_out, w_in, None, None, activation)
    }

    /// Weights i.i.d. normal with standard deviation `1/sqrt(fan_in)`, biases zero.
    pub fn init(
        rng: &mut impl Rng,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        activation: Activation,
        biases: bool,
    ) -> Self {
        Self {
            w_in: gaussian_matrix(rng, d_hidden, d_in),
            w_out: gaussian_matrix(rng, d_out, d_hidden),
            bias_in: biases.then(|| vec![0.0; d_hidden]),
            bias_out: biases.then(|| vec![0.0; d_out]),
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        check_dim("mlp hidden width", self.w_in.rows(), self.w_out.cols())?;
        if let Some(b) = &self.bias_in {
            check_dim("mlp input bias", self.w_in.rows(), b.len())?;
        }
        if let Some(b) = &self.bias_out {
            check_dim("mlp output bias", self.w_out.rows(), b.len())?;
        }
        if !self.w_in.is_finite() || !self.w_out.is_finite() {
            return Err(Error::NonFinite("mlp weights".into()));
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.w_in.cols()
    }

    pub fn d_hidden(&self) -> usize {
        self.w_in.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w_out.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("mlp input", self.d_in(), x.len())?;
        Ok(self.forward_cached(x).out)
    }

    /// Unchecked forward that keeps pre-activations and hidden units.
    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut pre = self.w_in.matvec(x);
        if let Some(b) = &self.bias_in {
            axpy(1.0, b, &mut pre);
        }
        let hidden: Vec<f64> = pre.iter().map(|&t| self.activation.apply(t)).collect();
        let mut out = self.w_out.matvec(&hidden);
        if let Some(b) = &self.bias_out {
            axpy(1.0, b, &mut out);
        }
        MlpCache { pre, hidden, out }
    }

    /// Accumulates into `grad` the parameter gradient for an upstream
    /// gradient `g_out` on this layer's output.
    pub fn accumulate_gradient(
        &self,
        x: &[f64],
        cache: &MlpCache,
        g_out: &[f64],
        grad: &mut MlpParams,
    ) {
        for (i, &g) in g_out.iter().enumerate() {
            if g != 0.0 {
                axpy(g, &cache.hidden, grad.w_out.row_mut(i));
            }
        }
        if let Some(b) = grad.bias_out.as_mut() {
            axpy(1.0, g_out, b);
        }
        let g_hidden = self.w_out.matvec_t(g_out);
        for (j, (&gh, &pre)) in g_hidden.iter().zip(&cache.pre).enumerate() {
            let g_pre = gh * self.activation.derivative(pre);
            if g_pre != 0.0 {
                axpy(g_pre, x, grad.w_in.row_mut(j));
                if let Some(b) = grad.bias_in.as_mut() {
                    b[j] += g_pre;
                }
            }
        }
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            w_out: DenseMatrix::zeros(self.w_out.rows(), self.w_out.cols()),
            w_in: DenseMatrix::zeros(self.w_in.rows(), self.w_in.cols()),
            bias_in: self.bias_in.as_ref().map(|b| vec![0.0; b.len()]),
            bias_out: self.bias_out.as_ref().map(|b| vec![0.0; b.len()]),
            activation: self.activation,
        }
    }

    pub(crate) fn slices<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.push(self.w_out.data());
        out.push(self.w_in.data());
        if let Some(b) = &self.bias_in {
            out.push(b);
        }
        if let Some(b) = &self.bias_out {
            out.push(b);
        }
    }

    pub(crate) fn slices_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w_out.data_mut());
        out.push(self.w_in.data_mut());
        if let Some(b) = &mut self.bias_in {
            out.push(b);
        }
        if let Some(b) = &mut self.bias_out {
            out.push(b);
        }
    }
}

pub(crate) fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    let scale = 1.0 / (cols.max(1) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{item_rng, Stream};

    #[test]
    fn identity_layer_returns_input() {
        let p = MlpParams::plain(
            DenseMatrix::identity(3),
            DenseMatrix::identity(3),
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn dead_relu_units_leave_bias() {
        let w_in = DenseMatrix::from_rows(&[vec![-1.0, -1.0], vec![-2.0, 0.0]]).unwrap();
        let w_out = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let p = MlpParams::new(
            w_out.clone(),
            w_in.clone(),
            None,
            Some(vec![0.25]),
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(p.forward(&[1.0, 2.0]).unwrap(), vec![0.25]);
        let p = MlpParams::plain(w_out, w_in, Activation::Relu).unwrap();
        assert_eq!(p.forward(&[1.0, 2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_matches_two_loop_evaluation() {
        let mut rng = item_rng(4, Stream::Init, 0);
        let mut p = MlpParams::init(&mut rng, 8, 16, 8, Activation::Gelu, true);
        p.bias_in = Some((0..16).map(|i| 0.01 * i as f64).collect());
        p.bias_out = Some((0..8).map(|i| -0.02 * i as f64).collect());
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut want = p.bias_out.clone().unwrap();
        for j in 0..16 {
            let mut pre = p.bias_in.as_ref().unwrap()[j];
            for (l, xl) in x.iter().enumerate() {
                pre += p.w_in[(j, l)] * xl;
            }
            let h = Activation::Gelu.apply(pre);
            for (i, w) in want.iter_mut().enumerate() {
                *w += p.w_out[(i, j)] * h;
            }
        }
        let got = p.forward(&x).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let bad = MlpParams::plain(
            DenseMatrix::zeros(2, 3),
            DenseMatrix::zeros(4, 2),
            Activation::Relu,
        );
        assert!(bad.is_err());
        let p = MlpParams::plain(
            DenseMatrix::zeros(2, 3),
            DenseMatrix::zeros(3, 2),
            Activation::Relu,
        )
        .unwrap();
        assert!(p.forward(&[1.0]).is_err());
    }
}
