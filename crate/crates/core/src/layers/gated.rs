use crate::error::{check_dim, Error, Result};
use crate::layers::Activation;
use crate::linalg::{axpy, DenseMatrix};

/// Gated feedforward block `w_out (σ(gate x + gate_bias) ⊙ (w_in x + bias_in)) + bias_out`,
/// used to replay captured teachers. It is never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedMlp {
    /// `d_out x d_hidden`
    pub w_out: DenseMatrix,
    /// `d_hidden x d_in`, the linear ("up") branch.
    pub w_in: DenseMatrix,
    /// `d_hidden x d_in`, the branch passed through the activation.
    pub gate: DenseMatrix,
    pub bias_in: Option<Vec<f64>>,
    pub gate_bias: Option<Vec<f64>>,
    pub bias_out: Option<Vec<f64>>,
    pub activation: Activation,
}

impl GatedMlp {
    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        let (h, d) = self.w_in.shape();
        check_dim("gate rows", h, self.gate.rows())?;
        check_dim("gate columns", d, self.gate.cols())?;
        check_dim("output matrix columns", h, self.w_out.cols())?;
        for (name, b, len) in [
            ("input bias", &self.bias_in, h),
            ("gate bias", &self.gate_bias, h),
            ("output bias", &self.bias_out, self.w_out.rows()),
        ] {
            if let Some(b) = b {
                check_dim(name, len, b.len())?;
            }
        }
        let finite = [&self.w_in, &self.gate, &self.w_out]
            .iter()
            .all(|m| m.is_finite())
            && [&self.bias_in, &self.gate_bias, &self.bias_out]
                .iter()
                .all(|b| b.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite())));
        if !finite {
            return Err(Error::NonFinite("gated MLP parameters".into()));
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
        check_dim("gated MLP input", self.d_in(), x.len())?;
        let mut up = self.w_in.matvec(x);
        if let Some(b) = &self.bias_in {
            axpy(1.0, b, &mut up);
        }
        let mut g = self.gate.matvec(x);
        if let Some(b) = &self.gate_bias {
            axpy(1.0, b, &mut g);
        }
        let hidden: Vec<f64> = up
            .iter()
            .zip(&g)
            .map(|(u, t)| self.activation.apply(*t) * u)
            .collect();
        let mut out = self.w_out.matvec(&hidden);
        if let Some(b) = &self.bias_out {
            axpy(1.0, b, &mut out);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gate_multiplies_branches() {
        let g = GatedMlp {
            w_out: DenseMatrix::identity(2),
            w_in: DenseMatrix::identity(2),
            gate: DenseMatrix::identity(2).scaled(2.0),
            bias_in: None,
            gate_bias: Some(vec![1.0, 0.0]),
            bias_out: None,
            activation: Activation::Identity,
        };
        g.validate().unwrap();
        assert_eq!(g.forward(&[3.0, -1.0]).unwrap(), vec![3.0 * 7.0, 2.0]);
    }
}
