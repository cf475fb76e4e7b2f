use crate::error::{check_dim, Error, Result};
use crate::layers::{GateResult, MlpParams, Router};
use crate::linalg::axpy;

/// Routed mixture of expert MLPs, optionally plus an always-active shared MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeParams {
    pub experts: Vec<MlpParams>,
    pub router: Router,
    pub shared: Option<MlpParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeOutput {
    pub y: Vec<f64>,
    pub gate: GateResult,
    /// Number of expert MLPs actually evaluated.
    pub experts_evaluated: usize,
}

impl MoeParams {
    pub fn new(experts: Vec<MlpParams>, router: Router, shared: Option<MlpParams>) -> Result<Self> {
        let p = Self {
            experts,
            router,
            shared,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .experts
            .first()
            .ok_or_else(|| Error::InvalidInput("mixture needs at least one expert".into()))?;
        for e in &self.experts {
            e.validate()?;
            check_dim("expert input dimension", first.d_in(), e.d_in())?;
            check_dim("expert width", first.d_hidden(), e.d_hidden())?;
            check_dim("expert output dimension", first.d_out(), e.d_out())?;
            if e.activation != first.activation {
                return Err(Error::InvalidInput(
                    "experts must share one activation".into(),
                ));
            }
        }
        self.router.validate()?;
        check_dim("router expert count", self.experts.len(), self.router.m)?;
        if let Some(d) = self.router.d_in() {
            check_dim("router input dimension", first.d_in(), d)?;
        }
        if let Some(s) = &self.shared {
            s.validate()?;
            check_dim("shared expert input dimension", first.d_in(), s.d_in())?;
            check_dim("shared expert output dimension", first.d_out(), s.d_out())?;
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.experts.len()
    }

    pub fn d_in(&self) -> usize {
        self.experts[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.experts[0].d_out()
    }

    pub fn d_expert(&self) -> usize {
        self.experts[0].d_hidden()
    }

    /// Neurons evaluated per input: `k * d_exp` plus the shared width.
    pub fn active_neurons(&self) -> usize {
        self.router.k * self.d_expert() + self.shared.as_ref().map_or(0, MlpParams::d_hidden)
    }

    pub fn forward(&self, x: &[f64], active: Option<&[usize]>) -> Result<Vec<f64>> {
        Ok(self.forward_detailed(x, active)?.y)
    }

    /// Evaluates only the gated experts.
    pub fn forward_detailed(&self, x: &[f64], active: Option<&[usize]>) -> Result<MoeOutput> {
        check_dim("mixture input", self.d_in(), x.len())?;
        let gate = self.router.gate(x, active)?;
        let mut y = match &self.shared {
            Some(s) => s.forward_cached(x).out,
            None => vec![0.0; self.d_out()],
        };
        for (&i, &w) in gate.indices.iter().zip(&gate.weights) {
            let out = self.experts[i].forward_cached(x).out;
            axpy(w, &out, &mut y);
        }
        Ok(MoeOutput {
            y,
            experts_evaluated: gate.indices.len(),
            gate,
        })
    }

    /// Copy with the shared expert removed.
    pub fn without_shared(&self) -> MoeParams {
        MoeParams {
            experts: self.experts.clone(),
            router: self.router.clone(),
            shared: None,
        }
    }
}
