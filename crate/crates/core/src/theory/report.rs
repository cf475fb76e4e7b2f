use std::fmt;

use crate::dictionary::{Dictionary, SparseSample};

/// Outcome of checking a construction against its target on a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionReport {
    pub samples: usize,
    /// Largest per-sample `|f_MoE(x) - f*(x)|`.
    pub max_residual: f64,
    /// Largest per-sample entrywise gap between the residual and the
    /// residual the proof predicts from `ξ(x)`.
    pub residual_identity_violation: f64,
    /// Samples whose residual exceeds the operator-norm bound (linear
    /// targets only; always zero for polynomial targets).
    pub bound_violations: usize,
    pub active_neurons: usize,
    pub fvu: f64,
}

impl ConstructionReport {
    pub fn passes(&self, identity_tolerance: f64) -> bool {
        self.residual_identity_violation <= identity_tolerance && self.bound_violations == 0
    }
}

/// One `key=value` line per field.
impl fmt::Display for ConstructionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples={}", self.samples)?;
        writeln!(f, "max_residual={:e}", self.max_residual)?;
        writeln!(
            f,
            "residual_identity_violation={:e}",
            self.residual_identity_violation
        )?;
        writeln!(f, "bound_violations={}", self.bound_violations)?;
        writeln!(f, "active_neurons={}", self.active_neurons)?;
        writeln!(f, "fvu={:e}", self.fvu)
    }
}

/// Fraction of samples on which the projection gate (top-k of `|v.x|`)
/// selects exactly the stored active set.
pub fn projection_agreement(dict: &Dictionary, samples: &[SparseSample], k: usize) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| dict.projection_gate(&s.x, k) == s.active)
        .count();
    hits as f64 / samples.len() as f64
}
