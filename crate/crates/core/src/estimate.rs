use serde::{Deserialize, Serialize};

use crate::fields::Activation;
use crate::objective::{Evaluation, Regime};

/// How the optimizing field was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldDescriptor {
    Zero,
    Tabular {
        shifts: Vec<Vec<f64>>,
    },
    Ray {
        direction: String,
        lambda: f64,
    },
    Mlp {
        depth: usize,
        width: usize,
        activation: Activation,
        scale: Option<f64>,
        params: usize,
    },
}

/// A value `I_Θ(h)f` together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    /// `∫ f dμ` on the same integration points.
    pub baseline: f64,
    pub field: FieldDescriptor,
    pub penalty_paid: f64,
    pub norm: f64,
    pub h: f64,
    pub regime: Regime,
    pub iterations: usize,
    pub seed: u64,
    pub mc_batch: Option<usize>,
    pub mc_stderr: Option<f64>,
    /// Set when a line search or step control gave up early; the value is
    /// then the best iterate seen.
    #[serde(default)]
    pub flagged: bool,
}

impl RiskEstimate {
    pub(crate) fn from_evaluation(
        e: &Evaluation,
        baseline: f64,
        field: FieldDescriptor,
        h: f64,
        regime: Regime,
        seed: u64,
        mc_batch: Option<usize>,
    ) -> Self {
        Self {
            value: e.value,
            baseline,
            field,
            penalty_paid: e.penalty,
            norm: e.norm,
            h,
            regime,
            iterations: 0,
            seed,
            mc_batch,
            mc_stderr: mc_batch.map(|_| e.stderr),
            flagged: false,
        }
    }

    pub fn stderr(&self) -> f64 {
        self.mc_stderr.unwrap_or(0.0)
    }

    /// `(value − μf)/h`.
    pub fn slope(&self) -> f64 {
        (self.value - self.baseline) / self.h
    }
}
