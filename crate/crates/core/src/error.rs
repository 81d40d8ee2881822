use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("conjugate search did not bracket the maximizer below 2^60 (u = {u}); the penalty violates its growth condition")]
    NonconvergentConjugate { u: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("penalty growth exponent {growth} is too small for the {regime} regime at p = {p} (needs >= {required})")]
    RegimePenaltyMismatch {
        regime: &'static str,
        growth: f64,
        p: f64,
        required: f64,
    },

    #[error("loss has neither an analytic gradient nor finite differences enabled")]
    MissingGradient,

    #[error("loss exposes no local Lipschitz field / ascent direction")]
    MissingLipField,

    #[error("the mean-constrained expansion requires p = 2 (got p = {p})")]
    RegimeRequiresP2 { p: f64 },

    #[error("the martingale expansion requires a Hessian-vector product")]
    RegimeRequiresHessian,

    #[error("the martingale expansion exponent p/(p-2) is undefined for p = {p}; p > 2 is required")]
    ExponentUndefined { p: f64 },

    #[error("loss exposes no Hessian-vector product")]
    NoHessian,

    #[error("objective is not finite: {0}")]
    NonFiniteObjective(String),

    #[error("training diverged at epoch {epoch}: objective {value}")]
    DivergenceDetected { epoch: usize, value: f64 },

    #[error("pretrained network has no scale layer")]
    MissingScaleLayer,

    #[error("transport problem too large: {rows} x {cols} atoms (limit {limit})")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("bad strikes: need 0 < K1 < K2 (got K1 = {k1}, K2 = {k2})")]
    BadStrikes { k1: f64, k2: f64 },

    #[error("bad input: {0}")]
    BadInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
