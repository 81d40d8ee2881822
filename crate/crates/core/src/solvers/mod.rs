//! Solvers for the supremum over fields.

pub mod bfgs;
mod discrete;
mod train;

pub use discrete::{solve_discrete, SolveOptions};
pub use train::{
    train_from, train_mlp, transfer_retrain, Architecture, LogRecord, ScaleSearch, TrainOptions, TrainOutcome,
    TransferOptions, TransferOutcome,
};
