//! Worst-case risk under Wasserstein-type model uncertainty.
//!
//! The central object is the sensitivity functional
//! `I(h)f = sup_θ ∫ f(y + θ(y)) μ(dy) − φ_h(‖θ‖_{L_p(μ)})`, its first-order
//! expansion as `h → 0`, and solvers for the supremum.

pub mod asymptotics;
pub mod error;
pub mod estimate;
pub mod fields;
pub mod loss;
pub mod measure;
pub mod objective;
pub mod penalty;
pub mod rng;
pub mod solvers;
pub mod transport;
pub mod finance;

pub use error::{Error, Result};
