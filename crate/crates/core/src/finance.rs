//! Black–Scholes reference prices and martingale price bounds for a bull
//! call spread.

use std::sync::Arc;

use libm::erfc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{BullSpreadReturns, LossRef, NegatedLoss};
use crate::measure::{Integration, Measure, SamplerMeasure};
use crate::objective::{Objective, Regime};
use crate::penalty::Penalty;
use crate::rng::salted;
use crate::solvers::{train_mlp, Architecture, TrainOptions};

/// Zero-rate market for the bull spread `(x − K1)⁺ − (x − K2)⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub sigma: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub k1: f64,
    pub k2: f64,
    /// Kink smoothing half-width; `None` means `1e-3·K1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
}

impl Default for MarketSpec {
    fn default() -> Self {
        Self { sigma: 0.2, maturity: 1.0, k1: 1.0, k2: 1.2, smoothing: None }
    }
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::BadInput(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::BadInput(format!("T must be positive, got {}", self.maturity)));
        }
        if !(self.k1 > 0.0 && self.k2 > self.k1 && self.k2.is_finite()) {
            return Err(Error::BadStrikes { k1: self.k1, k2: self.k2 });
        }
        Ok(())
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing.unwrap_or(1e-3 * self.k1)
    }

    /// Log-returns `N(−σ²T/2, σ²T)`.
    pub fn returns_measure(&self, seed: u64) -> Result<Measure> {
        Ok(Measure::Sampler(SamplerMeasure::lognormal_returns(self.sigma, self.maturity, seed)?))
    }

    /// The payoff as a function of the log-return.
    pub fn payoff(&self) -> Result<BullSpreadReturns> {
        BullSpreadReturns::new(self.k1, self.k2, self.smoothing())
    }

    pub fn spread_price(&self) -> Result<f64> {
        self.validate()?;
        Ok(bs_call(1.0, self.k1, self.sigma, self.maturity)? - bs_call(1.0, self.k2, self.sigma, self.maturity)?)
    }
}

/// Standard normal CDF through the complementary error function, which
/// keeps full relative accuracy in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Zero-rate Black–Scholes call.
pub fn bs_call(s0: f64, k: f64, sigma: f64, t: f64) -> Result<f64> {
    for (name, v) in [("S0", s0), ("K", k), ("sigma", sigma), ("T", t)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::BadInput(format!("{name} must be positive, got {v}")));
        }
    }
    let sd = sigma * t.sqrt();
    let d1 = ((s0 / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok((s0 * normal_cdf(d1) - k * normal_cdf(d2)).max(0.0))
}

/// `φ(x) = (1/n)(x/σ²)^n`.
pub fn spread_penalty(sigma: f64, n: f64) -> Result<Penalty> {
    Penalty::power(1.0 / (n * sigma.powf(2.0 * n)), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsOptions {
    pub p: f64,
    pub arch: Architecture,
    pub train: TrainOptions,
    /// Batch for the `h = 0` row.
    pub baseline_batch: usize,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self {
            p: 3.0,
            arch: Architecture::default(),
            train: TrainOptions { lr: 1e-3, batch: 8192, epochs: 1000, ..TrainOptions::default() },
            baseline_batch: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub h: f64,
    pub lower: f64,
    pub upper: f64,
    pub bs_price: f64,
    pub stderr_lower: f64,
    pub stderr_upper: f64,
    /// A bound left `[0, K2 − K1]`; only Monte Carlo noise can do that.
    pub clipped: bool,
}

/// Upper bound `I(h)f̃` and lower bound `−I(h)(−f̃)` under martingale
/// perturbations of the log-return, one row per `h`. Rows train
/// independently with seeds derived from the row index.
pub fn bull_spread_bounds(
    market: &MarketSpec,
    h_grid: &[f64],
    penalty: &Penalty,
    opts: &BoundsOptions,
) -> Result<Vec<BoundsRow>> {
    market.validate()?;
    Regime::Martingale.check_penalty(penalty, opts.p)?;
    if let Some(h) = h_grid.iter().find(|h| !(**h >= 0.0 && h.is_finite())) {
        return Err(Error::BadInput(format!("h must be >= 0, got {h}")));
    }
    let bs_price = market.spread_price()?;
    let mu = market.returns_measure(opts.train.seed)?;
    let f: LossRef = Arc::new(market.payoff()?);
    let neg: LossRef = Arc::new(NegatedLoss::new(f.clone()));
    let band = market.k2 - market.k1;

    h_grid
        .par_iter()
        .enumerate()
        .map(|(row, &h)| {
            let seed = salted(opts.train.seed, row as u64);
            let (lower, upper, se_lower, se_upper) = if h == 0.0 {
                let pts = mu.point_set(Integration::MonteCarlo { batch: opts.baseline_batch }, seed)?;
                let (m, se) = pts.integrate(|y| f.value(y));
                (m, m, se, se)
            } else {
                let train = TrainOptions { seed, ..opts.train };
                let up = Objective::new(f.clone(), penalty.clone(), opts.p, h, Regime::Martingale)?;
                let lo = Objective::new(neg.clone(), penalty.clone(), opts.p, h, Regime::Martingale)?;
                let u = train_mlp(&up, &mu, &opts.arch, &train)?.estimate;
                let l = train_mlp(&lo, &mu, &opts.arch, &train)?.estimate;
                (-l.value, u.value, l.stderr(), u.stderr())
            };
            let clipped = lower < 0.0 || upper > band;
            if clipped {
                log::warn!("h = {h}: bounds [{lower}, {upper}] leave [0, {band}]");
            }
            Ok(BoundsRow {
                h,
                lower: lower.clamp(0.0, band),
                upper: upper.clamp(0.0, band),
                bs_price,
                stderr_lower: se_lower,
                stderr_upper: se_upper,
                clipped,
            })
        })
        .collect()
}
