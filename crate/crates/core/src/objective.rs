//! The parametric objective
//! `J(θ; h) = ∫ f d(μ pushed by θ) − φ_h(‖θ‖^κ_{L_p(μ)})` and its gradient
//! with respect to the field values at the integration points.
//!
//! * unconstrained: `∫ f(y + θ(y)) μ(dy) − φ_h(‖θ‖)`
//! * mean: the same with `θ` replaced by `θ − ∫θ dμ`
//! * martingale: `∫ ½[f(y + θ(y)) + f(y − θ(y))] μ(dy) − φ_h(‖θ‖²)`

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{center_shifts, field_mean, lp_norm_shifts, VectorField};
use crate::loss::{gradient_of, Loss, LossRef};
use crate::measure::{norm, DiscreteMeasure, Integration, Measure, PointSet};
use crate::penalty::Penalty;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unconstrained,
    Mean,
    Martingale,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Unconstrained => "unconstrained",
            Regime::Mean => "mean",
            Regime::Martingale => "martingale",
        }
    }

    /// Power of the norm fed to the penalty.
    pub fn kappa(self) -> f64 {
        match self {
            Regime::Martingale => 2.0,
            _ => 1.0,
        }
    }

    pub fn required_growth(self, p: f64) -> f64 {
        p / self.kappa()
    }

    pub fn check_penalty(self, penalty: &Penalty, p: f64) -> Result<()> {
        penalty.require_growth(self.required_growth(p), self.name(), p)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained" => Ok(Regime::Unconstrained),
            "mean" => Ok(Regime::Mean),
            "martingale" => Ok(Regime::Martingale),
            other => Err(Error::BadInput(format!("unknown regime {other:?}"))),
        }
    }
}

/// One evaluation of `J`. For a violated ball penalty `value` and `penalty`
/// are infinite and `norm` is the offending norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    /// `∫ f dμ_θ`.
    pub f_term: f64,
    /// Monte Carlo standard error of `f_term`; zero on exact point sets.
    pub stderr: f64,
    /// `‖θ‖_{L_p(μ)}` of the (centered, in the mean regime) field.
    pub norm: f64,
    pub penalty: f64,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.value > f64::NEG_INFINITY
    }
}

/// `J(·; h)` for a fixed loss, penalty, exponent and regime.
#[derive(Debug, Clone)]
pub struct Objective {
    loss: LossRef,
    penalty: Penalty,
    p: f64,
    h: f64,
    regime: Regime,
}

impl Objective {
    pub fn new(loss: LossRef, penalty: Penalty, p: f64, h: f64, regime: Regime) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::BadInput(format!("p must be a finite number > 1, got {p}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::BadInput(format!("h must be positive, got {h}")));
        }
        regime.check_penalty(&penalty, p)?;
        Ok(Self { loss, penalty, p, h, regime })
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.loss.clone(), self.penalty.clone(), self.p, h, self.regime)
    }

    pub fn loss(&self) -> &LossRef {
        &self.loss
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn dim(&self) -> usize {
        self.loss.dim()
    }

    fn check_points(&self, pts: &PointSet, thetas: &[f64]) -> Result<()> {
        if pts.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: pts.dim() });
        }
        if thetas.len() != pts.coords().len() {
            return Err(Error::DimensionMismatch { expected: pts.coords().len(), got: thetas.len() });
        }
        Ok(())
    }

    /// Shifts actually applied: centered in the mean regime.
    fn effective(&self, pts: &PointSet, thetas: &[f64]) -> Vec<f64> {
        let mut t = thetas.to_vec();
        if self.regime == Regime::Mean {
            center_shifts(&mut t, pts.weights(), pts.dim());
        }
        t
    }

    /// Per-point integrand of the `f`-term.
    fn integrand(&self, pts: &PointSet, thetas: &[f64]) -> Vec<f64> {
        let d = pts.dim();
        let f = self.loss.as_ref();
        let martingale = self.regime == Regime::Martingale;
        pts.coords()
            .par_chunks(d * CHUNK)
            .zip(thetas.par_chunks(d * CHUNK))
            .flat_map_iter(|(ys, ts)| {
                let mut buf = vec![0.0; d];
                ys.chunks(d)
                    .zip(ts.chunks(d))
                    .map(|(y, t)| {
                        shift(y, t, 1.0, &mut buf);
                        let up = f.value(&buf);
                        if martingale {
                            shift(y, t, -1.0, &mut buf);
                            0.5 * (up + f.value(&buf))
                        } else {
                            up
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn penalty_of(&self, norm: f64) -> f64 {
        self.penalty.rescaled(self.h, norm.powf(self.regime.kappa()))
    }

    fn assemble(&self, pts: &PointSet, eff: &[f64]) -> Evaluation {
        let values = self.integrand(pts, eff);
        let (f_term, stderr) = pts.mean_and_stderr(&values);
        let norm = lp_norm_shifts(eff, pts.weights(), pts.dim(), self.p);
        let penalty = self.penalty_of(norm);
        Evaluation { value: f_term - penalty, f_term, stderr, norm, penalty }
    }

    /// `J` for field values `thetas` (flat, one row per point of `pts`).
    pub fn evaluate_shifts(&self, pts: &PointSet, thetas: &[f64]) -> Result<Evaluation> {
        self.check_points(pts, thetas)?;
        let eff = self.effective(pts, thetas);
        let e = self.assemble(pts, &eff);
        if e.value.is_nan() {
            return Err(Error::NonFiniteObjective(format!("objective is NaN (norm {})", e.norm)));
        }
        Ok(e)
    }

    /// `J` together with `∂J/∂θ(y_k)` for every point `y_k`; the weights
    /// `w_k` are already folded into the per-point gradients.
    pub fn gradient_shifts(&self, pts: &PointSet, thetas: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        self.check_points(pts, thetas)?;
        let d = pts.dim();
        let eff = self.effective(pts, thetas);
        let e = self.assemble(pts, &eff);
        if e.value.is_nan() {
            return Err(Error::NonFiniteObjective(format!("objective is NaN (norm {})", e.norm)));
        }
        if !self.loss.has_gradient() && !self.loss.finite_differences() {
            return Err(Error::MissingGradient);
        }
        let f = self.loss.as_ref();
        let martingale = self.regime == Regime::Martingale;
        let chunks: Vec<Result<Vec<f64>>> = pts
            .coords()
            .par_chunks(d * CHUNK)
            .zip(eff.par_chunks(d * CHUNK))
            .zip(pts.weights().par_chunks(CHUNK))
            .map(|((ys, ts), ws)| {
                let mut out = Vec::with_capacity(ys.len());
                let mut buf = vec![0.0; d];
                for ((y, t), w) in ys.chunks(d).zip(ts.chunks(d)).zip(ws) {
                    shift(y, t, 1.0, &mut buf);
                    let g_up = gradient_of(f, &buf)?;
                    if martingale {
                        shift(y, t, -1.0, &mut buf);
                        let g_down = gradient_of(f, &buf)?;
                        out.extend(g_up.iter().zip(&g_down).map(|(a, b)| 0.5 * w * (a - b)));
                    } else {
                        out.extend(g_up.iter().map(|g| w * g));
                    }
                }
                Ok(out)
            })
            .collect();
        let mut grad = Vec::with_capacity(eff.len());
        for c in chunks {
            grad.extend(c?);
        }

        // penalty: φ_h'(N^κ)·κ N^{κ−p} w_k ‖θ_k‖^{p−2} θ_k
        if e.norm > 0.0 && e.penalty.is_finite() {
            let kappa = self.regime.kappa();
            let dphi = self.penalty.rescaled_derivative(self.h, e.norm.powf(kappa));
            let outer = dphi * kappa * e.norm.powf(kappa - self.p);
            if outer != 0.0 {
                for ((g, t), w) in grad.chunks_mut(d).zip(eff.chunks(d)).zip(pts.weights()) {
                    let n = norm(t);
                    if n == 0.0 {
                        continue;
                    }
                    let factor = outer * w * n.powf(self.p - 2.0);
                    for (gi, ti) in g.iter_mut().zip(t) {
                        *gi -= factor * ti;
                    }
                }
            }
        }

        if self.regime == Regime::Mean {
            // chain rule through θ ↦ θ − Σ_i w_i θ_i
            let total: Vec<f64> = (0..d).map(|j| grad.chunks(d).map(|g| g[j]).sum()).collect();
            for (g, w) in grad.chunks_mut(d).zip(pts.weights()) {
                for (gi, s) in g.iter_mut().zip(&total) {
                    *gi -= w * s;
                }
            }
        }
        Ok((e, grad))
    }

    /// `J` for a field, integrated exactly over atoms or on one Monte Carlo
    /// batch (common to the pushforward, the norm and the centering mean).
    pub fn evaluate(
        &self,
        measure: &Measure,
        field: &dyn VectorField,
        integration: Integration,
        seed_offset: u64,
    ) -> Result<Evaluation> {
        if field.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: field.dim() });
        }
        let pts = measure.point_set(integration, seed_offset)?;
        let thetas = field.eval_batch(pts.coords());
        self.evaluate_shifts(&pts, &thetas)
    }

    /// `∫ f dμ` on the same points.
    pub fn baseline(&self, pts: &PointSet) -> (f64, f64) {
        let f = self.loss.as_ref();
        pts.integrate(|y| f.value(y))
    }
}

fn shift(y: &[f64], t: &[f64], sign: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(y).zip(t) {
        *o = a + sign * b;
    }
}

/// `μ∘(id + θ)^{-1}` for a tabular shift of an atomic measure.
pub fn pushforward(mu: &DiscreteMeasure, thetas: &[f64]) -> Result<DiscreteMeasure> {
    let d = mu.dim();
    if thetas.len() != d * mu.len() {
        return Err(Error::DimensionMismatch { expected: d * mu.len(), got: thetas.len() });
    }
    let atoms = mu
        .atoms()
        .iter()
        .zip(thetas.chunks(d))
        .map(|(y, t)| y.iter().zip(t).map(|(a, b)| a + b).collect())
        .collect();
    DiscreteMeasure::new(atoms, mu.weights().to_vec())
}

/// The two-point splitting `½δ_{y+θ(y)} + ½δ_{y−θ(y)}` of every atom; a
/// martingale transition, so the mean is preserved.
pub fn martingale_pushforward(mu: &DiscreteMeasure, thetas: &[f64]) -> Result<DiscreteMeasure> {
    let d = mu.dim();
    if thetas.len() != d * mu.len() {
        return Err(Error::DimensionMismatch { expected: d * mu.len(), got: thetas.len() });
    }
    let mut atoms = Vec::with_capacity(2 * mu.len());
    let mut weights = Vec::with_capacity(2 * mu.len());
    for ((y, t), w) in mu.atoms().iter().zip(thetas.chunks(d)).zip(mu.weights()) {
        for sign in [1.0, -1.0] {
            atoms.push(y.iter().zip(t).map(|(a, b)| a + sign * b).collect());
            weights.push(0.5 * w);
        }
    }
    DiscreteMeasure::new(atoms, weights)
}

/// Mean of the field values over the point set (the centering vector).
pub fn shift_mean(pts: &PointSet, thetas: &[f64]) -> Vec<f64> {
    field_mean(thetas, pts.weights(), pts.dim())
}

/// Convenience: evaluate `f` directly (used by tests and reports).
pub fn integrate_loss(f: &dyn Loss, pts: &PointSet) -> (f64, f64) {
    pts.integrate(|y| f.value(y))
}
