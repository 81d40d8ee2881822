//! First-order behaviour of `I(h)f` as `h ↓ 0`: the limit of
//! `(I(h)f − μf)/h`, the fields that attain it, and the one-dimensional ray
//! search along such a field.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{FieldDescriptor, RiskEstimate};
use crate::fields::{FieldRef, FnField, ScaledField};
use crate::loss::{ascent_dir_of, gradient_of, lip_field_of, Loss, LossRef};
use crate::measure::{norm, Integration, Measure, PointSet};
use crate::objective::{Evaluation, Objective, Regime};
use crate::penalty::{golden_section_max, Penalty};
use crate::rng::salted;

/// `x ↦ v(x)·|f|_Lip(x)^{q−1}`.
pub fn steepest_ascent_field(f: LossRef, q: f64) -> Result<FnField> {
    if !(q > 1.0) {
        return Err(Error::BadInput(format!("q must exceed 1, got {q}")));
    }
    if !(f.has_ascent_dir() || f.has_gradient()) {
        return Err(Error::MissingLipField);
    }
    let d = f.dim();
    Ok(FnField::new(d, "steepest_ascent", move |x| {
        let v = ascent_dir_of(f.as_ref(), x).unwrap_or_else(|| vec![0.0; x.len()]);
        let l = lip_field_of(f.as_ref(), x);
        let s = if l > 0.0 { l.powf(q - 1.0) } else { 0.0 };
        v.into_iter().map(|vi| vi * s).collect()
    }))
}

/// `∇f − ∫∇f dμ`.
fn centered_gradient_field(f: LossRef, mean: Vec<f64>) -> FnField {
    let d = f.dim();
    FnField::new(d, "centered_gradient", move |x| {
        let g = gradient_of(f.as_ref(), x).unwrap_or_else(|_| vec![0.0; x.len()]);
        g.iter().zip(&mean).map(|(a, b)| a - b).collect()
    })
}

/// `x ↦ v(x)·|∇²f(x)|_Max^{1/(p−2)}` with `v` the top eigenvector.
fn maximal_curvature_field(f: LossRef, p: f64, tol: f64) -> FnField {
    let d = f.dim();
    FnField::new(d, "maximal_curvature", move |x| match hessian_max(f.as_ref(), x, tol) {
        Ok((m, v)) if m > 0.0 => {
            let s = m.powf(1.0 / (p - 2.0));
            v.into_iter().map(|vi| vi * s).collect()
        }
        _ => vec![0.0; x.len()],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    /// `lim (I(h)f − μf)/h = φ*(inner_norm)`.
    pub coefficient: f64,
    pub inner_norm: f64,
    /// Standard error of `inner_norm` when integrated by Monte Carlo.
    pub inner_stderr: Option<f64>,
    pub regime: Regime,
    pub p: f64,
    /// True when `inner_norm` is a Monte Carlo estimate.
    pub approximate: bool,
    pub field: &'static str,
    #[serde(skip)]
    pub direction: FieldRef,
}

const HESSIAN_TOL: f64 = 1e-12;
const INNER_SALT: u64 = 0xE7A_0A51;

/// The first-order coefficient and the matching asymptotically optimal field.
///
/// * unconstrained: `φ*(‖|f|_Lip‖_{L_q(μ)})`, `q = p/(p−1)`
/// * mean (`p = 2`): `φ*((∫‖∇f − ∫∇f dμ‖² dμ)^{1/2})`
/// * martingale (`p > 2`): `φ*(½(∫|∇²f|_Max^{p/(p−2)} dμ)^{(p−2)/p})`
pub fn first_order_coefficient(
    f: LossRef,
    measure: &Measure,
    p: f64,
    penalty: &Penalty,
    regime: Regime,
    integration: Integration,
) -> Result<ExpansionReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::BadInput(format!("p must be a finite number > 1, got {p}")));
    }
    if f.dim() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), got: f.dim() });
    }
    regime.check_penalty(penalty, p)?;
    let pts = measure.point_set(integration, salted(0, INNER_SALT))?;
    let (inner, inner_se, direction, name): (f64, f64, FieldRef, &'static str) = match regime {
        Regime::Unconstrained => {
            let q = p / (p - 1.0);
            let direction = Arc::new(steepest_ascent_field(f.clone(), q)?);
            let (m, se) = integrate(&pts, |y| Ok(lip_field_of(f.as_ref(), y).powf(q)))?;
            let (v, vse) = root(m, se, q);
            (v, vse, direction, "steepest_ascent")
        }
        Regime::Mean => {
            if (p - 2.0).abs() > 1e-12 {
                return Err(Error::RegimeRequiresP2 { p });
            }
            let d = pts.dim();
            let grads: Vec<Vec<f64>> = (0..pts.len())
                .map(|i| gradient_of(f.as_ref(), pts.point(i)))
                .collect::<Result<_>>()?;
            let mean: Vec<f64> = (0..d)
                .map(|j| grads.iter().zip(pts.weights()).map(|(g, w)| w * g[j]).sum())
                .collect();
            let sq: Vec<f64> = grads
                .iter()
                .map(|g| g.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let (m, se) = pts.mean_and_stderr(&sq);
            let (v, vse) = root(m, se, 2.0);
            (v, vse, Arc::new(centered_gradient_field(f.clone(), mean)), "centered_gradient")
        }
        Regime::Martingale => {
            if !f.has_hessian() {
                return Err(Error::RegimeRequiresHessian);
            }
            if p <= 2.0 {
                return Err(Error::ExponentUndefined { p });
            }
            let r = p / (p - 2.0);
            let (m, se) = integrate(&pts, |y| Ok(hessian_max(f.as_ref(), y, HESSIAN_TOL)?.0.powf(r)))?;
            let (v, vse) = root(m, se, r);
            let direction = Arc::new(maximal_curvature_field(f.clone(), p, HESSIAN_TOL));
            (0.5 * v, 0.5 * vse, direction, "maximal_curvature")
        }
    };
    let coefficient = penalty.conjugate(inner)?;
    let approximate = !pts.is_exact();
    Ok(ExpansionReport {
        coefficient,
        inner_norm: inner,
        inner_stderr: approximate.then_some(inner_se),
        regime,
        p,
        approximate,
        field: name,
        direction,
    })
}

fn integrate(pts: &PointSet, mut g: impl FnMut(&[f64]) -> Result<f64>) -> Result<(f64, f64)> {
    let values = (0..pts.len()).map(|i| g(pts.point(i))).collect::<Result<Vec<f64>>>()?;
    Ok(pts.mean_and_stderr(&values))
}

/// `m^{1/r}` and its delta-method standard error.
fn root(m: f64, se: f64, r: f64) -> (f64, f64) {
    let v = m.max(0.0).powf(1.0 / r);
    let vse = if m > 0.0 { v / (r * m) * se } else { 0.0 };
    (v, vse)
}

const POWER_MAX_ITER: usize = 100_000;

/// `|∇²f(x)|_Max = max(λ_max(∇²f(x)), 0)` and a unit direction attaining it
/// (zero when the Hessian is negative semidefinite).
///
/// Power iteration on `∇²f(x) + B·I`, with `B` a Gershgorin bound from the
/// `d` coordinate probes, until the eigen-residual is at most `tol`.
pub fn hessian_max(f: &dyn Loss, x: &[f64], tol: f64) -> Result<(f64, Vec<f64>)> {
    if !f.has_hessian() {
        return Err(Error::NoHessian);
    }
    let d = x.len();
    let hv = |v: &[f64]| f.hessian_vec(x, v).ok_or(Error::NoHessian);
    let mut e = vec![0.0; d];
    let mut columns = Vec::with_capacity(d);
    for j in 0..d {
        e[j] = 1.0;
        columns.push(hv(&e)?);
        e[j] = 0.0;
    }
    let bound = (0..d)
        .map(|j| columns[j].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if bound == 0.0 {
        return Ok((0.0, vec![0.0; d]));
    }
    if d == 1 {
        let h = columns[0][0];
        return Ok(if h > 0.0 { (h, vec![1.0]) } else { (0.0, vec![0.0]) });
    }
    // start from (H + B·I)c for a fixed generic c; this misses the top
    // eigenvector only if c is exactly orthogonal to it
    let mut v = vec![0.0; d];
    for (j, col) in columns.iter().enumerate() {
        let c = 1.0 / (j as f64 + std::f64::consts::SQRT_2);
        for (vi, hij) in v.iter_mut().zip(col) {
            *vi += c * hij;
        }
        v[j] += c * bound;
    }
    normalize(&mut v);
    let mut rho = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = hv(&v)?;
        rho = dot(&v, &w);
        let residual = norm(&w.iter().zip(&v).map(|(a, b)| a - rho * b).collect::<Vec<_>>());
        if residual <= tol * bound.max(1.0) {
            break;
        }
        v = w.iter().zip(&v).map(|(a, b)| a + bound * b).collect();
        normalize(&mut v);
    }
    if rho <= 0.0 {
        return Ok((0.0, vec![0.0; d]));
    }
    // fix the sign so the direction field is a deterministic function of x
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
    Ok((rho, v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
}

const RAY_REL_TOL: f64 = 1e-8;
const RAY_MAX_DOUBLINGS: usize = 200;

/// Maximizes `λ ↦ J(λθ0)` over `λ >= 0`.
///
/// Doubling from `λ = h/‖θ0‖` brackets the maximizer, golden section then
/// refines it to relative width `1e-8`. On sampler measures every probe
/// reuses one batch, so the one-dimensional objective is deterministic.
pub fn ray_optimize(
    objective: &Objective,
    measure: &Measure,
    direction: FieldRef,
    integration: Integration,
    seed_offset: u64,
) -> Result<(RiskEstimate, ScaledField)> {
    if direction.dim() != objective.dim() {
        return Err(Error::DimensionMismatch { expected: objective.dim(), got: direction.dim() });
    }
    let pts = measure.point_set(integration, seed_offset)?;
    let base = direction.eval_batch(pts.coords());
    let (baseline, _) = objective.baseline(&pts);
    let mc_batch = (!pts.is_exact()).then_some(pts.len());
    let seed = match measure {
        Measure::Sampler(s) => s.seed(),
        Measure::Discrete(_) => 0,
    };
    let zero = objective.evaluate_shifts(&pts, &vec![0.0; base.len()])?;
    let n0 = objective.evaluate_shifts(&pts, &base)?.norm;
    let finish = |lambda: f64, e: Evaluation, iterations: usize| -> Result<(RiskEstimate, ScaledField)> {
        let mut est = RiskEstimate::from_evaluation(
            &e,
            baseline,
            FieldDescriptor::Ray { direction: format!("{direction:?}"), lambda },
            objective.h(),
            objective.regime(),
            seed,
            mc_batch,
        );
        est.iterations = iterations;
        Ok((est, ScaledField::new(direction.clone(), lambda)?))
    };
    if n0 == 0.0 {
        return finish(0.0, zero, 0);
    }

    let mut evals = 0usize;
    let mut g = |lambda: f64| -> Result<Evaluation> {
        evals += 1;
        let t: Vec<f64> = base.iter().map(|v| lambda * v).collect();
        objective.evaluate_shifts(&pts, &t)
    };

    let h = objective.h();
    let wall = objective
        .penalty()
        .ball_radius()
        .map(|a| (a * h).powf(1.0 / objective.regime().kappa()) / n0);

    let mut best = (0.0, zero);
    let consider = |lambda: f64, e: Evaluation, best: &mut (f64, Evaluation)| {
        if e.value > best.1.value {
            *best = (lambda, e);
        }
    };

    let (lo, hi) = match wall {
        Some(w) => {
            let e = g(w)?;
            consider(w, e, &mut best);
            (0.0, w)
        }
        None => {
            let mut prev = (0.0, zero.value);
            let mut prev2 = 0.0;
            let mut lambda = h / n0;
            let mut bracket = None;
            for _ in 0..RAY_MAX_DOUBLINGS {
                let e = g(lambda)?;
                consider(lambda, e, &mut best);
                if !(e.value > prev.1) {
                    bracket = Some((prev2, lambda));
                    break;
                }
                prev2 = prev.0;
                prev = (lambda, e.value);
                lambda *= 2.0;
            }
            match bracket {
                Some(b) => b,
                None => {
                    let (l, e) = best;
                    return finish(l, e, evals).map(|(mut est, f)| {
                        est.flagged = true;
                        (est, f)
                    });
                }
            }
        }
    };

    let mut failure = None;
    // probes are recorded in `best`; the search's own return value is one of them
    golden_section_max(
        |l| match g(l) {
            Ok(e) => {
                consider(l, e, &mut best);
                e.value
            }
            Err(err) => {
                failure.get_or_insert(err);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        RAY_REL_TOL * hi,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    let (l, e) = best;
    finish(l, e, evals)
}
