use serde::{Deserialize, Serialize};

use super::bfgs::{minimize, BfgsOptions};
use crate::asymptotics::{first_order_coefficient, ray_optimize};
use crate::error::{Error, Result};
use crate::estimate::{FieldDescriptor, RiskEstimate};
use crate::fields::{center_shifts, FieldRef, FnField, TabularField};
use crate::loss::gradient_of;
use crate::measure::{DiscreteMeasure, Integration, Measure};
use crate::objective::{Objective, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub bfgs: BfgsOptions,
    /// Also start from `restart_scale` times the asymptotic direction and
    /// from its best multiple along the ray.
    pub restart: bool,
    pub restart_scale: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { bfgs: BfgsOptions::default(), restart: true, restart_scale: 1e-3 }
    }
}

/// Direction for the second start: the regime's asymptotic optimizer when it
/// is available, the plain gradient otherwise.
fn restart_direction(obj: &Objective, mu: &DiscreteMeasure) -> Option<FieldRef> {
    let measure = Measure::Discrete(mu.clone());
    if let Ok(r) = first_order_coefficient(
        obj.loss().clone(),
        &measure,
        obj.p(),
        obj.penalty(),
        obj.regime(),
        Integration::Exact,
    ) {
        return Some(r.direction);
    }
    let f = obj.loss().clone();
    if !(f.has_gradient() || f.finite_differences()) {
        return None;
    }
    Some(std::sync::Arc::new(FnField::new(f.dim(), "gradient", move |x| {
        gradient_of(f.as_ref(), x).unwrap_or_else(|_| vec![0.0; x.len()])
    })))
}

/// Maximizes `Σ α_i f(x_i + θ_i) − φ_h(‖θ‖)` (or its mean/martingale
/// variant) over the `n·d` shifts by BFGS on `−J`.
pub fn solve_discrete(
    obj: &Objective,
    mu: &DiscreteMeasure,
    init: Option<&TabularField>,
    opts: &SolveOptions,
) -> Result<(RiskEstimate, TabularField)> {
    if mu.dim() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: mu.dim() });
    }
    let pts = mu.point_set();
    let nd = pts.coords().len();
    let (baseline, _) = obj.baseline(&pts);

    let mut starts = vec![match init {
        Some(t) => {
            let flat = t.flat();
            if flat.len() != nd {
                return Err(Error::DimensionMismatch { expected: nd, got: flat.len() });
            }
            flat
        }
        None => vec![0.0; nd],
    }];
    if opts.restart {
        if let Some(dir) = restart_direction(obj, mu) {
            let base = dir.eval_batch(pts.coords());
            if base.iter().any(|v| *v != 0.0) {
                starts.push(base.iter().map(|v| opts.restart_scale * v).collect());
                // near the edge of a flat region the small start can stall
                // where the ray still finds mass
                let measure = Measure::Discrete(mu.clone());
                if let Ok((_, ray)) = ray_optimize(obj, &measure, dir, Integration::Exact, 0) {
                    if ray.scale() > 0.0 {
                        starts.push(base.iter().map(|v| ray.scale() * v).collect());
                    }
                }
            }
        }
    }

    let neg = |t: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (e, g) = obj.gradient_shifts(&pts, t)?;
        Ok((-e.value, g.into_iter().map(|v| -v).collect()))
    };

    let mut best: Option<(f64, Vec<f64>, usize, bool)> = None;
    let mut iterations = 0;
    for x0 in &starts {
        let start_value = obj.evaluate_shifts(&pts, x0)?.value;
        if !start_value.is_finite() {
            if best.is_none() && starts.len() == 1 {
                return Err(Error::NonFiniteObjective(format!("initial shifts give J = {start_value}")));
            }
            continue;
        }
        let r = minimize(neg, x0, &opts.bfgs)?;
        iterations += r.iterations;
        let value = -r.fx;
        // later starts must win by more than rounding; ties keep the earlier,
        // more tightly converged iterate
        if best.as_ref().map_or(true, |b| value > b.0 + 1e-12 * b.0.abs().max(1.0)) {
            best = Some((value, r.x, r.iterations, r.line_search_failure && !r.converged));
        }
    }
    let (_, mut shifts, _, flagged) = best.ok_or_else(|| Error::NonFiniteObjective("no feasible start".into()))?;
    if obj.regime() == Regime::Mean {
        center_shifts(&mut shifts, pts.weights(), pts.dim());
    }
    let e = obj.evaluate_shifts(&pts, &shifts)?;
    if !e.value.is_finite() {
        return Err(Error::NonFiniteObjective(format!("optimum has J = {}", e.value)));
    }
    let field = TabularField::from_flat(mu, &shifts)?;
    let mut est = RiskEstimate::from_evaluation(
        &e,
        baseline,
        FieldDescriptor::Tabular { shifts: field.shifts().to_vec() },
        obj.h(),
        obj.regime(),
        0,
        None,
    );
    est.iterations = iterations;
    est.flagged = flagged;
    Ok((est, field))
}
