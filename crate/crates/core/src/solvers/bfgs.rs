//! BFGS with inverse-Hessian updates and Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsOptions {
    /// Stop once `‖∇‖_∞ <= gtol`.
    pub gtol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { gtol: 1e-8, max_iter: 500, c1: 1e-4, shrink: 0.5, max_backtracks: 80 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The line search failed even after resetting the curvature model.
    pub line_search_failure: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient. `+∞` values are
/// rejected by the line search, so they can encode hard constraints.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    // dense inverse Hessian approximation, row-major; None means identity
    let mut hinv: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut line_search_failure = false;
    let mut converged = inf_norm(&g) <= opts.gtol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut reset = false;
        let step = loop {
            let mut p: Vec<f64> = match &hinv {
                Some(h) => (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect(),
                None => g.iter().map(|v| -v).collect(),
            };
            let mut slope = dot(&p, &g);
            if !(slope < 0.0) {
                hinv = None;
                p = g.iter().map(|v| -v).collect();
                slope = dot(&p, &g);
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
                let (ft, gt) = f(&trial)?;
                if ft.is_finite() && ft <= fx + opts.c1 * alpha * slope {
                    accepted = Some((trial, ft, gt, alpha, p.clone()));
                    break;
                }
                alpha *= opts.shrink;
            }
            match accepted {
                Some(a) => break Some(a),
                None if !reset && hinv.is_some() => {
                    hinv = None;
                    reset = true;
                }
                None => break None,
            }
        };
        let Some((x_new, f_new, g_new, alpha, p)) = step else {
            line_search_failure = true;
            break;
        };

        let s: Vec<f64> = p.iter().map(|v| alpha * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            let h = hinv.get_or_insert_with(|| {
                let scale = sy / dot(&y, &y);
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = scale;
                }
                m
            });
            let rho = 1.0 / sy;
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        converged = inf_norm(&g) <= opts.gtol;
    }

    Ok(BfgsResult { grad_inf: inf_norm(&g), x, fx, iterations, converged, line_search_failure })
}
