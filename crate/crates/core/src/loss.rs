//! Loss (payoff) functions `f ∈ Lip_p` with the derivative information the
//! solvers and the expansion formulas need.
//!
//! Analytic pieces are optional. Missing gradients fall back to central
//! differences ([`fd_gradient`]); a missing local Lipschitz field falls back
//! to `‖∇f‖` and then to a directional finite-difference scan, which is only
//! approximate for kinked losses.

use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::norm;
use crate::rng::stream_rng;

pub trait Loss: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Declared constant `L_f` of the `Lip_p` bound.
    fn lip_p_constant(&self) -> f64;

    fn has_gradient(&self) -> bool {
        false
    }

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_hessian(&self) -> bool {
        false
    }

    fn hessian_vec(&self, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Exact local Lipschitz constant `|f|_Lip(x)`, for losses where `‖∇f‖` is
    /// not the right answer (kinks).
    fn lip_field(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Measurable direction of steepest ascent, `‖v(x)‖ ∈ {0, 1}`.
    fn ascent_dir(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_ascent_dir(&self) -> bool {
        false
    }

    /// Whether [`gradient_of`] may fall back to central differences.
    fn finite_differences(&self) -> bool {
        true
    }
}

pub type LossRef = Arc<dyn Loss>;

const FD_GRADIENT_STEP: f64 = 6e-6;
const LIP_FD_STEP: f64 = 1e-4;
const LIP_FD_DIRECTIONS: usize = 64;
const ASCENT_ZERO_THRESHOLD: f64 = 1e-12;

/// Central differences, one coordinate at a time.
pub fn fd_gradient(f: &dyn Loss, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            probe[i] = xi + step;
            let up = f.value(&probe);
            probe[i] = xi - step;
            let down = f.value(&probe);
            probe[i] = xi;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Analytic gradient, or central differences when allowed.
pub fn gradient_of(f: &dyn Loss, x: &[f64]) -> Result<Vec<f64>> {
    if f.has_gradient() {
        if let Some(g) = f.gradient(x) {
            return Ok(g);
        }
    }
    if f.finite_differences() {
        let scale = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        return Ok(fd_gradient(f, x, FD_GRADIENT_STEP * scale));
    }
    Err(Error::MissingGradient)
}

/// `|f|_Lip(x)`: exact field, then `‖∇f(x)‖`, then a finite-difference scan of
/// `sup_u (f(x + t u) − f(x)) / t` over 64 quasi-uniform unit directions.
pub fn lip_field_of(f: &dyn Loss, x: &[f64]) -> f64 {
    if let Some(l) = f.lip_field(x) {
        return l;
    }
    if f.has_gradient() {
        if let Some(g) = f.gradient(x) {
            return norm(&g);
        }
    }
    let fx = f.value(x);
    let mut probe = x.to_vec();
    let mut best = 0.0_f64;
    for u in unit_directions(x.len()) {
        for (p, (xi, ui)) in probe.iter_mut().zip(x.iter().zip(&u)) {
            *p = xi + LIP_FD_STEP * ui;
        }
        best = best.max((f.value(&probe) - fx) / LIP_FD_STEP);
    }
    best
}

/// Steepest-ascent direction: the exact field if supplied, otherwise
/// `∇f/‖∇f‖` (zero where `‖∇f‖ <= 1e-12`) from the analytic gradient.
pub fn ascent_dir_of(f: &dyn Loss, x: &[f64]) -> Option<Vec<f64>> {
    if f.has_ascent_dir() {
        if let Some(v) = f.ascent_dir(x) {
            return Some(v);
        }
    }
    if f.has_gradient() {
        let g = f.gradient(x)?;
        let n = norm(&g);
        if n > ASCENT_ZERO_THRESHOLD {
            return Some(g.into_iter().map(|v| v / n).collect());
        }
        return Some(vec![0.0; x.len()]);
    }
    None
}

/// Checks `|f(x)| <= (|f(0)| + L_f)(1 + ‖x‖)^p` at the given points.
pub fn satisfies_growth(f: &dyn Loss, p: f64, points: &[Vec<f64>]) -> bool {
    let zero = vec![0.0; f.dim()];
    let bound = f.value(&zero).abs() + f.lip_p_constant();
    points
        .iter()
        .all(|x| f.value(x).abs() <= bound * (1.0 + norm(x)).powf(p) * (1.0 + 1e-12) + 1e-300)
}

fn unit_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..LIP_FD_DIRECTIONS)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / LIP_FD_DIRECTIONS as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(LIP_FD_DIRECTIONS.max(2 * d));
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; d];
                    e[i] = s;
                    dirs.push(e);
                }
            }
            let mut rng = stream_rng(0x11B5, d as u64);
            while dirs.len() < LIP_FD_DIRECTIONS.max(2 * d) {
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&z);
                if n > 1e-8 {
                    dirs.push(z.into_iter().map(|v| v / n).collect());
                }
            }
            dirs
        }
    }
}

/// Compactly supported Gaussian-type kernel
/// `c·exp(1 + r²/(‖x − x̄‖² − r²))` on the open ball of radius `r`, zero outside.
#[derive(Debug, Clone)]
pub struct BumpLoss {
    c: f64,
    r: f64,
    center: Vec<f64>,
    lip: f64,
}

impl BumpLoss {
    pub fn new(c: f64, r: f64, center: Vec<f64>) -> Result<Self> {
        if !(c > 0.0 && r > 0.0 && c.is_finite() && r.is_finite()) {
            return Err(Error::InvalidLoss(format!("bump needs c > 0 and r > 0 (got c={c}, r={r})")));
        }
        if center.is_empty() {
            return Err(Error::InvalidLoss("bump center must be non-empty".into()));
        }
        let lip = bump_max_slope(c, r);
        Ok(Self { c, r, center, lip })
    }

    /// Squared distance to the center and `f` at that distance.
    fn radial(&self, x: &[f64]) -> (f64, f64) {
        let s: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        let r2 = self.r * self.r;
        if s >= r2 {
            (s, 0.0)
        } else {
            (s, self.c * (1.0 + r2 / (s - r2)).exp())
        }
    }
}

/// `sup_x ‖∇f(x)‖` for the bump, as a function of `t = ‖x − x̄‖/r`:
/// `c·exp(1 − 1/(1 − t²))·2t / (r(1 − t²)²)`.
fn bump_max_slope(c: f64, r: f64) -> f64 {
    let slope = |t: f64| {
        let q = 1.0 - t * t;
        if q <= 0.0 {
            0.0
        } else {
            c * (1.0 - 1.0 / q).exp() * 2.0 * t / (r * q * q)
        }
    };
    let n = 20_000;
    let (mut best_t, mut best) = (0.0, 0.0);
    for i in 1..n {
        let t = i as f64 / n as f64;
        let v = slope(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let lo = (best_t - 1.0 / n as f64).max(0.0);
    let hi = (best_t + 1.0 / n as f64).min(1.0);
    let (_, refined) = crate::penalty::golden_section_max(slope, lo, hi, 1e-14);
    refined.max(best)
}

impl Loss for BumpLoss {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.radial(x).1
    }

    fn lip_p_constant(&self) -> f64 {
        self.lip
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (s, f) = self.radial(x);
        if f == 0.0 {
            return Some(vec![0.0; x.len()]);
        }
        let r2 = self.r * self.r;
        let g = -r2 / (s - r2).powi(2);
        Some(x.iter().zip(&self.center).map(|(a, b)| 2.0 * f * g * (a - b)).collect())
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let (s, f) = self.radial(x);
        if f == 0.0 {
            return Some(vec![0.0; x.len()]);
        }
        let r2 = self.r * self.r;
        let g = -r2 / (s - r2).powi(2);
        let dg = 2.0 * r2 / (s - r2).powi(3);
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let dv: f64 = d.iter().zip(v).map(|(a, b)| a * b).sum();
        let rank_one = 4.0 * f * (g * g + dg) * dv;
        Some(v.iter().zip(&d).map(|(vi, di)| 2.0 * f * g * vi + rank_one * di).collect())
    }
}

/// Pointwise sum of losses of equal dimension.
#[derive(Debug, Clone)]
pub struct SumLoss {
    dim: usize,
    parts: Vec<LossRef>,
}

impl SumLoss {
    /// An empty list gives the zero function on `R^dim`.
    pub fn new(dim: usize, parts: Vec<LossRef>) -> Result<Self> {
        for p in &parts {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
        }
        Ok(Self { dim, parts })
    }
}

impl Loss for SumLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.value(x)).sum()
    }

    fn lip_p_constant(&self) -> f64 {
        self.parts.iter().map(|p| p.lip_p_constant()).sum()
    }

    fn has_gradient(&self) -> bool {
        self.parts.iter().all(|p| p.has_gradient())
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.dim];
        for p in &self.parts {
            for (gi, pi) in g.iter_mut().zip(p.gradient(x)?) {
                *gi += pi;
            }
        }
        Some(g)
    }

    fn has_hessian(&self) -> bool {
        self.parts.iter().all(|p| p.has_hessian())
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        for p in &self.parts {
            for (o, h) in out.iter_mut().zip(p.hessian_vec(x, v)?) {
                *o += h;
            }
        }
        Some(out)
    }

    fn finite_differences(&self) -> bool {
        self.parts.iter().all(|p| p.finite_differences())
    }
}

/// European call payoff `(x − K)^+` on `R`.
#[derive(Debug, Clone)]
pub struct CallLoss {
    strike: f64,
}

impl CallLoss {
    pub fn new(strike: f64) -> Result<Self> {
        if !strike.is_finite() {
            return Err(Error::InvalidLoss("strike must be finite".into()));
        }
        Ok(Self { strike })
    }

    fn in_money(&self, x: &[f64]) -> f64 {
        if x[0] >= self.strike {
            1.0
        } else {
            0.0
        }
    }
}

impl Loss for CallLoss {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        (x[0] - self.strike).max(0.0)
    }

    fn lip_p_constant(&self) -> f64 {
        1.0
    }

    /// One-sided: `1_{[K, ∞)}`.
    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.in_money(x)])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian_vec(&self, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }

    fn lip_field(&self, x: &[f64]) -> Option<f64> {
        Some(self.in_money(x))
    }

    fn has_ascent_dir(&self) -> bool {
        true
    }

    fn ascent_dir(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.in_money(x)])
    }
}

/// Bull call spread `g(x) = (x − K1)^+ − (x − K2)^+` read on log-returns,
/// `y ↦ g(exp(y))`.
///
/// With `smoothing = ε > 0` each kink `t ↦ t^+` becomes `ε·s(t/ε)` where
/// `s(t) = 0` for `t <= −1`, `t` for `t >= 1`, and on `[−1, 1]`
/// `s(t) = 2u³ − u⁴` with `u = (t + 1)/2`. That blend matches value, slope and
/// curvature at `±1`, so the smoothed payoff is C² and stays within `ε` of the
/// original.
#[derive(Debug, Clone)]
pub struct BullSpreadReturns {
    k1: f64,
    k2: f64,
    eps: f64,
}

impl BullSpreadReturns {
    pub fn new(k1: f64, k2: f64, smoothing: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > k1 && k2.is_finite()) {
            return Err(Error::BadStrikes { k1, k2 });
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidLoss(format!("smoothing must be >= 0, got {smoothing}")));
        }
        Ok(Self { k1, k2, eps: smoothing })
    }

    pub fn smoothing(&self) -> f64 {
        self.eps
    }

    /// `(k, k', k'')` of the (smoothed) positive part at `t`.
    fn ramp(&self, t: f64) -> (f64, f64, f64) {
        if self.eps == 0.0 {
            return if t >= 0.0 { (t, 1.0, 0.0) } else { (0.0, 0.0, 0.0) };
        }
        let z = t / self.eps;
        if z <= -1.0 {
            (0.0, 0.0, 0.0)
        } else if z >= 1.0 {
            (t, 1.0, 0.0)
        } else {
            let u = 0.5 * (z + 1.0);
            let s = 2.0 * u.powi(3) - u.powi(4);
            let ds = 3.0 * u * u - 2.0 * u.powi(3);
            let d2s = 3.0 * u * (1.0 - u);
            (self.eps * s, ds, d2s / self.eps)
        }
    }

    /// Payoff and its first two derivatives in the price variable.
    fn payoff(&self, x: f64) -> (f64, f64, f64) {
        let (a, da, d2a) = self.ramp(x - self.k1);
        let (b, db, d2b) = self.ramp(x - self.k2);
        (a - b, da - db, d2a - d2b)
    }
}

impl Loss for BullSpreadReturns {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.payoff(y[0].exp()).0
    }

    fn lip_p_constant(&self) -> f64 {
        self.k2 + self.eps
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        let x = y[0].exp();
        Some(vec![self.payoff(x).1 * x])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian_vec(&self, y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let x = y[0].exp();
        let (_, d1, d2) = self.payoff(x);
        Some(vec![(d2 * x * x + d1 * x) * v[0]])
    }

    fn lip_field(&self, y: &[f64]) -> Option<f64> {
        if self.eps > 0.0 {
            return None;
        }
        // ascending slope only on [K1, K2); at K2 moving left loses value
        let x = y[0].exp();
        Some(if x >= self.k1 && x < self.k2 { x } else { 0.0 })
    }

    fn has_ascent_dir(&self) -> bool {
        self.eps == 0.0
    }

    fn ascent_dir(&self, y: &[f64]) -> Option<Vec<f64>> {
        if self.eps > 0.0 {
            return None;
        }
        let x = y[0].exp();
        Some(vec![if x >= self.k1 && x < self.k2 { 1.0 } else { 0.0 }])
    }
}

/// `⟨c, x⟩`.
#[derive(Debug, Clone)]
pub struct LinearLoss {
    c: Vec<f64>,
}

impl LinearLoss {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidLoss("linear loss needs a coefficient vector".into()));
        }
        Ok(Self { c })
    }
}

impl Loss for LinearLoss {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.c).map(|(a, b)| a * b).sum()
    }

    fn lip_p_constant(&self) -> f64 {
        norm(&self.c)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(self.c.clone())
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian_vec(&self, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.c.len()])
    }
}

/// `½‖x‖²`; belongs to `Lip_p` for `p >= 2` with `L_f = 1`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    dim: usize,
}

impl QuadraticLoss {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Loss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn lip_p_constant(&self) -> f64 {
        1.0
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.to_vec())
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian_vec(&self, _x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct ConstantLoss {
    dim: usize,
    value: f64,
}

impl ConstantLoss {
    pub fn new(dim: usize, value: f64) -> Self {
        Self { dim, value }
    }
}

impl Loss for ConstantLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn lip_p_constant(&self) -> f64 {
        0.0
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian_vec(&self, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
}

/// `−f`; used for lower price bounds `−I(h)(−f)`.
#[derive(Debug, Clone)]
pub struct NegatedLoss {
    inner: LossRef,
}

impl NegatedLoss {
    pub fn new(inner: LossRef) -> Self {
        Self { inner }
    }
}

impl Loss for NegatedLoss {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        -self.inner.value(x)
    }

    fn lip_p_constant(&self) -> f64 {
        self.inner.lip_p_constant()
    }

    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.inner.gradient(x)?.into_iter().map(|v| -v).collect())
    }

    fn has_hessian(&self) -> bool {
        self.inner.has_hessian()
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(self.inner.hessian_vec(x, v)?.into_iter().map(|v| -v).collect())
    }

    fn finite_differences(&self) -> bool {
        self.inner.finite_differences()
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type HessVecFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// Loss assembled from closures; the entry point for user-defined losses.
#[derive(Clone)]
pub struct CustomLoss {
    dim: usize,
    lip_p: f64,
    value: Arc<ValueFn>,
    gradient: Option<Arc<VectorFn>>,
    hessian_vec: Option<Arc<HessVecFn>>,
    lip_field: Option<Arc<ValueFn>>,
    ascent_dir: Option<Arc<VectorFn>>,
    finite_differences: bool,
}

impl Debug for CustomLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomLoss")
            .field("dim", &self.dim)
            .field("lip_p", &self.lip_p)
            .field("gradient", &self.gradient.is_some())
            .field("hessian_vec", &self.hessian_vec.is_some())
            .finish()
    }
}

impl CustomLoss {
    pub fn new(dim: usize, lip_p: f64, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            lip_p,
            value: Arc::new(value),
            gradient: None,
            hessian_vec: None,
            lip_field: None,
            ascent_dir: None,
            finite_differences: true,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian_vec(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian_vec = Some(Arc::new(h));
        self
    }

    pub fn with_lip_field(mut self, l: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.lip_field = Some(Arc::new(l));
        self
    }

    pub fn with_ascent_dir(mut self, v: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.ascent_dir = Some(Arc::new(v));
        self
    }

    pub fn without_finite_differences(mut self) -> Self {
        self.finite_differences = false;
        self
    }
}

impl Loss for CustomLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn lip_p_constant(&self) -> f64 {
        self.lip_p
    }

    fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    fn has_hessian(&self) -> bool {
        self.hessian_vec.is_some()
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.hessian_vec.as_ref().map(|h| h(x, v))
    }

    fn lip_field(&self, x: &[f64]) -> Option<f64> {
        self.lip_field.as_ref().map(|l| l(x))
    }

    fn has_ascent_dir(&self) -> bool {
        self.ascent_dir.is_some()
    }

    fn ascent_dir(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.ascent_dir.as_ref().map(|v| v(x))
    }

    fn finite_differences(&self) -> bool {
        self.finite_differences
    }
}

/// Library losses by name, as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossDescriptor {
    Bump { c: f64, r: f64, center: Vec<f64> },
    Sum { dim: usize, parts: Vec<LossDescriptor> },
    Call { strike: f64 },
    BullSpreadReturns {
        k1: f64,
        k2: f64,
        #[serde(default)]
        smoothing: f64,
    },
    Linear { c: Vec<f64> },
    Quadratic { dim: usize },
    Constant { dim: usize, value: f64 },
    Negate { inner: Box<LossDescriptor> },
}

impl LossDescriptor {
    pub fn build(&self) -> Result<LossRef> {
        Ok(match self {
            LossDescriptor::Bump { c, r, center } => Arc::new(BumpLoss::new(*c, *r, center.clone())?),
            LossDescriptor::Sum { dim, parts } => {
                let parts = parts.iter().map(|p| p.build()).collect::<Result<Vec<_>>>()?;
                Arc::new(SumLoss::new(*dim, parts)?)
            }
            LossDescriptor::Call { strike } => Arc::new(CallLoss::new(*strike)?),
            LossDescriptor::BullSpreadReturns { k1, k2, smoothing } => {
                Arc::new(BullSpreadReturns::new(*k1, *k2, *smoothing)?)
            }
            LossDescriptor::Linear { c } => Arc::new(LinearLoss::new(c.clone())?),
            LossDescriptor::Quadratic { dim } => Arc::new(QuadraticLoss::new(*dim)),
            LossDescriptor::Constant { dim, value } => Arc::new(ConstantLoss::new(*dim, *value)),
            LossDescriptor::Negate { inner } => Arc::new(NegatedLoss::new(inner.build()?)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bump() -> BumpLoss {
        BumpLoss::new(1.0, 1.5, vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn bump_examples() {
        let f = bump();
        assert_abs_diff_eq!(f.value(&[0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_eq!(f.value(&[1.5, 0.0]), 0.0);
        assert_eq!(f.value(&[2.0, -3.0]), 0.0);
        // 1 - 2.25/1.6875 = -1/3
        let expected = (-1.0f64 / 3.0).exp();
        assert_abs_diff_eq!(f.value(&[0.75, 0.0]), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.716_531_310_573_789_2, epsilon = 1e-15);
    }

    #[test]
    fn bump_continuous_at_boundary() {
        let f = bump();
        let inside = [1.5 - 1e-6, 0.0];
        assert!(f.value(&inside) < 1e-100);
        assert!(norm(&f.gradient(&inside).unwrap()) < 1e-100);
    }

    #[test]
    fn sum_examples() {
        let empty = SumLoss::new(2, vec![]).unwrap();
        assert_eq!(empty.value(&[0.3, 0.1]), 0.0);
        assert_eq!(empty.gradient(&[0.3, 0.1]).unwrap(), vec![0.0, 0.0]);

        let pair = LossDescriptor::Sum {
            dim: 2,
            parts: vec![
                LossDescriptor::Bump { c: 0.5, r: 1.0, center: vec![0.0, 0.0] },
                LossDescriptor::Bump { c: 0.3, r: 0.75, center: vec![1.25, 0.0] },
            ],
        }
        .build()
        .unwrap();
        assert_abs_diff_eq!(pair.value(&[0.0, 0.0]), 0.5, epsilon = 1e-15);

        let b: LossRef = Arc::new(bump());
        let twice = SumLoss::new(2, vec![b.clone(), b.clone()]).unwrap();
        for x in [[0.1, 0.2], [-0.7, 0.9], [1.0, 1.0]] {
            assert_eq!(twice.value(&x), 2.0 * b.value(&x));
        }
        assert_eq!(twice.lip_p_constant(), 2.0 * b.lip_p_constant());
    }

    #[test]
    fn call_examples() {
        let f = CallLoss::new(1.0).unwrap();
        assert_eq!(f.value(&[1.5]), 0.5);
        assert_eq!(lip_field_of(&f, &[1.0]), 1.0);
        assert_eq!(ascent_dir_of(&f, &[1.0 - 1e-9]).unwrap(), vec![0.0]);
        assert_eq!(ascent_dir_of(&f, &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn bull_spread_examples() {
        let (k1, k2) = (1.0, 1.2);
        let f = BullSpreadReturns::new(k1, k2, 0.0).unwrap();
        assert_eq!(f.value(&[k1.ln()]), 0.0);
        assert_abs_diff_eq!(f.value(&[5.0]), k2 - k1, epsilon = 1e-12);
        let s = BullSpreadReturns::new(k1, k2, 0.01).unwrap();
        let y = ((k1 + k2) / 2.0_f64).ln();
        assert!((s.value(&[y]) - f.value(&[y])).abs() <= 0.01);
        for i in 0..2000 {
            let y = -0.5 + i as f64 * 5e-4;
            assert!((s.value(&[y]) - f.value(&[y])).abs() <= 0.01);
        }
        assert!(matches!(BullSpreadReturns::new(1.2, 1.0, 0.0), Err(Error::BadStrikes { .. })));
        assert!(matches!(BullSpreadReturns::new(0.0, 1.0, 0.0), Err(Error::BadStrikes { .. })));
    }

    #[test]
    fn smoothed_ramp_is_c2() {
        let f = BullSpreadReturns::new(1.0, 1.3, 0.05).unwrap();
        for &k in &[1.0f64, 1.3] {
            for &edge in &[-0.05, 0.05] {
                let y = (k + edge).ln();
                let a = f.hessian_vec(&[y - 1e-11], &[1.0]).unwrap()[0];
                let b = f.hessian_vec(&[y + 1e-11], &[1.0]).unwrap()[0];
                assert!((a - b).abs() < 1e-6, "curvature jumps at {y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bull_spread_derivatives_match_fd() {
        let f = BullSpreadReturns::new(1.0, 1.2, 0.02).unwrap();
        for i in 0..200 {
            let y = -0.3 + i as f64 * 0.003;
            let g = f.gradient(&[y]).unwrap()[0];
            let fd = fd_gradient(&f, &[y], 1e-6)[0];
            assert!((g - fd).abs() < 1e-6 * (1.0 + g.abs()), "y={y}");
            let h = f.hessian_vec(&[y], &[1.0]).unwrap()[0];
            let fdh = (f.gradient(&[y + 1e-6]).unwrap()[0] - f.gradient(&[y - 1e-6]).unwrap()[0]) / 2e-6;
            assert!((h - fdh).abs() < 1e-4 * (1.0 + h.abs()), "y={y}: {h} vs {fdh}");
        }
    }

    #[test]
    fn fd_gradient_examples() {
        let q = QuadraticLoss::new(2);
        let g = fd_gradient(&q, &[1.0, 2.0], 1e-5);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-8);
        let c = ConstantLoss::new(3, 4.2);
        assert_eq!(fd_gradient(&c, &[1.0, 2.0, 3.0], 1e-5), vec![0.0; 3]);
        let b = bump();
        let fd = fd_gradient(&b, &[0.5, 0.0], 1e-5);
        let an = b.gradient(&[0.5, 0.0]).unwrap();
        for (a, f) in an.iter().zip(&fd) {
            assert!((a - f).abs() < 1e-6);
        }
    }

    #[test]
    fn bump_hessian_matches_fd_of_gradient() {
        let f = BumpLoss::new(0.7, 1.2, vec![0.3, -0.2]).unwrap();
        let mut rng = stream_rng(5, 0);
        for _ in 0..100 {
            let x = [0.3 + rng.gen_range(-1.0..1.0), -0.2 + rng.gen_range(-1.0..1.0)];
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let hv = f.hessian_vec(&x, &v).unwrap();
            let step = 1e-6;
            let xp = [x[0] + step * v[0], x[1] + step * v[1]];
            let xm = [x[0] - step * v[0], x[1] - step * v[1]];
            let gp = f.gradient(&xp).unwrap();
            let gm = f.gradient(&xm).unwrap();
            for k in 0..2 {
                let fd = (gp[k] - gm[k]) / (2.0 * step);
                assert!((hv[k] - fd).abs() < 1e-5 * (1.0 + hv[k].abs()), "{x:?}");
            }
        }
    }

    #[test]
    fn bump_lip_constant_is_max_slope() {
        let f = bump();
        let scan = (0..150_000)
            .map(|i| norm(&f.gradient(&[i as f64 * 1e-5, 0.0]).unwrap()))
            .fold(0.0, f64::max);
        assert!(f.lip_p_constant() >= scan - 1e-12);
        assert!(f.lip_p_constant() <= scan * (1.0 + 1e-6));
    }

    #[test]
    fn lip_fd_fallback_approximates_gradient_norm() {
        let b = bump();
        let closure = CustomLoss::new(2, b.lip_p_constant(), move |x| b.value(x));
        let x = [0.4, -0.3];
        let exact = norm(&bump().gradient(&x).unwrap());
        let approx = lip_field_of(&closure, &x);
        assert!((approx - exact).abs() < 0.01 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn custom_loss_without_gradient() {
        let f = CustomLoss::new(1, 1.0, |x| x[0].abs()).without_finite_differences();
        assert!(matches!(gradient_of(&f, &[0.3]), Err(Error::MissingGradient)));
        assert!(ascent_dir_of(&f, &[0.3]).is_none());
    }

    #[test]
    fn library_losses_pass_growth_check() {
        let losses: Vec<(LossRef, f64)> = vec![
            (Arc::new(bump()), 2.0),
            (Arc::new(CallLoss::new(1.0).unwrap()), 2.0),
            (Arc::new(BullSpreadReturns::new(1.0, 1.2, 0.001).unwrap()), 3.0),
            (Arc::new(LinearLoss::new(vec![1.0, -2.0]).unwrap()), 2.0),
            (Arc::new(QuadraticLoss::new(2)), 2.0),
            (Arc::new(ConstantLoss::new(1, -3.0)), 2.0),
        ];
        let mut rng = stream_rng(1, 1);
        for (f, p) in losses {
            let pts: Vec<Vec<f64>> = (0..500)
                .map(|_| (0..f.dim()).map(|_| rng.gen_range(-6.0..6.0)).collect())
                .collect();
            assert!(satisfies_growth(f.as_ref(), p, &pts), "{f:?}");
        }
    }

    #[test]
    fn analytic_gradients_agree_with_fd() {
        let losses: Vec<LossRef> = vec![
            Arc::new(bump()),
            Arc::new(BumpLoss::new(0.3, 0.75, vec![1.25, 0.0]).unwrap()),
            Arc::new(LinearLoss::new(vec![0.5, 2.0]).unwrap()),
            Arc::new(QuadraticLoss::new(2)),
        ];
        let mut rng = stream_rng(2, 2);
        for f in losses {
            for _ in 0..100 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.6..1.6)).collect();
                let g = f.gradient(&x).unwrap();
                let fd = fd_gradient(f.as_ref(), &x, 1e-6);
                let scale = norm(&g).max(1e-3);
                let diff = norm(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(diff <= 1e-5 * scale, "{f:?} at {x:?}: {g:?} vs {fd:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn bump_gradient_points_to_center(rho in 0.01f64..1.49, angle in 0.0f64..6.283) {
            let f = BumpLoss::new(1.0, 1.5, vec![0.2, -0.1]).unwrap();
            let x = [0.2 + rho * angle.cos(), -0.1 + rho * angle.sin()];
            let g = f.gradient(&x).unwrap();
            let to_center = [0.2 - x[0], -0.1 - x[1]];
            prop_assert!(g[0] * to_center[0] + g[1] * to_center[1] > 0.0);
        }

        #[test]
        fn ascent_dir_is_unit_or_zero(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let f = bump();
            let v = ascent_dir_of(&f, &[x0, x1]).unwrap();
            let n = norm(&v);
            prop_assert!(n.abs() < 1e-12 || (n - 1.0).abs() < 1e-12);
            let g = f.gradient(&[x0, x1]).unwrap();
            prop_assert!((lip_field_of(&f, &[x0, x1]) - norm(&g)).abs() < 1e-8);
        }
    }
}
