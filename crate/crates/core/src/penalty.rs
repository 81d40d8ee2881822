//! Penalty functions `φ: [0, ∞) → [0, ∞]`, their uncertainty rescaling
//! `φ_h(v) = h·φ(v/h)` and convex conjugates `φ*(u) = sup_{v ≥ 0} (u·v − φ(v))`.
//!
//! `+∞` is represented by `f64::INFINITY`. It only ever comes out of the
//! ball indicator; conjugation always returns a finite value because every
//! accepted penalty carries a growth exponent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized form of a penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyDescriptor {
    /// `φ(v) = a·v^m`.
    Power { a: f64, m: f64 },
    /// `φ = ∞·1_{(a, ∞)}`.
    Ball { a: f64 },
    /// Piecewise-linear interpolation of samples, extended by `growth`.
    Table { v: Vec<f64>, phi: Vec<f64>, growth: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Power { a: f64, m: f64 },
    Ball { a: f64 },
    Table { v: Vec<f64>, phi: Vec<f64>, growth: f64 },
}

/// A validated nondecreasing penalty with `φ(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltyDescriptor", into = "PenaltyDescriptor")]
pub struct Penalty {
    kind: Kind,
}

/// Result of a numeric conjugate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePoint {
    pub value: f64,
    pub argmax: f64,
}

const CONJUGATE_REL_TOL: f64 = 1e-10;
const MAX_BRACKET: f64 = 1152921504606846976.0; // 2^60

impl Penalty {
    pub fn power(a: f64, m: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidPenalty(format!("power coefficient a must be > 0, got {a}")));
        }
        if !(m.is_finite() && m > 1.0) {
            return Err(Error::InvalidPenalty(format!("power exponent m must be > 1, got {m}")));
        }
        Ok(Self { kind: Kind::Power { a, m } })
    }

    /// Indicator of the closed ball of radius `a`: hard Wasserstein balls of radius `a·h`.
    pub fn ball(a: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidPenalty(format!("ball radius must be >= 0, got {a}")));
        }
        Ok(Self { kind: Kind::Ball { a } })
    }

    /// Piecewise-linear penalty through `(v[i], phi[i])`, continued beyond the
    /// last sample as `phi_N·(v/v_N)^growth`.
    ///
    /// Convexity is not checked. For a nonconvex table the numeric conjugate is
    /// the conjugate of its convex envelope only up to the accuracy of the
    /// golden-section search, which assumes unimodality.
    pub fn table(v: Vec<f64>, phi: Vec<f64>, growth: f64) -> Result<Self> {
        if v.len() != phi.len() || v.len() < 2 {
            return Err(Error::InvalidPenalty(format!(
                "table needs matching v/phi of length >= 2 (got {} and {})",
                v.len(),
                phi.len()
            )));
        }
        if v.iter().chain(phi.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidPenalty("table entries must be finite".into()));
        }
        if v[0] != 0.0 || phi[0] != 0.0 {
            return Err(Error::InvalidPenalty("table must start at (0, 0)".into()));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPenalty("table abscissae must be strictly increasing".into()));
        }
        if phi.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidPenalty("table values must be nondecreasing".into()));
        }
        if *phi.last().unwrap() <= 0.0 {
            return Err(Error::InvalidPenalty("table must end with a positive value".into()));
        }
        if !(growth.is_finite() && growth > 0.0) {
            return Err(Error::InvalidPenalty(format!("growth exponent must be > 0, got {growth}")));
        }
        Ok(Self { kind: Kind::Table { v, phi, growth } })
    }

    pub fn from_descriptor(d: PenaltyDescriptor) -> Result<Self> {
        match d {
            PenaltyDescriptor::Power { a, m } => Self::power(a, m),
            PenaltyDescriptor::Ball { a } => Self::ball(a),
            PenaltyDescriptor::Table { v, phi, growth } => Self::table(v, phi, growth),
        }
    }

    pub fn descriptor(&self) -> PenaltyDescriptor {
        match &self.kind {
            Kind::Power { a, m } => PenaltyDescriptor::Power { a: *a, m: *m },
            Kind::Ball { a } => PenaltyDescriptor::Ball { a: *a },
            Kind::Table { v, phi, growth } => PenaltyDescriptor::Table {
                v: v.clone(),
                phi: phi.clone(),
                growth: *growth,
            },
        }
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.kind, Kind::Ball { .. })
    }

    /// Radius `a` of a ball indicator.
    pub fn ball_radius(&self) -> Option<f64> {
        match self.kind {
            Kind::Ball { a } => Some(a),
            _ => None,
        }
    }

    /// The declared `γ` with `liminf φ(v)/v^γ > 0`; infinite for balls.
    pub fn growth_exponent(&self) -> f64 {
        match &self.kind {
            Kind::Power { m, .. } => *m,
            Kind::Ball { .. } => f64::INFINITY,
            Kind::Table { growth, .. } => *growth,
        }
    }

    /// Checks `γ >= required`.
    pub fn require_growth(&self, required: f64, regime: &'static str, p: f64) -> Result<()> {
        let growth = self.growth_exponent();
        if growth >= required {
            Ok(())
        } else {
            Err(Error::RegimePenaltyMismatch { regime, growth, p, required })
        }
    }

    /// `φ(v)` for `v >= 0`.
    pub fn value(&self, v: f64) -> f64 {
        debug_assert!(v >= 0.0, "penalty argument must be nonnegative");
        if v <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Power { a, m } => a * v.powf(*m),
            Kind::Ball { a } => {
                if v <= *a {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Kind::Table { v: xs, phi, growth } => {
                let n = xs.len();
                if v >= xs[n - 1] {
                    return phi[n - 1] * (v / xs[n - 1]).powf(*growth);
                }
                let k = xs.partition_point(|&x| x <= v);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let t = (v - x0) / (x1 - x0);
                phi[k - 1] + t * (phi[k] - phi[k - 1])
            }
        }
    }

    /// Right derivative `φ'(v)`; zero inside a ball, infinite outside.
    pub fn derivative(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        match &self.kind {
            Kind::Power { a, m } => {
                if v == 0.0 {
                    0.0
                } else {
                    a * m * v.powf(m - 1.0)
                }
            }
            Kind::Ball { a } => {
                if v <= *a {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Kind::Table { v: xs, phi, growth } => {
                let n = xs.len();
                if v >= xs[n - 1] {
                    return growth * phi[n - 1] * v.powf(growth - 1.0) / xs[n - 1].powf(*growth);
                }
                let k = xs.partition_point(|&x| x <= v);
                (phi[k] - phi[k - 1]) / (xs[k] - xs[k - 1])
            }
        }
    }

    /// Rescaled penalty `φ_h(v) = h·φ(v/h)`.
    pub fn rescaled(&self, h: f64, v: f64) -> f64 {
        debug_assert!(h > 0.0);
        if v <= 0.0 {
            return 0.0;
        }
        h * self.value(v / h)
    }

    /// `d/dv φ_h(v) = φ'(v/h)`.
    pub fn rescaled_derivative(&self, h: f64, v: f64) -> f64 {
        self.derivative(v / h)
    }

    /// Convex conjugate `φ*(u)`, closed form for power and ball penalties.
    pub fn conjugate(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::BadInput(format!("conjugate argument must be >= 0, got {u}")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            Kind::Power { a, m } => Ok((m - 1.0) * a * (u / (m * a)).powf(m / (m - 1.0))),
            Kind::Ball { a } => Ok(a * u),
            Kind::Table { .. } => self.conjugate_numeric(u).map(|c| c.value),
        }
    }

    /// Numeric conjugate: doubling search for a bracket `[0, V]` with
    /// `φ(V) > u·V`, then golden-section maximization of `v ↦ u·v − φ(v)`.
    pub fn conjugate_numeric(&self, u: f64) -> Result<ConjugatePoint> {
        if !(u >= 0.0) {
            return Err(Error::BadInput(format!("conjugate argument must be >= 0, got {u}")));
        }
        if u == 0.0 {
            return Ok(ConjugatePoint { value: 0.0, argmax: 0.0 });
        }
        if let Kind::Ball { a } = self.kind {
            // the maximizer sits on the wall, which a bracketing search only approaches
            return Ok(ConjugatePoint { value: a * u, argmax: a });
        }
        let gain = |v: f64| u * v - self.value(v);
        let mut upper = 1.0_f64;
        while !(self.value(upper) > u * upper) {
            upper *= 2.0;
            if upper > MAX_BRACKET {
                return Err(Error::NonconvergentConjugate { u });
            }
        }
        let (argmax, value) = golden_section_max(gain, 0.0, upper, CONJUGATE_REL_TOL * upper);
        if value > 0.0 {
            Ok(ConjugatePoint { value, argmax })
        } else {
            Ok(ConjugatePoint { value: 0.0, argmax: 0.0 })
        }
    }
}

impl TryFrom<PenaltyDescriptor> for Penalty {
    type Error = Error;

    fn try_from(d: PenaltyDescriptor) -> Result<Self> {
        Self::from_descriptor(d)
    }
}

impl From<Penalty> for PenaltyDescriptor {
    fn from(p: Penalty) -> Self {
        p.descriptor()
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
/// Ties move the bracket left, so `-∞` plateaus on the right are discarded.
pub(crate) fn golden_section_max<F: FnMut(f64) -> f64>(
    mut g: F,
    mut lo: f64,
    mut hi: f64,
    width_tol: f64,
) -> (f64, f64) {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut gc = g(c);
    let mut gd = g(d);
    let mut iters = 0;
    while hi - lo > width_tol && iters < 400 {
        if gc >= gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - INV_PHI * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + INV_PHI * (hi - lo);
            gd = g(d);
        }
        iters += 1;
    }
    if gc >= gd {
        (c, gc)
    } else {
        (d, gd)
    }
}
