//! Baseline probability measures on `R^d`.
//!
//! A [`DiscreteMeasure`] is integrated exactly. A [`SamplerMeasure`] is
//! integrated by Monte Carlo; each optimization step asks for one
//! [`PointSet`] and reuses it for every integral of that step.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{salted, stream_rng};

/// Points with integration weights, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    exact: bool,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>, exact: bool) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * weights.len(),
                got: coords.len(),
            });
        }
        Ok(Self { dim, coords, weights, exact })
    }

    /// Equally weighted sample points.
    pub fn uniform(dim: usize, coords: Vec<f64>, exact: bool) -> Result<Self> {
        let n = coords.len() / dim.max(1);
        Self::new(dim, coords, vec![1.0 / n as f64; n], exact)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// True for the atoms of a discrete measure, false for MC samples.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// `∫ g dμ` with a standard error (zero on exact point sets).
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut g: F) -> (f64, f64) {
        let values: Vec<f64> = (0..self.len()).map(|i| g(self.point(i))).collect();
        self.mean_and_stderr(&values)
    }

    /// Weighted mean of per-point values and, for sampled sets, its standard error.
    pub fn mean_and_stderr(&self, values: &[f64]) -> (f64, f64) {
        let mean: f64 = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        if self.exact || values.len() < 2 {
            return (mean, 0.0);
        }
        let n = values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

/// How integrals against a measure are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integration {
    /// Exact weighted sums; only atomic measures support it.
    Exact,
    /// One common batch of `batch` draws per evaluation.
    MonteCarlo { batch: usize },
}

/// Finite atomic measure `Σ α_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Duplicate atoms are merged and their weights summed.
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("a discrete measure needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::InvalidMeasure("atoms must have dimension >= 1".into()));
        }
        for a in &atoms {
            if a.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.len() });
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMeasure("atoms must be finite".into()));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        let mut merged_atoms: Vec<Vec<f64>> = Vec::with_capacity(atoms.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (a, w) in atoms.into_iter().zip(weights) {
            match merged_atoms.iter().position(|b| *b == a) {
                Some(k) => merged_weights[k] += w,
                None => {
                    merged_atoms.push(a);
                    merged_weights.push(w);
                }
            }
        }
        Ok(Self { dim, atoms: merged_atoms, weights: merged_weights })
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for (mk, ak) in m.iter_mut().zip(a) {
                *mk += w * ak;
            }
        }
        m
    }

    pub fn point_set(&self) -> PointSet {
        PointSet {
            dim: self.dim,
            coords: self.atoms.iter().flatten().copied().collect(),
            weights: self.weights.clone(),
            exact: true,
        }
    }

    /// `n` i.i.d. categorical draws of atoms.
    pub fn sample(&self, n: usize, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, stream);
        let cumulative: Vec<f64> = self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut out = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * cumulative[cumulative.len() - 1];
            let k = cumulative.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
            out.extend_from_slice(&self.atoms[k]);
        }
        out
    }

    /// Loads a headerless CSV with one point per row as a uniform measure.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut atoms = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| {
                Error::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), line_no + 1),
                ))
            })?;
            atoms.push(row);
        }
        if atoms.is_empty() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}: no samples", path.display()),
            )));
        }
        // repeated rows are merged; weights stay proportional to multiplicity
        Self::uniform(atoms)
    }
}

/// Sampler kinds for continuous (or resampled empirical) baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        cholesky: Vec<Vec<f64>>,
    },
    /// One-dimensional normal law of log-returns `N(mean, variance)`.
    LognormalReturns { mean: f64, variance: f64 },
    /// Resampling with replacement from an empirical measure.
    Empirical(DiscreteMeasure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerMeasure {
    kind: SamplerKind,
    seed: u64,
}

impl SamplerMeasure {
    pub fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidMeasure(format!("covariance must be {d} x {d}")));
        }
        let scale = covariance.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (covariance[i][j] - covariance[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidMeasure("covariance must be symmetric".into()));
                }
            }
        }
        let cholesky = cholesky_psd(&covariance)
            .ok_or_else(|| Error::InvalidMeasure("covariance is not positive semidefinite".into()))?;
        Ok(Self { kind: SamplerKind::Gaussian { mean, covariance, cholesky }, seed })
    }

    pub fn standard_gaussian(mean: Vec<f64>, seed: u64) -> Result<Self> {
        let d = mean.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::gaussian(mean, cov, seed)
    }

    /// Log-returns of a zero-rate Black–Scholes model: `N(−σ²T/2, σ²T)`.
    pub fn lognormal_returns(sigma: f64, horizon: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && horizon > 0.0) {
            return Err(Error::InvalidMeasure("sigma and T must be positive".into()));
        }
        let variance = sigma * sigma * horizon;
        Ok(Self { kind: SamplerKind::LognormalReturns { mean: -0.5 * variance, variance }, seed })
    }

    pub fn normal_returns(mean: f64, variance: f64, seed: u64) -> Result<Self> {
        if !(variance > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidMeasure("variance must be positive".into()));
        }
        Ok(Self { kind: SamplerKind::LognormalReturns { mean, variance }, seed })
    }

    pub fn empirical(measure: DiscreteMeasure, seed: u64) -> Self {
        Self { kind: SamplerKind::Empirical(measure), seed }
    }

    pub fn kind(&self) -> &SamplerKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SamplerKind::Gaussian { mean, .. } => mean.len(),
            SamplerKind::LognormalReturns { .. } => 1,
            SamplerKind::Empirical(m) => m.dim(),
        }
    }

    pub fn sample(&self, n: usize, seed_offset: u64) -> Vec<f64> {
        match &self.kind {
            SamplerKind::Gaussian { mean, cholesky, .. } => {
                let d = mean.len();
                let mut rng = stream_rng(self.seed, seed_offset);
                let mut out = Vec::with_capacity(n * d);
                let mut z = vec![0.0; d];
                for _ in 0..n {
                    for zk in z.iter_mut() {
                        *zk = rng.sample(StandardNormal);
                    }
                    for i in 0..d {
                        let lz: f64 = (0..=i).map(|j| cholesky[i][j] * z[j]).sum();
                        out.push(mean[i] + lz);
                    }
                }
                out
            }
            SamplerKind::LognormalReturns { mean, variance } => {
                let mut rng = stream_rng(self.seed, seed_offset);
                let sd = variance.sqrt();
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        mean + sd * z
                    })
                    .collect()
            }
            SamplerKind::Empirical(m) => m.sample(n, self.seed, seed_offset),
        }
    }
}

fn cholesky_psd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let scale = (0..d).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut l = vec![vec![0.0; d]; d];
    for j in 0..d {
        let s: f64 = (0..j).map(|k| l[j][k] * l[j][k]).sum();
        let pivot = a[j][j] - s;
        if pivot < -1e-12 * scale {
            return None;
        }
        if pivot <= 1e-14 * scale {
            // semidefinite direction: the column must vanish too
            for i in j + 1..d {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if (a[i][j] - s).abs() > 1e-10 * scale {
                    return None;
                }
            }
            continue;
        }
        let ljj = pivot.sqrt();
        l[j][j] = ljj;
        for i in j + 1..d {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = (a[i][j] - s) / ljj;
        }
    }
    Some(l)
}

/// Baseline measure `μ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Discrete(DiscreteMeasure),
    Sampler(SamplerMeasure),
}

/// A p-th moment `|μ|_p` with its MC standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    pub stderr: f64,
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(m) => m.dim(),
            Measure::Sampler(s) => s.dim(),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Measure::Discrete(_))
    }

    /// Atomic view for the exact solver: discrete measures and empirical samplers.
    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => Some(m),
            Measure::Sampler(SamplerMeasure { kind: SamplerKind::Empirical(m), .. }) => Some(m),
            Measure::Sampler(_) => None,
        }
    }

    /// `n` draws; discrete measures use seed 0 with `seed_offset` as stream.
    pub fn sample(&self, n: usize, seed_offset: u64) -> Vec<f64> {
        match self {
            Measure::Discrete(m) => m.sample(n, 0, seed_offset),
            Measure::Sampler(s) => s.sample(n, seed_offset),
        }
    }

    /// Points for one evaluation. Discrete measures always integrate exactly;
    /// samplers draw `batch` points from substream `seed_offset`.
    pub fn point_set(&self, integration: Integration, seed_offset: u64) -> Result<PointSet> {
        match (self, integration) {
            (Measure::Discrete(m), _) => Ok(m.point_set()),
            (Measure::Sampler(s), Integration::MonteCarlo { batch }) => {
                if batch < 2 {
                    return Err(Error::BadInput("Monte Carlo batch must be >= 2".into()));
                }
                PointSet::uniform(s.dim(), s.sample(batch, seed_offset), false)
            }
            (Measure::Sampler(s), Integration::Exact) => match s.kind() {
                SamplerKind::Empirical(m) => Ok(m.point_set()),
                _ => Err(Error::BadInput(
                    "exact integration needs an atomic measure; use a Monte Carlo batch".into(),
                )),
            },
        }
    }

    /// Points for an evaluation that must not share draws with training
    /// batches of the same seed.
    pub fn holdout_point_set(&self, integration: Integration, index: u64) -> Result<PointSet> {
        self.point_set(integration, salted(index, 0x5EED_E7A1))
    }

    /// `|μ|_p = (∫ ‖y‖^p μ(dy))^{1/p}`.
    pub fn p_moment(&self, p: f64, integration: Integration) -> Result<Moment> {
        if !(p > 1.0) {
            return Err(Error::BadInput(format!("p must be > 1, got {p}")));
        }
        let points = self.point_set(integration, salted(0, 0x3011E47))?;
        let (m, se) = points.integrate(|y| norm(y).powf(p));
        let value = m.powf(1.0 / p);
        let stderr = if m > 0.0 { value / (p * m) * se } else { 0.0 };
        Ok(Moment { value, stderr })
    }
}

/// Serialized measure descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureDescriptor {
    Discrete {
        atoms: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    LognormalReturns {
        sigma: f64,
        #[serde(rename = "T")]
        horizon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Empirical {
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl MeasureDescriptor {
    /// Builds the measure; `default_seed` applies when the descriptor has none.
    /// Relative empirical paths are resolved against `base_dir`.
    pub fn build(&self, default_seed: u64, base_dir: Option<&Path>) -> Result<Measure> {
        match self {
            MeasureDescriptor::Discrete { atoms, weights } => {
                let m = match weights {
                    Some(w) => DiscreteMeasure::new(atoms.clone(), w.clone())?,
                    None => DiscreteMeasure::uniform(atoms.clone())?,
                };
                Ok(Measure::Discrete(m))
            }
            MeasureDescriptor::Gaussian { mean, covariance, seed } => {
                let seed = seed.unwrap_or(default_seed);
                let s = match covariance {
                    Some(c) => SamplerMeasure::gaussian(mean.clone(), c.clone(), seed)?,
                    None => SamplerMeasure::standard_gaussian(mean.clone(), seed)?,
                };
                Ok(Measure::Sampler(s))
            }
            MeasureDescriptor::LognormalReturns { sigma, horizon, seed } => Ok(Measure::Sampler(
                SamplerMeasure::lognormal_returns(*sigma, *horizon, seed.unwrap_or(default_seed))?,
            )),
            MeasureDescriptor::Empirical { path, seed } => {
                let p = Path::new(path);
                let full = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                let m = DiscreteMeasure::from_csv(&full)?;
                Ok(Measure::Sampler(SamplerMeasure::empirical(m, seed.unwrap_or(default_seed))))
            }
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_sample_mean() {
        let m = SamplerMeasure::standard_gaussian(vec![1.0, 0.0], 11).unwrap();
        let n = 1_000_000;
        let s = m.sample(n, 0);
        let mx = s.iter().step_by(2).sum::<f64>() / n as f64;
        let my = s.iter().skip(1).step_by(2).sum::<f64>() / n as f64;
        assert!((mx - 1.0).abs() < 5e-3, "{mx}");
        assert!(my.abs() < 5e-3, "{my}");
    }

    #[test]
    fn single_atom_samples() {
        let m = DiscreteMeasure::dirac(vec![0.3, -2.0]).unwrap();
        let s = m.sample(17, 5, 1);
        assert_eq!(s.len(), 34);
        for c in s.chunks(2) {
            assert_eq!(c, &[0.3, -2.0]);
        }
    }

    /// Simpson rule for E[exp(Y)], Y ~ N(m, v); independent of the sampler.
    fn lognormal_mean_quadrature(m: f64, v: f64) -> f64 {
        let sd = v.sqrt();
        let (a, b, n) = (m - 12.0 * sd, m + 12.0 * sd, 20_000);
        let hstep = (b - a) / n as f64;
        let dens = |y: f64| {
            (-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt() * y.exp()
        };
        let mut s = dens(a) + dens(b);
        for i in 1..n {
            let y = a + i as f64 * hstep;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * dens(y);
        }
        s * hstep / 3.0
    }

    #[test]
    fn lognormal_returns_martingale() {
        let oracle = lognormal_mean_quadrature(-0.02, 0.04);
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-10);
        let m = SamplerMeasure::lognormal_returns(0.2, 1.0, 3).unwrap();
        let n = 200_000;
        let e: Vec<f64> = m.sample(n, 0).into_iter().map(f64::exp).collect();
        let mean = e.iter().sum::<f64>() / n as f64;
        let sd = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!((mean - oracle).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn p_moment_examples() {
        let m = Measure::Discrete(
            DiscreteMeasure::uniform(vec![vec![0.55, 0.0], vec![0.0, 0.85], vec![-1.10, 0.0]]).unwrap(),
        );
        let expected = ((0.55f64.powi(2) + 0.85f64.powi(2) + 1.10f64.powi(2)) / 3.0).sqrt();
        let got = m.p_moment(2.0, Integration::Exact).unwrap();
        assert_abs_diff_eq!(got.value, expected, epsilon = 1e-15);
        assert_eq!(got.stderr, 0.0);

        let d = Measure::Discrete(DiscreteMeasure::dirac(vec![0.0, 0.0, 0.0]).unwrap());
        assert_eq!(d.p_moment(3.0, Integration::Exact).unwrap().value, 0.0);

        let g = Measure::Sampler(SamplerMeasure::standard_gaussian(vec![0.0, 0.0], 1).unwrap());
        let mom = g.p_moment(2.0, Integration::MonteCarlo { batch: 400_000 }).unwrap();
        assert!((mom.value - 2f64.sqrt()).abs() < 4.0 * mom.stderr, "{mom:?}");
    }

    #[test]
    fn duplicate_atoms_merge() {
        let m = DiscreteMeasure::new(
            vec![vec![1.0], vec![2.0], vec![1.0]],
            vec![0.25, 0.5, 0.25],
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_abs_diff_eq!(m.weights().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(DiscreteMeasure::new(vec![vec![1.0]], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![1.0], vec![2.0]], vec![1.0, 0.0]).is_err());
        assert!(SamplerMeasure::gaussian(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]], 0).is_err());
        assert!(SamplerMeasure::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.4, 1.0]], 0).is_err());
        assert!(SamplerMeasure::lognormal_returns(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn semidefinite_covariance_accepted() {
        let g = SamplerMeasure::gaussian(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]], 2).unwrap();
        let s = g.sample(100, 0);
        for c in s.chunks(2) {
            assert_abs_diff_eq!(c[0], c[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = Measure::Sampler(SamplerMeasure::standard_gaussian(vec![0.0, 1.0], 9).unwrap());
        assert_eq!(g.sample(64, 3), g.sample(64, 3));
        assert_ne!(g.sample(64, 3), g.sample(64, 4));
        let d = Measure::Discrete(DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap());
        assert_eq!(d.sample(64, 3), d.sample(64, 3));
    }

    #[test]
    fn empirical_csv_roundtrip() {
        let dir = std::env::temp_dir().join(format!("wassrisk-emp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pts.csv");
        std::fs::write(&path, "0.5,1.0\n-1,2\n\n0.5,1.0\n").unwrap();
        let m = DiscreteMeasure::from_csv(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_abs_diff_eq!(m.weights()[0], 2.0 / 3.0, epsilon = 1e-15);
        std::fs::write(&path, "0.5,abc\n").unwrap();
        assert!(matches!(DiscreteMeasure::from_csv(&path), Err(Error::Io(_))));
        assert!(matches!(
            DiscreteMeasure::from_csv(&dir.join("missing.csv")),
            Err(Error::Io(_))
        ));
    }
}
