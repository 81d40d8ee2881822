//! Perturbation fields `θ: R^d → R^d` and their `L_p(μ)` norms.
//!
//! Batches are flat row-major buffers: point `i` of a `d`-dimensional batch is
//! `xs[i*d..(i+1)*d]`.

use std::collections::HashMap;
use std::fmt::Debug;
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{norm, DiscreteMeasure, Integration, Measure, PointSet};
use crate::rng::{salted, stream_rng};

/// Points per parallel work unit. Partial sums are reduced in chunk order, so
/// results do not depend on the thread count.
const CHUNK: usize = 256;

pub trait VectorField: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Vec<f64>;

    fn eval_batch(&self, xs: &[f64]) -> Vec<f64> {
        let d = self.dim();
        xs.par_chunks(d * CHUNK)
            .flat_map_iter(|chunk| chunk.chunks(d).flat_map(|x| self.eval(x)).collect::<Vec<_>>())
            .collect()
    }

    fn as_centered(&self) -> Option<&CenteredField> {
        None
    }
}

pub type FieldRef = Arc<dyn VectorField>;

/// A field with a flat parameter vector and exact parameter gradients.
pub trait TrainableField: VectorField {
    fn num_params(&self) -> usize;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// `Σ_i ⟨g_i, ∂θ(x_i)/∂params⟩` for upstream gradients `g_i`.
    fn backprop(&self, xs: &[f64], upstream: &[f64]) -> Result<Vec<f64>>;
}

/// `(Σ_i w_i ‖θ_i‖^p)^{1/p}` for flat shifts.
pub fn lp_norm_shifts(thetas: &[f64], weights: &[f64], dim: usize, p: f64) -> f64 {
    let s: f64 = thetas
        .chunks(dim)
        .zip(weights)
        .map(|(t, w)| w * norm(t).powf(p))
        .sum();
    s.powf(1.0 / p)
}

/// `‖θ‖_{L_p(μ)}`: exact over atoms, Monte Carlo on one batch for samplers.
pub fn lp_norm(
    field: &dyn VectorField,
    measure: &Measure,
    p: f64,
    integration: Integration,
    seed_offset: u64,
) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::BadInput(format!("p must exceed 1, got {p}")));
    }
    if field.dim() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), got: field.dim() });
    }
    let pts = measure.point_set(integration, seed_offset)?;
    let thetas = field.eval_batch(pts.coords());
    Ok(lp_norm_shifts(&thetas, pts.weights(), pts.dim(), p))
}

/// `∫ θ dμ` over a point set.
pub fn field_mean(thetas: &[f64], weights: &[f64], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for (t, w) in thetas.chunks(dim).zip(weights) {
        for (mi, ti) in m.iter_mut().zip(t) {
            *mi += w * ti;
        }
    }
    m
}

/// Subtracts the weighted mean from flat shifts in place.
pub fn center_shifts(thetas: &mut [f64], weights: &[f64], dim: usize) {
    let m = field_mean(thetas, weights, dim);
    for t in thetas.chunks_mut(dim) {
        for (ti, mi) in t.iter_mut().zip(&m) {
            *ti -= mi;
        }
    }
}

/// `θ − ∫θ dμ` with the mean taken over `points` (the step's common batch for
/// samplers, the atoms for discrete measures).
///
/// Centering a field that is already centered on the same points returns it
/// unchanged, so the operation is idempotent bit for bit.
pub fn mean_center(field: FieldRef, points: &PointSet) -> Result<CenteredField> {
    if field.dim() != points.dim() {
        return Err(Error::DimensionMismatch { expected: points.dim(), got: field.dim() });
    }
    let support = fingerprint(points);
    if let Some(c) = field.as_centered() {
        if c.support == support {
            return Ok(c.clone());
        }
    }
    let thetas = field.eval_batch(points.coords());
    let mean = field_mean(&thetas, points.weights(), points.dim());
    Ok(CenteredField { inner: field, mean, support })
}

fn fingerprint(points: &PointSet) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    points.dim().hash(&mut h);
    for v in points.coords().iter().chain(points.weights()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

#[derive(Debug, Clone)]
pub struct CenteredField {
    inner: FieldRef,
    mean: Vec<f64>,
    support: u64,
}

impl CenteredField {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

impl VectorField for CenteredField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.inner.eval(x);
        for (vi, mi) in v.iter_mut().zip(&self.mean) {
            *vi -= mi;
        }
        v
    }

    fn as_centered(&self) -> Option<&CenteredField> {
        Some(self)
    }
}

/// One shift per atom; zero away from the atoms.
#[derive(Debug, Clone)]
pub struct TabularField {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    shifts: Vec<Vec<f64>>,
    index: HashMap<Vec<u64>, usize>,
}

impl TabularField {
    pub fn new(measure: &DiscreteMeasure, shifts: Vec<Vec<f64>>) -> Result<Self> {
        if shifts.len() != measure.len() {
            return Err(Error::DimensionMismatch { expected: measure.len(), got: shifts.len() });
        }
        let dim = measure.dim();
        if let Some(bad) = shifts.iter().find(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        let atoms = measure.atoms().to_vec();
        let index = atoms.iter().enumerate().map(|(i, a)| (bits(a), i)).collect();
        Ok(Self { dim, atoms, shifts, index })
    }

    pub fn zeros(measure: &DiscreteMeasure) -> Self {
        Self::new(measure, vec![vec![0.0; measure.dim()]; measure.len()]).expect("shapes agree")
    }

    pub fn from_flat(measure: &DiscreteMeasure, flat: &[f64]) -> Result<Self> {
        let d = measure.dim();
        if flat.len() != d * measure.len() {
            return Err(Error::DimensionMismatch { expected: d * measure.len(), got: flat.len() });
        }
        Self::new(measure, flat.chunks(d).map(|c| c.to_vec()).collect())
    }

    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn flat(&self) -> Vec<f64> {
        self.shifts.concat()
    }
}

fn bits(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same atom
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl VectorField for TabularField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self.index.get(&bits(x)) {
            Some(&i) => self.shifts[i].clone(),
            None => vec![0.0; self.dim],
        }
    }
}

/// `λ·θ` for `λ >= 0`.
#[derive(Debug, Clone)]
pub struct ScaledField {
    base: FieldRef,
    scale: f64,
}

impl ScaledField {
    pub fn new(base: FieldRef, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidField(format!("scale must be >= 0, got {scale}")));
        }
        Ok(Self { base, scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn base(&self) -> &FieldRef {
        &self.base
    }
}

impl VectorField for ScaledField {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.base.eval(x).into_iter().map(|v| self.scale * v).collect()
    }
}

type FieldFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Field backed by a closure, e.g. a loss-derived direction.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    name: &'static str,
    f: Arc<FieldFn>,
}

impl FnField {
    pub fn new(dim: usize, name: &'static str, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { dim, name, f: Arc::new(f) }
    }
}

impl Debug for FnField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FnField({}, d={})", self.name, self.dim)
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Logistic sigmoid `1/(1 + e^{−z})`.
    BoundedSigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::BoundedSigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::BoundedSigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    fan_in: usize,
    fan_out: usize,
    /// `fan_out × fan_in`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w[j * self.fan_in..(j + 1) * self.fan_in];
            *o = self.b[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// `x ↦ c·(A_m ∘ ψ ∘ A_{m−1} ∘ ⋯ ∘ ψ ∘ A_0)(x)` with `m` hidden layers of
/// equal width and an optional trainable output scale `c`.
///
/// Parameters are laid out layer by layer (weights row-major, then biases),
/// with the scale last.
#[derive(Debug, Clone, PartialEq)]
pub struct MLPField {
    dim: usize,
    layers: Vec<Dense>,
    activation: Activation,
    scale: Option<f64>,
}

const MLP_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MlpFile {
    version: u32,
    dims: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(default)]
    scale: Option<f64>,
}

impl MLPField {
    /// `depth` hidden layers of `width` units, weights and biases uniform on
    /// `±1/√fan_in`.
    pub fn new(dim: usize, depth: usize, width: usize, activation: Activation, seed: u64) -> Result<Self> {
        if dim == 0 || depth == 0 || width == 0 {
            return Err(Error::InvalidField(format!(
                "need dim, depth, width >= 1 (got {dim}, {depth}, {width})"
            )));
        }
        let mut dims = vec![dim];
        dims.extend(std::iter::repeat(width).take(depth));
        dims.push(dim);
        let mut rng = stream_rng(seed, salted(0, 0x1417));
        let layers = dims
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<f64>>();
                let w = draw(fan_in * fan_out);
                let b = draw(fan_out);
                Dense { fan_in, fan_out, w, b }
            })
            .collect();
        Ok(Self { dim, layers, activation, scale: None })
    }

    pub fn with_scale_layer(mut self, c: f64) -> Self {
        self.scale = Some(c);
        self
    }

    pub fn scale_layer(&self) -> Option<f64> {
        self.scale
    }

    pub fn set_scale_layer(&mut self, c: f64) -> Result<()> {
        match self.scale.as_mut() {
            Some(s) => {
                *s = c;
                Ok(())
            }
            None => Err(Error::MissingScaleLayer),
        }
    }

    /// Index of the scale parameter in [`TrainableField::params`].
    pub fn scale_index(&self) -> Option<usize> {
        self.scale.map(|_| self.num_params() - 1)
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn width(&self) -> usize {
        self.layers[0].fan_out
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn zero_output_layer(&mut self) {
        self.scale_output_layer(0.0);
    }

    /// Multiplies the last affine map by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.w.iter_mut().for_each(|w| *w *= factor);
        last.b.iter_mut().for_each(|b| *b *= factor);
    }

    fn scratch_len(&self) -> usize {
        self.layers.iter().map(|l| l.fan_out).sum()
    }

    /// Pre-activations of every layer for one input, concatenated.
    fn forward_into(&self, x: &[f64], zs: &mut [f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(x);
        let mut offset = 0;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &mut zs[offset..offset + layer.fan_out];
            layer.apply(buf, z);
            if l < last {
                buf.clear();
                buf.extend(z.iter().map(|&v| self.activation.apply(v)));
            }
            offset += layer.fan_out;
        }
    }

    fn output_from(&self, zs: &[f64]) -> Vec<f64> {
        let c = self.scale.unwrap_or(1.0);
        zs[zs.len() - self.dim..].iter().map(|v| c * v).collect()
    }

    fn backprop_chunk(&self, xs: &[f64], upstream: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut grad = vec![0.0; self.num_params()];
        let mut zs = vec![0.0; self.scratch_len()];
        let mut buf = Vec::new();
        let mut delta = Vec::new();
        let mut next = Vec::new();
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.fan_out;
                Some(o)
            })
            .collect();
        let param_offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.fan_in * l.fan_out + l.fan_out;
                Some(o)
            })
            .collect();
        for (x, g) in xs.chunks(d).zip(upstream.chunks(d)) {
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            self.forward_into(x, &mut zs, &mut buf);
            let z_out = &zs[zs.len() - d..];
            delta.clear();
            match self.scale {
                Some(c) => {
                    let gi = grad.len() - 1;
                    grad[gi] += g.iter().zip(z_out).map(|(a, b)| a * b).sum::<f64>();
                    delta.extend(g.iter().map(|v| c * v));
                }
                None => delta.extend_from_slice(g),
            }
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let po = param_offsets[l];
                // input to layer l
                let input: &[f64] = if l == 0 { x } else { &zs[offsets[l - 1]..offsets[l - 1] + layer.fan_in] };
                for (j, dj) in delta.iter().enumerate() {
                    if *dj == 0.0 {
                        continue;
                    }
                    let row = &mut grad[po + j * layer.fan_in..po + (j + 1) * layer.fan_in];
                    if l == 0 {
                        for (r, a) in row.iter_mut().zip(input) {
                            *r += dj * a;
                        }
                    } else {
                        for (r, z) in row.iter_mut().zip(input) {
                            *r += dj * self.activation.apply(*z);
                        }
                    }
                    grad[po + layer.fan_in * layer.fan_out + j] += dj;
                }
                if l > 0 {
                    next.clear();
                    next.resize(layer.fan_in, 0.0);
                    for (j, dj) in delta.iter().enumerate() {
                        if *dj == 0.0 {
                            continue;
                        }
                        let row = &layer.w[j * layer.fan_in..(j + 1) * layer.fan_in];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += dj * w;
                        }
                    }
                    for (n, z) in next.iter_mut().zip(input) {
                        *n *= self.activation.derivative(*z);
                    }
                    std::mem::swap(&mut delta, &mut next);
                }
            }
        }
        grad
    }

    pub fn to_json(&self) -> Result<String> {
        let mut dims = vec![self.dim];
        dims.extend(self.layers.iter().map(|l| l.fan_out));
        let file = MlpFile {
            version: MLP_FORMAT_VERSION,
            dims,
            activation: self.activation,
            weights: self.layers.iter().map(|l| l.w.clone()).collect(),
            biases: self.layers.iter().map(|l| l.b.clone()).collect(),
            scale: self.scale,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MlpFile = serde_json::from_str(text)?;
        if file.version != MLP_FORMAT_VERSION {
            return Err(Error::InvalidField(format!("unsupported weight file version {}", file.version)));
        }
        let n = file.dims.len();
        if n < 3 || file.dims[0] != file.dims[n - 1] || file.dims.contains(&0) {
            return Err(Error::InvalidField(format!("bad layer dims {:?}", file.dims)));
        }
        if file.weights.len() != n - 1 || file.biases.len() != n - 1 {
            return Err(Error::InvalidField("layer count does not match dims".into()));
        }
        let mut layers = Vec::with_capacity(n - 1);
        for (l, (w, b)) in file.weights.into_iter().zip(file.biases).enumerate() {
            let (fan_in, fan_out) = (file.dims[l], file.dims[l + 1]);
            if w.len() != fan_in * fan_out {
                return Err(Error::DimensionMismatch { expected: fan_in * fan_out, got: w.len() });
            }
            if b.len() != fan_out {
                return Err(Error::DimensionMismatch { expected: fan_out, got: b.len() });
            }
            layers.push(Dense { fan_in, fan_out, w, b });
        }
        Ok(Self { dim: file.dims[0], layers, activation: file.activation, scale: file.scale })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl VectorField for MLPField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut zs = vec![0.0; self.scratch_len()];
        let mut buf = Vec::new();
        self.forward_into(x, &mut zs, &mut buf);
        self.output_from(&zs)
    }

    fn eval_batch(&self, xs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        xs.par_chunks(d * CHUNK)
            .flat_map_iter(|chunk| {
                let mut zs = vec![0.0; self.scratch_len()];
                let mut buf = Vec::new();
                let mut out = Vec::with_capacity(chunk.len());
                for x in chunk.chunks(d) {
                    self.forward_into(x, &mut zs, &mut buf);
                    out.extend(self.output_from(&zs));
                }
                out
            })
            .collect()
    }
}

impl TrainableField for MLPField {
    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>() + usize::from(self.scale.is_some())
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p.extend(self.scale);
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), got: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            l.b.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        if let Some(s) = self.scale.as_mut() {
            *s = it.next().expect("length checked");
        }
        Ok(())
    }

    fn backprop(&self, xs: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if xs.len() % self.dim != 0 || upstream.len() != xs.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: upstream.len() });
        }
        let d = self.dim;
        let partials: Vec<Vec<f64>> = xs
            .par_chunks(d * CHUNK)
            .zip(upstream.par_chunks(d * CHUNK))
            .map(|(x, g)| self.backprop_chunk(x, g))
            .collect();
        let mut grad = vec![0.0; self.num_params()];
        for part in partials {
            for (a, b) in grad.iter_mut().zip(part) {
                *a += b;
            }
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioKind {
    /// `x ↦ (x − K)^+`
    Call,
    /// `x ↦ 1_{[K, ∞)}(x)`
    Digital,
}

/// One-dimensional field `x ↦ Σ_j w_j ψ(x − K_j)`, trainable in the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallPortfolioField {
    strikes: Vec<f64>,
    weights: Vec<f64>,
    kind: PortfolioKind,
}

impl CallPortfolioField {
    pub fn new(strikes: Vec<f64>, weights: Vec<f64>, kind: PortfolioKind) -> Result<Self> {
        if strikes.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: strikes.len(), got: weights.len() });
        }
        if strikes.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("strikes and weights must be finite".into()));
        }
        Ok(Self { strikes, weights, kind })
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn leg(&self, k: f64, x: f64) -> f64 {
        match self.kind {
            PortfolioKind::Call => (x - k).max(0.0),
            PortfolioKind::Digital => {
                if x >= k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl VectorField for CallPortfolioField {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![self.strikes.iter().zip(&self.weights).map(|(k, w)| w * self.leg(*k, x[0])).sum()]
    }
}

impl TrainableField for CallPortfolioField {
    fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn params(&self) -> Vec<f64> {
        self.weights.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: params.len() });
        }
        self.weights.copy_from_slice(params);
        Ok(())
    }

    fn backprop(&self, xs: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != xs.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: upstream.len() });
        }
        let mut grad = vec![0.0; self.weights.len()];
        for (x, g) in xs.iter().zip(upstream) {
            for (gj, k) in grad.iter_mut().zip(&self.strikes) {
                *gj += g * self.leg(*k, *x);
            }
        }
        Ok(grad)
    }
}
