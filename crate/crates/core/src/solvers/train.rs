use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::asymptotics::ray_optimize;
use crate::error::{Error, Result};
use crate::estimate::{FieldDescriptor, RiskEstimate};
use crate::fields::{Activation, FieldRef, MLPField, TrainableField, VectorField};
use crate::measure::{Integration, Measure};
use crate::objective::{Evaluation, Objective, Regime};
use crate::rng::salted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub scale_layer: bool,
    /// Start from `θ ≡ 0` by zeroing the last affine map.
    pub zero_output: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { depth: 4, width: 20, activation: Activation::Relu, scale_layer: false, zero_output: true }
    }
}

impl Architecture {
    pub fn build(&self, dim: usize, seed: u64) -> Result<MLPField> {
        self.build_for(dim, seed, Regime::Unconstrained)
    }

    /// In the martingale regime `θ ≡ 0` is a stationary point, so
    /// `zero_output` only shrinks the last map instead of zeroing it.
    pub fn build_for(&self, dim: usize, seed: u64, regime: Regime) -> Result<MLPField> {
        let mut net = MLPField::new(dim, self.depth, self.width, self.activation, seed)?;
        if self.zero_output {
            net.scale_output_layer(if regime == Regime::Martingale { 1e-3 } else { 0.0 });
        }
        if self.scale_layer {
            net = net.with_scale_layer(1.0);
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub lr: f64,
    /// Fresh Monte Carlo draws per step (ignored for atomic measures).
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Moving-average window in epochs.
    pub window: usize,
    /// Cosine-anneal the learning rate down to this value if set.
    pub lr_final: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { lr: 1e-3, batch: 4096, epochs: 3000, seed: 0, window: 100, lr_final: None }
    }
}

impl TrainOptions {
    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_final {
            Some(end) if self.epochs > 1 => {
                let t = epoch as f64 / (self.epochs - 1) as f64;
                end + 0.5 * (self.lr - end) * (1.0 + (std::f64::consts::PI * t).cos())
            }
            _ => self.lr,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub raw: f64,
    pub moving_average: f64,
    pub norm: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub estimate: RiskEstimate,
    pub net: MLPField,
    pub log: Vec<LogRecord>,
    pub seconds: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descent step on `params` for gradient `g` of the minimized loss.
    fn step(&mut self, params: &mut [f64], g: &[f64], lr: f64, mask: Option<usize>) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, (p, gi)) in params.iter_mut().zip(g).enumerate() {
            if mask.is_some_and(|only| only != i) {
                continue;
            }
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * gi;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * gi * gi;
            *p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn descriptor(net: &MLPField) -> FieldDescriptor {
    FieldDescriptor::Mlp {
        depth: net.depth(),
        width: net.width(),
        activation: net.activation(),
        scale: net.scale_layer(),
        params: net.num_params(),
    }
}

/// Adam on `−J`, one fresh batch per epoch. With `only = Some(i)` every other
/// parameter is frozen.
fn adam_loop(
    obj: &Objective,
    measure: &Measure,
    net: &mut MLPField,
    opts: &TrainOptions,
    only: Option<usize>,
    salt: u64,
) -> Result<TrainOutcome> {
    if net.dim() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: net.dim() });
    }
    if opts.epochs == 0 || opts.window == 0 {
        return Err(Error::BadInput("epochs and window must be positive".into()));
    }
    let start = Instant::now();
    let integration = Integration::MonteCarlo { batch: opts.batch };
    let wall = obj.penalty().ball_radius().map(|a| (a * obj.h()).powf(1.0 / obj.regime().kappa()));
    let mut adam = Adam::new(net.num_params());
    let mut lr_scale = 1.0;
    let mut window: VecDeque<(f64, f64, f64, f64)> = VecDeque::with_capacity(opts.window);
    let mut log = Vec::with_capacity(opts.epochs);
    let mut previous = net.params();
    let mut last: Option<Evaluation> = None;
    let mut exact = false;

    for epoch in 0..opts.epochs {
        let pts = measure.point_set(integration, salted(epoch as u64, salted(opts.seed, salt)))?;
        exact = pts.is_exact();
        let mut thetas = net.eval_batch(pts.coords());
        let (mut e, mut upstream) = obj.gradient_shifts(&pts, &thetas)?;

        if !e.is_feasible() {
            let Some(radius) = wall else {
                return Err(Error::DivergenceDetected { epoch, value: e.value });
            };
            match net.scale_layer() {
                Some(c) if e.norm > 0.0 => {
                    net.set_scale_layer(c * radius / e.norm * (1.0 - 1e-12))?;
                }
                _ => {
                    net.set_params(&previous)?;
                    lr_scale *= 0.5;
                }
            }
            thetas = net.eval_batch(pts.coords());
            (e, upstream) = obj.gradient_shifts(&pts, &thetas)?;
            if !e.is_feasible() {
                return Err(Error::DivergenceDetected { epoch, value: e.value });
            }
        }
        if e.value.is_nan() || e.value == f64::INFINITY {
            return Err(Error::DivergenceDetected { epoch, value: e.value });
        }

        if window.len() == opts.window {
            window.pop_front();
        }
        window.push_back((e.value, e.stderr, e.penalty, obj.baseline(&pts).0));
        let ma = window.iter().map(|w| w.0).sum::<f64>() / window.len() as f64;
        log.push(LogRecord { epoch, raw: e.value, moving_average: ma, norm: e.norm, penalty: e.penalty });
        last = Some(e);

        let grad = net.backprop(pts.coords(), &upstream)?;
        let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut params = net.params();
        previous.clone_from(&params);
        adam.step(&mut params, &descent, opts.lr_at(epoch) * lr_scale, only);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergenceDetected { epoch, value: f64::NAN });
        }
        net.set_params(&params)?;
    }

    let w = window.len() as f64;
    let value = window.iter().map(|x| x.0).sum::<f64>() / w;
    let stderr = window.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt() / w;
    let penalty = window.iter().map(|x| x.2).sum::<f64>() / w;
    let last = last.expect("at least one epoch");
    // on the same batches as `value`, so the excess is a paired difference
    let baseline = window.iter().map(|x| x.3).sum::<f64>() / w;
    let estimate = RiskEstimate {
        value,
        baseline,
        field: descriptor(net),
        penalty_paid: penalty,
        norm: last.norm,
        h: obj.h(),
        regime: obj.regime(),
        iterations: opts.epochs,
        seed: opts.seed,
        mc_batch: (!exact).then_some(opts.batch),
        mc_stderr: (!exact).then_some(stderr),
        flagged: lr_scale < 1.0,
    };
    Ok(TrainOutcome { estimate, net: net.clone(), log, seconds: start.elapsed().as_secs_f64() })
}

/// Trains a fresh network of the given architecture. The reported value is
/// the moving average of the per-epoch objective over the final window; its
/// standard error combines the per-batch errors of that window.
pub fn train_mlp(obj: &Objective, measure: &Measure, arch: &Architecture, opts: &TrainOptions) -> Result<TrainOutcome> {
    let mut net = arch.build_for(obj.dim(), opts.seed, obj.regime())?;
    adam_loop(obj, measure, &mut net, opts, None, 0x7A1)
}

/// Continues training an existing network on all parameters.
pub fn train_from(obj: &Objective, measure: &Measure, net: MLPField, opts: &TrainOptions) -> Result<TrainOutcome> {
    let mut net = net;
    adam_loop(obj, measure, &mut net, opts, None, 0x7A2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSearch {
    /// Bracketing plus golden section on one common batch.
    Golden,
    /// Adam on the scale parameter alone.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferOptions {
    pub method: ScaleSearch,
    pub batch: usize,
    pub seed: u64,
    /// Used by [`ScaleSearch::Adam`].
    pub adam: TrainOptions,
    /// Train a fresh network of the same architecture with these options
    /// and report the excess-value ratio against it.
    pub full_retrain: Option<TrainOptions>,
    /// Batch for the paired comparison against the full retrain.
    pub holdout_batch: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            method: ScaleSearch::Golden,
            batch: 4096,
            seed: 0,
            adam: TrainOptions { lr: 1e-2, epochs: 300, ..TrainOptions::default() },
            full_retrain: None,
            holdout_batch: 65_536,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub estimate: RiskEstimate,
    pub net: MLPField,
    pub seconds: f64,
    pub full: Option<TrainOutcome>,
    /// `(J_partial − μf)/(J_full − μf)` on a common held-out batch.
    pub ratio: Option<f64>,
    /// Held-out values `(μf, partial, full)` behind `ratio`.
    pub holdout: Option<(f64, f64, f64)>,
}

/// Re-fits only the scale layer `c` of a pretrained network on a new
/// baseline measure; all affine maps stay frozen.
pub fn transfer_retrain(
    pretrained: &MLPField,
    obj: &Objective,
    measure: &Measure,
    opts: &TransferOptions,
) -> Result<TransferOutcome> {
    if pretrained.scale_layer().is_none() {
        return Err(Error::MissingScaleLayer);
    }
    let start = Instant::now();
    let (estimate, net) = match opts.method {
        ScaleSearch::Golden => {
            let mut unit = pretrained.clone();
            unit.set_scale_layer(1.0)?;
            let dir: FieldRef = Arc::new(unit.clone());
            let integration = Integration::MonteCarlo { batch: opts.batch };
            let (mut est, scaled) = ray_optimize(obj, measure, dir, integration, salted(opts.seed, 0x7EA))?;
            unit.set_scale_layer(scaled.scale())?;
            est.field = descriptor(&unit);
            est.seed = opts.seed;
            (est, unit)
        }
        ScaleSearch::Adam => {
            let mut net = pretrained.clone();
            let idx = net.scale_index().expect("scale layer checked");
            let adam = TrainOptions { seed: opts.seed, batch: opts.batch, ..opts.adam };
            let out = adam_loop(obj, measure, &mut net, &adam, Some(idx), 0x7A3)?;
            (out.estimate, out.net)
        }
    };
    let seconds = start.elapsed().as_secs_f64();

    let (full, ratio, holdout) = match &opts.full_retrain {
        Some(full_opts) => {
            let arch = Architecture {
                depth: pretrained.depth(),
                width: pretrained.width(),
                activation: pretrained.activation(),
                scale_layer: true,
                zero_output: true,
            };
            let full = train_mlp(obj, measure, &arch, full_opts)?;
            let integration = Integration::MonteCarlo { batch: opts.holdout_batch };
            let pts = measure.holdout_point_set(integration, salted(opts.seed, 0x401D))?;
            let (base, _) = obj.baseline(&pts);
            let partial_v = obj.evaluate_shifts(&pts, &net.eval_batch(pts.coords()))?.value;
            let full_v = obj.evaluate_shifts(&pts, &full.net.eval_batch(pts.coords()))?.value;
            let ratio = (partial_v - base) / (full_v - base);
            (Some(full), Some(ratio), Some((base, partial_v, full_v)))
        }
        None => (None, None, None),
    };
    Ok(TransferOutcome { estimate, net, seconds, full, ratio, holdout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{BumpLoss, ConstantLoss, LossRef};
    use crate::measure::SamplerMeasure;
    use crate::penalty::Penalty;

    fn gaussian(mean: [f64; 2], seed: u64) -> Measure {
        Measure::Sampler(SamplerMeasure::standard_gaussian(mean.to_vec(), seed).unwrap())
    }

    fn bump_objective(h: f64) -> Objective {
        let f: LossRef = Arc::new(BumpLoss::new(1.0, 1.5, vec![0.0, 0.0]).unwrap());
        Objective::new(f, Penalty::power(1.0, 2.0).unwrap(), 2.0, h, Regime::Unconstrained).unwrap()
    }

    fn small() -> (Architecture, TrainOptions) {
        let arch = Architecture { depth: 2, width: 8, scale_layer: true, ..Architecture::default() };
        let opts = TrainOptions { lr: 1e-2, batch: 512, epochs: 200, window: 50, ..TrainOptions::default() };
        (arch, opts)
    }

    #[test]
    fn constant_loss_stays_at_baseline() {
        let f: LossRef = Arc::new(ConstantLoss::new(2, 3.0));
        let obj = Objective::new(f, Penalty::power(1.0, 2.0).unwrap(), 2.0, 0.5, Regime::Unconstrained).unwrap();
        let (arch, opts) = small();
        let out = train_mlp(&obj, &gaussian([1.0, 0.0], 3), &arch, &opts).unwrap();
        assert!((out.estimate.value - 3.0).abs() <= 3.0 * out.estimate.stderr() + 1e-12);
        assert!(out.estimate.value <= 3.0);
        assert!(out.estimate.norm < 1e-2, "norm {}", out.estimate.norm);
    }

    #[test]
    fn log_has_a_moving_average() {
        let obj = bump_objective(0.3);
        let (arch, opts) = small();
        let out = train_mlp(&obj, &gaussian([1.0, 0.0], 1), &arch, &opts).unwrap();
        assert_eq!(out.log.len(), opts.epochs);
        let tail = &out.log[opts.epochs - opts.window..];
        let ma = tail.iter().map(|r| r.raw).sum::<f64>() / opts.window as f64;
        assert!((out.log.last().unwrap().moving_average - ma).abs() < 1e-12);
        assert_eq!(out.estimate.value.to_bits(), out.log.last().unwrap().moving_average.to_bits());
        assert!(out.estimate.value > out.estimate.baseline - 3.0 * out.estimate.stderr());
    }

    #[test]
    fn deterministic_per_seed() {
        let obj = bump_objective(0.3);
        let (arch, opts) = small();
        let opts = TrainOptions { epochs: 30, ..opts };
        let a = train_mlp(&obj, &gaussian([1.0, 0.0], 1), &arch, &opts).unwrap();
        let b = train_mlp(&obj, &gaussian([1.0, 0.0], 1), &arch, &opts).unwrap();
        assert_eq!(a.estimate.value.to_bits(), b.estimate.value.to_bits());
        assert_eq!(a.net.params(), b.net.params());
    }

    #[test]
    fn transfer_needs_a_scale_layer() {
        let net = MLPField::new(2, 2, 4, Activation::Relu, 0).unwrap();
        let err = transfer_retrain(&net, &bump_objective(0.1), &gaussian([0.0, 0.0], 0), &TransferOptions::default());
        assert!(matches!(err, Err(Error::MissingScaleLayer)));
    }

    #[test]
    fn zero_pretrained_field_gives_baseline() {
        let mut net = MLPField::new(2, 2, 4, Activation::Relu, 0).unwrap().with_scale_layer(1.0);
        net.zero_output_layer();
        let obj = bump_objective(0.2);
        let mu = gaussian([1.0, 0.0], 5);
        for method in [ScaleSearch::Golden, ScaleSearch::Adam] {
            let opts = TransferOptions { method, batch: 1024, ..TransferOptions::default() };
            let out = transfer_retrain(&net, &obj, &mu, &opts).unwrap();
            let e = &out.estimate;
            assert!((e.value - e.baseline).abs() <= 3.0 * e.stderr() + 1e-12, "{method:?}: {e:?}");
        }
    }

    #[test]
    fn same_measure_keeps_the_pretrained_value() {
        let obj = bump_objective(0.3);
        let mu = gaussian([1.0, 0.0], 2);
        let (arch, opts) = small();
        let pre = train_mlp(&obj, &mu, &arch, &opts).unwrap();
        let out = transfer_retrain(&pre.net, &obj, &mu, &TransferOptions::default()).unwrap();
        let (a, b) = (&pre.estimate, &out.estimate);
        let tol = 3.0 * (a.stderr().powi(2) + b.stderr().powi(2)).sqrt();
        assert!((a.value - b.value).abs() <= tol, "{} vs {} (tol {tol})", a.value, b.value);
        let c = out.net.scale_layer().unwrap();
        assert!(c > 0.5 && c < 2.0, "scale {c}");
    }
}
