use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use wassrisk_core::asymptotics::{first_order_coefficient, ray_optimize, ExpansionReport};
use wassrisk_core::estimate::RiskEstimate;
use wassrisk_core::fields::{lp_norm_shifts, MLPField, VectorField};
use wassrisk_core::finance::bull_spread_bounds;
use wassrisk_core::loss::fd_gradient;
use wassrisk_core::measure::{DiscreteMeasure, Integration, Measure, PointSet};
use wassrisk_core::objective::{martingale_pushforward, pushforward, Regime};
use wassrisk_core::rng::{salted, stream_rng};
use wassrisk_core::solvers::{
    solve_discrete, train_mlp, transfer_retrain, Architecture, LogRecord, SolveOptions, TrainOptions, TransferOptions,
};
use wassrisk_core::transport::{wasserstein_p, MAX_ATOMS};
use wassrisk_core::Error;

use crate::config::{self, BoundsConfig, Config, ExperimentConfig, GridConfig, Loaded, Problem, SolverConfig};
use crate::failure::Failure;
use crate::output::{self, BoundsCsvRow, FieldRow, LogRow, ValueRow};

/// Default ray batch for sampler measures.
const RAY_BATCH: usize = 1 << 16;
/// Atoms used by `verify` when the measure is not small and atomic.
const VERIFY_ATOMS: usize = 32;
const VERIFY_FIELDS: usize = 50;

/// Everything one `(seed, h)` row produces.
struct RowResult {
    seed: u64,
    estimate: RiskEstimate,
    field: Vec<FieldRow>,
    log: Vec<LogRecord>,
    net: Option<MLPField>,
    note: Option<String>,
}

fn output_dir(name: &str, dir: &Option<PathBuf>) -> PathBuf {
    dir.clone().unwrap_or_else(|| PathBuf::from("out").join(name))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

pub fn run(loaded: &Loaded) -> Result<(), Failure> {
    match &loaded.config {
        Config::Experiment(cfg) => run_experiment(cfg, loaded),
        Config::Bounds(cfg) => run_bounds(cfg, loaded),
    }
}

fn run_experiment(cfg: &ExperimentConfig, loaded: &Loaded) -> Result<(), Failure> {
    let problem = Problem::build(&cfg.problem)?;
    let hs = config::h_values(&cfg.h, false)?;
    let seeds = config::seeds(cfg.seeds.as_ref())?;
    precheck_solver(cfg, &problem, &loaded.base_dir, seeds[0])?;

    let rows: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| hs.iter().map(move |&h| (s, h))).collect();
    let results = rows
        .par_iter()
        .map(|&(seed, h)| solve_row(cfg, &problem, &loaded.base_dir, seed, h))
        .collect::<Result<Vec<_>, Failure>>()?;

    let dir = output_dir(&cfg.name, &cfg.output.dir);
    create_dir(&dir)?;
    let values: Vec<ValueRow> = results.iter().map(|r| ValueRow::new(&r.estimate, r.seed)).collect();
    output::write_csv(&dir.join("values.csv"), "values", &values)?;
    let estimates: Vec<&RiskEstimate> = results.iter().map(|r| &r.estimate).collect();
    output::write_json(&dir.join("estimates.json"), &json!({ "schema": "wassrisk estimates v1", "estimates": estimates }))?;
    output::write_json(&dir.join("config.json"), &loaded.json)?;
    let field: Vec<&FieldRow> = results.iter().flat_map(|r| &r.field).collect();
    if !field.is_empty() {
        output::write_csv(&dir.join("field.csv"), "field", &field)?;
    }
    let log: Vec<LogRow> = results
        .iter()
        .flat_map(|r| r.log.iter().map(move |l| LogRow::new(r.estimate.h, r.seed, l)))
        .collect();
    if !log.is_empty() {
        output::write_csv(&dir.join("train_log.csv"), "train_log", &log)?;
    }
    for r in &results {
        if let Some(net) = &r.net {
            let path = dir.join(format!("net_h{}_seed{}.json", r.estimate.h, r.seed));
            net.save(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        }
    }

    println!("{} ({} solver) -> {}", cfg.name, cfg.solver.name(), dir.display());
    println!("{:>10} {:>6} {:>14} {:>11} {:>14}", "h", "seed", "value", "stderr", "baseline");
    for r in &results {
        let e = &r.estimate;
        println!("{:>10} {:>6} {:>14.8} {:>11.3e} {:>14.8}", e.h, r.seed, e.value, e.stderr(), e.baseline);
        if e.flagged {
            println!("           warning: optimizer stopped early, value is the best iterate");
        }
        if let Some(note) = &r.note {
            println!("           {note}");
        }
    }
    Ok(())
}

/// Config errors that only show up once the solver meets the measure.
fn precheck_solver(cfg: &ExperimentConfig, problem: &Problem, base_dir: &Path, seed: u64) -> Result<(), Failure> {
    let measure = config::build_measure(&cfg.problem.measure, seed, base_dir, "problem.measure")?;
    if measure.dim() != problem.loss.dim() {
        return Err(Failure::config(
            "problem.measure",
            Error::DimensionMismatch { expected: problem.loss.dim(), got: measure.dim() },
        ));
    }
    match &cfg.solver {
        SolverConfig::Discrete { .. } if measure.as_discrete().is_none() => Err(Failure::Config(
            "solver.kind: the discrete solver needs an atomic measure (discrete or empirical)".into(),
        )),
        SolverConfig::Ray { .. } => {
            let integration = expansion_integration(&measure, 256);
            first_order_coefficient(problem.loss.clone(), &measure, problem.p, &problem.penalty, problem.regime, integration)
                .map(|_| ())
                .map_err(|e| Failure::config("solver.kind", format!("no first-order direction for the ray: {e}")))
        }
        SolverConfig::Transfer { pretrain_measure, .. } => {
            let pre = config::build_measure(pretrain_measure, seed, base_dir, "solver.pretrain_measure")?;
            if pre.dim() != measure.dim() {
                return Err(Failure::config(
                    "solver.pretrain_measure",
                    Error::DimensionMismatch { expected: measure.dim(), got: pre.dim() },
                ));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn solve_row(cfg: &ExperimentConfig, problem: &Problem, base_dir: &Path, seed: u64, h: f64) -> Result<RowResult, Failure> {
    let context = format!("h = {h}, seed = {seed}");
    let solver_err = |e: Error| Failure::solver(&context, e);
    let measure = config::build_measure(&cfg.problem.measure, seed, base_dir, "problem.measure")?;
    let obj = problem.objective(h).map_err(|e| Failure::config("problem", e))?;
    let grid = &cfg.output.grid;

    let row = match &cfg.solver {
        SolverConfig::Discrete { options } => {
            let mu = measure.as_discrete().expect("checked in precheck_solver");
            let (mut estimate, field) = solve_discrete(&obj, mu, None, options).map_err(solver_err)?;
            estimate.seed = seed;
            let field = if mu.dim() == 2 {
                field
                    .atoms()
                    .iter()
                    .zip(field.shifts())
                    .map(|(x, t)| FieldRow { h, seed, x1: x[0], x2: x[1], theta1: t[0], theta2: t[1] })
                    .collect()
            } else {
                Vec::new()
            };
            RowResult { seed, estimate, field, log: Vec::new(), net: None, note: None }
        }
        SolverConfig::Ray { batch } => {
            let integration = expansion_integration(&measure, batch.unwrap_or(RAY_BATCH));
            let report = first_order_coefficient(obj.loss().clone(), &measure, obj.p(), obj.penalty(), obj.regime(), integration)
                .map_err(solver_err)?;
            let (estimate, field) = ray_optimize(&obj, &measure, report.direction, integration, seed).map_err(solver_err)?;
            let field = snapshot(&field, h, seed, grid, measure.dim());
            RowResult { seed, estimate, field, log: Vec::new(), net: None, note: None }
        }
        SolverConfig::Mlp { arch, train } => {
            let opts = TrainOptions { seed, ..*train };
            let out = train_mlp(&obj, &measure, arch, &opts).map_err(solver_err)?;
            let field = snapshot(&out.net, h, seed, grid, measure.dim());
            RowResult { seed, estimate: out.estimate, field, log: out.log, net: Some(out.net), note: None }
        }
        SolverConfig::Transfer { pretrain_measure, arch, train, options } => {
            let pre = config::build_measure(pretrain_measure, seed, base_dir, "solver.pretrain_measure")?;
            let arch = Architecture { scale_layer: true, ..*arch };
            let opts = TrainOptions { seed, ..*train };
            let pretrained = train_mlp(&obj, &pre, &arch, &opts).map_err(solver_err)?;
            let topts = TransferOptions { seed, ..*options };
            let out = transfer_retrain(&pretrained.net, &obj, &measure, &topts).map_err(solver_err)?;
            let field = snapshot(&out.net, h, seed, grid, measure.dim());
            let note = out.ratio.map(|r| format!("scale-only / full retrain excess value: {r:.4}"));
            RowResult { seed, estimate: out.estimate, field, log: pretrained.log, net: Some(out.net), note }
        }
    };
    Ok(row)
}

fn expansion_integration(measure: &Measure, batch: usize) -> Integration {
    if measure.as_discrete().is_some() {
        Integration::Exact
    } else {
        Integration::MonteCarlo { batch }
    }
}

/// `θ` on the configured square grid; empty unless the problem is planar.
fn snapshot(field: &dyn VectorField, h: f64, seed: u64, grid: &GridConfig, dim: usize) -> Vec<FieldRow> {
    if dim != 2 || grid.n == 0 {
        return Vec::new();
    }
    let axis = |k: usize, i: usize| {
        if grid.n == 1 {
            grid.lo[k]
        } else {
            grid.lo[k] + (grid.hi[k] - grid.lo[k]) * i as f64 / (grid.n - 1) as f64
        }
    };
    let mut coords = Vec::with_capacity(2 * grid.n * grid.n);
    for i in 0..grid.n {
        for j in 0..grid.n {
            coords.push(axis(0, i));
            coords.push(axis(1, j));
        }
    }
    let thetas = field.eval_batch(&coords);
    coords
        .chunks(2)
        .zip(thetas.chunks(2))
        .map(|(x, t)| FieldRow { h, seed, x1: x[0], x2: x[1], theta1: t[0], theta2: t[1] })
        .collect()
}

fn run_bounds(cfg: &BoundsConfig, loaded: &Loaded) -> Result<(), Failure> {
    let hs = config::h_values(&cfg.h, true)?;
    cfg.market.validate().map_err(|e| Failure::config("market", e))?;
    let penalty = cfg.penalty().map_err(|e| Failure::config("penalty", e))?;
    Regime::Martingale
        .check_penalty(&penalty, cfg.bounds.p)
        .map_err(|e| Failure::config("penalty", e))?;
    let seed = match cfg.seed {
        Some(s) => s,
        None => config::seeds(None)?[0],
    };
    let mut opts = cfg.bounds;
    opts.train.seed = seed;
    let rows = bull_spread_bounds(&cfg.market, &hs, &penalty, &opts).map_err(|e| Failure::solver("bounds", e))?;

    let dir = output_dir(&cfg.name, &cfg.output.dir);
    create_dir(&dir)?;
    let csv: Vec<BoundsCsvRow> = rows.iter().map(BoundsCsvRow::from).collect();
    output::write_csv(&dir.join("bounds.csv"), "bounds", &csv)?;
    output::write_json(&dir.join("config.json"), &loaded.json)?;

    println!("{} -> {}", cfg.name, dir.display());
    println!("{:>10} {:>12} {:>12} {:>12} {:>11} {:>11}", "h", "lower", "bs_price", "upper", "se_lower", "se_upper");
    for r in &rows {
        println!(
            "{:>10} {:>12.6} {:>12.6} {:>12.6} {:>11.3e} {:>11.3e}{}",
            r.h,
            r.lower,
            r.bs_price,
            r.upper,
            r.stderr_lower,
            r.stderr_upper,
            if r.clipped { "  (clipped)" } else { "" }
        );
    }
    Ok(())
}

pub fn price_bounds(loaded: &Loaded) -> Result<(), Failure> {
    match &loaded.config {
        Config::Bounds(cfg) => run_bounds(cfg, loaded),
        Config::Experiment(_) => Err(Failure::Config("market: price-bounds needs a config with a `market` section".into())),
    }
}

#[derive(Serialize)]
struct ExpandOutput<'a> {
    schema: &'static str,
    #[serde(flatten)]
    report: &'a ExpansionReport,
    /// `φ*(inner_norm)` recomputed from the penalty.
    phi_star_of_inner_norm: f64,
}

pub fn expand(loaded: &Loaded, out: Option<&Path>) -> Result<(), Failure> {
    let Config::Experiment(cfg) = &loaded.config else {
        return Err(Failure::Config("market: expand needs an experiment config".into()));
    };
    let problem = Problem::build(&cfg.problem)?;
    problem.check_expansion()?;
    let seed = config::seeds(cfg.seeds.as_ref())?[0];
    let measure = config::build_measure(&cfg.problem.measure, seed, &loaded.base_dir, "problem.measure")?;
    let integration = expansion_integration(&measure, cfg.expand.batch);
    let report = first_order_coefficient(problem.loss.clone(), &measure, problem.p, &problem.penalty, problem.regime, integration)
        .map_err(|e| Failure::solver("expansion", e))?;
    let check = problem.penalty.conjugate(report.inner_norm).map_err(|e| Failure::solver("conjugate", e))?;
    let doc = ExpandOutput { schema: "wassrisk expansion v1", report: &report, phi_star_of_inner_norm: check };
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        output::write_json(&dir.join("expansion.json"), &doc)?;
    }
    Ok(())
}

struct Check {
    name: String,
    status: Status,
    detail: String,
}

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: if pass { Status::Pass } else { Status::Fail }, detail: detail.into() }
    }

    fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::Skip, detail: detail.into() }
    }
}

pub fn verify(loaded: &Loaded, values: Option<&Path>) -> Result<(), Failure> {
    let mut checks = match &loaded.config {
        Config::Experiment(cfg) => verify_experiment(cfg, loaded)?,
        Config::Bounds(cfg) => verify_bounds(cfg)?,
    };
    if let Some(path) = values {
        checks.push(values_check(path)?);
    }
    let mut failed = 0;
    for c in &checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("[{tag}] {}: {}", c.name, c.detail);
    }
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

/// Atoms for the oracle checks: the measure itself when it is small and
/// atomic, otherwise a uniform sample.
fn verify_atoms(measure: &Measure, limit: usize) -> Result<DiscreteMeasure, Failure> {
    if let Some(mu) = measure.as_discrete() {
        if mu.len() <= limit {
            return Ok(mu.clone());
        }
    }
    let d = measure.dim();
    let coords = measure.sample(VERIFY_ATOMS.min(limit), salted(0, 0x7E21F));
    DiscreteMeasure::uniform(coords.chunks(d).map(<[f64]>::to_vec).collect()).map_err(|e| Failure::config("problem.measure", e))
}

fn verify_experiment(cfg: &ExperimentConfig, loaded: &Loaded) -> Result<Vec<Check>, Failure> {
    let problem = Problem::build(&cfg.problem)?;
    if let Err(e @ Failure::Config(_)) = problem.check_expansion() {
        if problem.regime == Regime::Mean {
            return Err(e);
        }
    }
    let hs = config::h_values(&cfg.h, false)?;
    let seed = config::seeds(cfg.seeds.as_ref())?[0];
    let measure = config::build_measure(&cfg.problem.measure, seed, &loaded.base_dir, "problem.measure")?;
    if measure.dim() != problem.loss.dim() {
        return Err(Failure::config(
            "problem.measure",
            Error::DimensionMismatch { expected: problem.loss.dim(), got: measure.dim() },
        ));
    }
    // the martingale randomization doubles the atom count
    let limit = if problem.regime == Regime::Martingale { MAX_ATOMS / 2 } else { MAX_ATOMS };
    let mu = verify_atoms(&measure, limit)?;
    let h0 = hs[0];

    let mut checks = vec![
        feasibility_check(&problem, &mu, h0, seed)?,
        loss_gradient_check(&problem, &mu, seed),
        objective_gradient_check(&problem, &mu, h0, seed)?,
        monotonicity_check(&problem, &mu, &hs)?,
    ];
    checks.push(expansion_check(&problem, &measure, cfg.expand.batch));
    Ok(checks)
}

fn random_shifts(n: usize, d: usize, scale: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn feasibility_check(problem: &Problem, mu: &DiscreteMeasure, h: f64, seed: u64) -> Result<Check, Failure> {
    let name = "feasibility (transport oracle)";
    let d = mu.dim();
    let mut fields: Vec<Vec<f64>> = (0..VERIFY_FIELDS as u64).map(|k| random_shifts(mu.len(), d, 0.5, seed, salted(k, 0xFEA5))).collect();
    let obj = problem.objective(h).map_err(|e| Failure::config("problem", e))?;
    match solve_discrete(&obj, mu, None, &SolveOptions::default()) {
        Ok((_, field)) => fields.push(field.flat()),
        Err(e) => log::warn!("feasibility check without the solver field: {e}"),
    }
    let mut worst = f64::NEG_INFINITY;
    for thetas in &fields {
        let nu = if problem.regime == Regime::Martingale {
            martingale_pushforward(mu, thetas)
        } else {
            pushforward(mu, thetas)
        }
        .map_err(|e| Failure::solver("pushforward", e))?;
        let (w, _) = wasserstein_p(mu, &nu, problem.p).map_err(|e| Failure::solver("transport", e))?;
        worst = worst.max(w - lp_norm_shifts(thetas, mu.weights(), d, problem.p));
    }
    Ok(Check::new(
        name,
        worst <= 1e-10,
        format!("{} fields on {} atoms, max W_p − ‖θ‖ = {worst:.3e}", fields.len(), mu.len()),
    ))
}

/// Points off the atoms, so that kinks placed at atoms do not matter.
fn jittered(mu: &DiscreteMeasure, seed: u64) -> Vec<Vec<f64>> {
    let d = mu.dim();
    let jitter = random_shifts(mu.len(), d, 1e-3, seed, 0x717);
    mu.atoms()
        .iter()
        .zip(jitter.chunks(d))
        .map(|(x, j)| x.iter().zip(j).map(|(a, b)| a + b).collect())
        .collect()
}

fn loss_gradient_check(problem: &Problem, mu: &DiscreteMeasure, seed: u64) -> Check {
    let name = "loss gradient vs finite differences";
    let f = problem.loss.as_ref();
    if !f.has_gradient() {
        return Check::skip(name, "loss has no analytic gradient");
    }
    let mut worst: f64 = 0.0;
    for x in jittered(mu, seed) {
        let g = f.gradient(&x).unwrap_or_default();
        let fd = fd_gradient(f, &x, 1e-6);
        let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Check::new(name, worst <= 1e-5, format!("max scaled error {worst:.3e} on {} points", mu.len()))
}

fn objective_gradient_check(problem: &Problem, mu: &DiscreteMeasure, h: f64, seed: u64) -> Result<Check, Failure> {
    let name = "objective gradient vs finite differences";
    let obj = problem.objective(h).map_err(|e| Failure::config("problem", e))?;
    let pts = PointSet::new(mu.dim(), jittered(mu, seed).concat(), mu.weights().to_vec(), true)
        .map_err(|e| Failure::solver(name, e))?;
    let mut thetas = random_shifts(mu.len(), mu.dim(), 0.3, seed, 0x6AD);
    if let Some(a) = problem.penalty.ball_radius() {
        // stay inside the ball so the objective is finite
        let n = lp_norm_shifts(&thetas, mu.weights(), mu.dim(), problem.p);
        thetas.iter_mut().for_each(|t| *t *= 0.5 * a * h / n);
    }
    let (_, grad) = match obj.gradient_shifts(&pts, &thetas) {
        Ok(g) => g,
        Err(Error::MissingGradient) => return Ok(Check::skip(name, "loss has no gradient")),
        Err(e) => return Err(Failure::solver(name, e)),
    };
    let value = |t: &[f64]| obj.evaluate_shifts(&pts, t).map(|e| e.value);
    let mut fd = vec![0.0; thetas.len()];
    let mut probe = thetas.clone();
    for k in 0..thetas.len() {
        let step = 1e-6 * thetas[k].abs().max(1.0);
        probe[k] = thetas[k] + step;
        let up = value(&probe).map_err(|e| Failure::solver(name, e))?;
        probe[k] = thetas[k] - step;
        let down = value(&probe).map_err(|e| Failure::solver(name, e))?;
        probe[k] = thetas[k];
        fd[k] = (up - down) / (2.0 * step);
    }
    let scale = fd.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    let worst = grad.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    Ok(Check::new(name, worst <= 1e-5, format!("max relative error {worst:.3e} over {} shifts", thetas.len())))
}

fn monotonicity_check(problem: &Problem, mu: &DiscreteMeasure, hs: &[f64]) -> Result<Check, Failure> {
    let name = "monotone in h";
    let mut grid: Vec<f64> = if hs.len() >= 2 {
        hs.to_vec()
    } else {
        [0.25, 0.5, 1.0, 2.0].iter().map(|s| s * hs[0]).collect()
    };
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let values = grid
        .iter()
        .map(|&h| {
            let obj = problem.objective(h).map_err(|e| Failure::config("problem", e))?;
            solve_discrete(&obj, mu, None, &SolveOptions::default())
                .map(|(e, _)| e.value)
                .map_err(|e| Failure::solver(name, e))
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    let worst = values.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    Ok(Check::new(
        name,
        worst <= tol,
        format!("{} values on {} atoms, largest drop {:.3e}", values.len(), mu.len(), worst.max(0.0)),
    ))
}

fn expansion_check(problem: &Problem, measure: &Measure, batch: usize) -> Check {
    let name = "expansion coefficient = φ*(inner norm)";
    if let Err(e) = problem.check_expansion() {
        return Check::skip(name, e.to_string());
    }
    let integration = expansion_integration(measure, batch);
    let report = match first_order_coefficient(problem.loss.clone(), measure, problem.p, &problem.penalty, problem.regime, integration) {
        Ok(r) => r,
        Err(e) => return Check::skip(name, e.to_string()),
    };
    match problem.penalty.conjugate(report.inner_norm) {
        Ok(c) => {
            let err = (c - report.coefficient).abs() / c.abs().max(1e-300);
            Check::new(name, err <= 1e-12 || c == report.coefficient, format!("coefficient {} (relative gap {err:.1e})", report.coefficient))
        }
        Err(e) => Check::new(name, false, e.to_string()),
    }
}

fn verify_bounds(cfg: &BoundsConfig) -> Result<Vec<Check>, Failure> {
    config::h_values(&cfg.h, true)?;
    cfg.market.validate().map_err(|e| Failure::config("market", e))?;
    let penalty = cfg.penalty().map_err(|e| Failure::config("penalty", e))?;
    Regime::Martingale
        .check_penalty(&penalty, cfg.bounds.p)
        .map_err(|e| Failure::config("penalty", e))?;
    let bs = cfg.market.spread_price().map_err(|e| Failure::solver("market", e))?;
    let band = cfg.market.k2 - cfg.market.k1;
    let mut checks = vec![Check::new("price inside [0, K2 − K1]", (0.0..=band).contains(&bs), format!("Black–Scholes price {bs:.6}"))];

    // the smoothed payoff has a Hessian, so the martingale expansion applies
    let payoff: Arc<dyn wassrisk_core::loss::Loss> = Arc::new(cfg.market.payoff().map_err(|e| Failure::solver("market", e))?);
    let measure = cfg.market.returns_measure(0).map_err(|e| Failure::solver("market", e))?;
    let problem = Problem { loss: payoff, penalty, p: cfg.bounds.p, regime: Regime::Martingale };
    let mu = verify_atoms(&measure, MAX_ATOMS / 2)?;
    let hs: Vec<f64> = config::h_values(&cfg.h, true)?.into_iter().filter(|h| *h > 0.0).collect();
    let hs = if hs.is_empty() { vec![0.01] } else { hs };
    checks.push(feasibility_check(&problem, &mu, hs[0], 0)?);
    checks.push(loss_gradient_check(&problem, &mu, 0));
    checks.push(objective_gradient_check(&problem, &mu, hs[0], 0)?);
    checks.push(monotonicity_check(&problem, &mu, &hs)?);
    checks.push(expansion_check(&problem, &measure, 1 << 16));
    Ok(checks)
}

/// Re-parses a values CSV and checks each seed's curve for monotonicity
/// within three combined standard errors.
fn values_check(path: &Path) -> Result<Check, Failure> {
    let name = format!("values file {}", path.display());
    let mut rows = output::read_values(path)?;
    rows.sort_by(|a, b| a.seed.cmp(&b.seed).then(a.h.total_cmp(&b.h)));
    let mut worst = f64::NEG_INFINITY;
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.seed != b.seed {
            continue;
        }
        let slack = 3.0 * a.stderr.hypot(b.stderr) + 1e-9 * a.value.abs().max(1.0);
        worst = worst.max(a.value - b.value - slack);
    }
    let pass = worst <= 0.0;
    Ok(Check::new(name, pass, format!("{} rows, monotone in h per seed{}", rows.len(), if pass { "" } else { " violated" })))
}
