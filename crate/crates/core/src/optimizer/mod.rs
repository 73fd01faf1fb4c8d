//! Gradient descent on the Carathéodory parameters: one shared step
//! (`Gd1`), separate amplitude/frequency steps (`Gd2`), or amplitudes only
//! with frequencies pinned to the initial grid (`Gda`).

mod config;
mod line_search;

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{OptimizerConfig, StepSize};
pub use line_search::{armijo_joint, armijo_split, Armijo, LineSearchOutcome};

use crate::curvature::lipschitz_approx;
use crate::error::{Error, Result};
use crate::likelihood::{sup_norm, NllEvaluation, Objective};
use crate::linalg::HermitianMatrix;
use crate::model::CaratheodoryModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gd1,
    Gd2,
    Gda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Gd1, Algorithm::Gd2, Algorithm::Gda];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gd1 => "gd1",
            Algorithm::Gd2 => "gd2",
            Algorithm::Gda => "gda",
        }
    }

    fn moves_frequencies(self) -> bool {
        self != Algorithm::Gda
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd1" => Ok(Algorithm::Gd1),
            "gd2" => Ok(Algorithm::Gd2),
            "gda" => Ok(Algorithm::Gda),
            other => Err(Error::InvalidParameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradConverged,
    ObjConverged,
    MaxIters,
    LineSearchStalled,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::GradConverged | Termination::ObjConverged)
    }
}

/// One accepted step. Gradient norms are those of the point the step left;
/// `nll` is the value at the point it reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub nll: f64,
    pub gnorm_a: f64,
    pub gnorm_w: f64,
    pub eta_a: f64,
    pub eta_w: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterTrace {
    pub initial_nll: f64,
    pub records: Vec<IterRecord>,
    pub termination: Termination,
}

impl IterTrace {
    pub fn final_nll(&self) -> f64 {
        self.records.last().map_or(self.initial_nll, |r| r.nll)
    }

    /// Columns `iter,nll,gnorm_a,gnorm_w,eta_a,eta_w,backtracks`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: CaratheodoryModel,
    pub trace: IterTrace,
    pub converged: bool,
    pub iterations: usize,
    /// Seconds spent inside the fit.
    pub wall_time: f64,
    /// Frequency step actually used by `Gd2` (after resolving `auto`).
    pub eta_w0: Option<f64>,
}

impl FitResult {
    pub fn covariance(&self) -> HermitianMatrix {
        crate::model::assemble_covariance(&self.model)
    }
}

/// Frequencies on the grid `2πj/K`, raw amplitudes uniform on `(0, 2 tr(S)/K)`.
pub fn initialize(s: &HermitianMatrix, k: usize, seed: u64, epsilon: f64) -> Result<CaratheodoryModel> {
    if k == 0 {
        return Err(Error::InvalidDimension("need at least one component".into()));
    }
    let upper = 2.0 * s.trace() / k as f64;
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial amplitude range (0, {upper}) is empty; tr(S) must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_raw = (0..k)
        .map(|_| loop {
            let a = rng.random_range(0.0..upper);
            if a > 0.0 {
                break a;
            }
        })
        .collect();
    let omega = frequency_grid(k);
    CaratheodoryModel::new(s.dim(), a_raw, omega, epsilon)
}

pub fn frequency_grid(k: usize) -> Vec<f64> {
    (0..k).map(|j| TAU * j as f64 / k as f64).collect()
}

/// Resolves the split-rate frequency step at `model`.
pub fn resolve_frequency_step(cfg: &OptimizerConfig, model: &CaratheodoryModel) -> f64 {
    match cfg.eta_w0 {
        StepSize::Fixed(v) => v,
        StepSize::Auto if cfg.use_curvature => {
            let l = lipschitz_approx(model);
            let eta = cfg.eta_a0 * l.amplitude / l.frequency;
            if eta > 0.0 && eta.is_finite() {
                eta
            } else {
                cfg.eta_w0_fallback
            }
        }
        StepSize::Auto => cfg.eta_w0_fallback,
    }
}

pub fn fit(s: &HermitianMatrix, k: usize, algo: Algorithm, cfg: &OptimizerConfig, seed: u64) -> Result<FitResult> {
    cfg.validate()?;
    let eps = cfg.epsilon_for(s)?;
    let init = initialize(s, k, seed, eps)?;
    fit_from(s, init, algo, cfg)
}

pub fn fit_gd1(s: &HermitianMatrix, k: usize, cfg: &OptimizerConfig, seed: u64) -> Result<FitResult> {
    fit(s, k, Algorithm::Gd1, cfg, seed)
}

pub fn fit_gd2(s: &HermitianMatrix, k: usize, cfg: &OptimizerConfig, seed: u64) -> Result<FitResult> {
    fit(s, k, Algorithm::Gd2, cfg, seed)
}

pub fn fit_gda(s: &HermitianMatrix, k: usize, cfg: &OptimizerConfig, seed: u64) -> Result<FitResult> {
    fit(s, k, Algorithm::Gda, cfg, seed)
}

fn stepped(model: &CaratheodoryModel, eval: &NllEvaluation, eta_a: f64, eta_w: f64) -> Result<CaratheodoryModel> {
    let a = model
        .a_raw()
        .iter()
        .zip(&eval.grad_a)
        .map(|(a, g)| a - eta_a * g)
        .collect();
    let w = if eta_w == 0.0 {
        model.omega().to_vec()
    } else {
        model
            .omega()
            .iter()
            .zip(&eval.grad_omega)
            .map(|(w, g)| w - eta_w * g)
            .collect()
    };
    model.with_params(a, w)
}

fn trial_value(objective: &Objective, model: Result<CaratheodoryModel>) -> Result<f64> {
    match model.and_then(|m| objective.value(&m)) {
        Ok(v) => Ok(v),
        Err(Error::NotPositiveDefinite { .. }) | Err(Error::InvalidParameter(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Runs `algo` from an explicit starting model.
pub fn fit_from(
    s: &HermitianMatrix,
    init: CaratheodoryModel,
    algo: Algorithm,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let start = Instant::now();
    let objective = Objective::new(s)?;
    let rule = Armijo {
        alpha: cfg.alpha,
        beta: cfg.beta,
        max_backtracks: cfg.max_backtracks,
    };
    let eta_w0 = (algo == Algorithm::Gd2).then(|| resolve_frequency_step(cfg, &init));

    let mut model = init;
    let mut eval = objective.evaluate(&model)?;
    let initial_nll = eval.value;
    let mut records: Vec<IterRecord> = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 0..cfg.max_iters {
        let gnorm_a = sup_norm(&eval.grad_a);
        let gnorm_w = if algo.moves_frequencies() {
            sup_norm(&eval.grad_omega)
        } else {
            0.0
        };
        if gnorm_a.max(gnorm_w) < cfg.grad_tol {
            termination = Termination::GradConverged;
            break;
        }
        let sq_a: f64 = eval.grad_a.iter().map(|g| g * g).sum();
        let sq_w: f64 = eval.grad_omega.iter().map(|g| g * g).sum();
        let f0 = eval.value;
        let outcome = match algo {
            Algorithm::Gd1 => armijo_joint(f0, sq_a + sq_w, cfg.eta0, &rule, |eta| {
                trial_value(&objective, stepped(&model, &eval, eta, eta))
            })?,
            Algorithm::Gd2 => armijo_split(
                f0,
                sq_a,
                sq_w,
                cfg.eta_a0,
                eta_w0.unwrap_or(cfg.eta_w0_fallback),
                &rule,
                |ea, ew| trial_value(&objective, stepped(&model, &eval, ea, ew)),
            )?,
            Algorithm::Gda => armijo_joint(f0, sq_a, cfg.eta_a0, &rule, |eta| {
                trial_value(&objective, stepped(&model, &eval, eta, 0.0))
            })?,
        };
        let (eta_a, eta_w, value, backtracks) = match outcome {
            LineSearchOutcome::Accepted {
                eta_a,
                eta_w,
                value,
                backtracks,
            } => (
                eta_a,
                if algo.moves_frequencies() { eta_w } else { 0.0 },
                value,
                backtracks,
            ),
            LineSearchOutcome::Stalled { .. } => {
                termination = Termination::LineSearchStalled;
                break;
            }
        };
        model = stepped(&model, &eval, eta_a, eta_w)?;
        eval = objective.evaluate(&model)?;
        debug_assert_eq!(eval.value.to_bits(), value.to_bits());
        records.push(IterRecord {
            iter,
            nll: eval.value,
            gnorm_a,
            gnorm_w,
            eta_a,
            eta_w,
            backtracks,
        });
        if stalled_objective(initial_nll, &records, cfg) {
            termination = Termination::ObjConverged;
            break;
        }
    }

    let iterations = records.len();
    Ok(FitResult {
        model,
        trace: IterTrace {
            initial_nll,
            records,
            termination,
        },
        converged: termination.is_converged(),
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        eta_w0,
    })
}

/// Decrease over the last `obj_window` accepted steps is at most
/// `obj_tol · max(|f|, 1)`.
fn stalled_objective(initial: f64, records: &[IterRecord], cfg: &OptimizerConfig) -> bool {
    let n = records.len();
    if n < cfg.obj_window {
        return false;
    }
    let now = records[n - 1].nll;
    let then = if n == cfg.obj_window {
        initial
    } else {
        records[n - 1 - cfg.obj_window].nll
    };
    then - now <= cfg.obj_tol * now.abs().max(1.0)
}
