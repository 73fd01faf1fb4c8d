use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;

/// Frequency step for the split-rate method: a literal value, or derived from
/// the curvature approximations at the initial point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    Fixed(f64),
    #[default]
    Auto,
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Fixed(v) => write!(f, "{v}"),
            StepSize::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(StepSize::Auto);
        }
        s.parse::<f64>()
            .map(StepSize::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("step size must be a number or 'auto', got '{s}'")))
    }
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Fixed(v) => ser.serialize_f64(*v),
            StepSize::Auto => ser.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Number(v) => Ok(StepSize::Fixed(v)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Step, backtracking and stopping parameters shared by all three methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Initial step of the joint-vector method.
    pub eta0: f64,
    /// Initial amplitude step (split-rate and amplitude-only methods).
    pub eta_a0: f64,
    pub eta_w0: StepSize,
    /// Used for `eta_w0 = auto` when `use_curvature` is off.
    pub eta_w0_fallback: f64,
    pub use_curvature: bool,
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub obj_tol: f64,
    pub obj_window: usize,
    pub max_backtracks: usize,
    /// Absolute ridge; when unset, `epsilon_rel · tr(S)/P`.
    pub epsilon: Option<f64>,
    pub epsilon_rel: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta0: 1.0,
            eta_a0: 1.0,
            eta_w0: StepSize::Auto,
            eta_w0_fallback: 1e-2,
            use_curvature: true,
            alpha: 0.3,
            beta: 0.5,
            max_iters: 45_000,
            grad_tol: 1e-6,
            obj_tol: 1e-10,
            obj_window: 20,
            max_backtracks: 60,
            epsilon: None,
            epsilon_rel: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad("eta0 must be positive");
        }
        if !(self.eta_a0 > 0.0 && self.eta_a0.is_finite()) {
            return bad("eta_a0 must be positive");
        }
        if let StepSize::Fixed(v) = self.eta_w0 {
            if !(v > 0.0 && v.is_finite()) {
                return bad("eta_w0 must be positive");
            }
        }
        if !(self.eta_w0_fallback > 0.0) {
            return bad("eta_w0_fallback must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if self.max_backtracks < 1 {
            return bad("max_backtracks must be >= 1");
        }
        if self.obj_window < 1 {
            return bad("obj_window must be >= 1");
        }
        if !(self.grad_tol >= 0.0) || !(self.obj_tol >= 0.0) {
            return bad("tolerances must be >= 0");
        }
        match self.epsilon {
            Some(e) if !(e > 0.0 && e.is_finite()) => bad("epsilon must be positive"),
            None if !(self.epsilon_rel > 0.0) => bad("epsilon_rel must be positive"),
            _ => Ok(()),
        }
    }

    /// Ridge used by the estimator for this sample covariance.
    pub fn epsilon_for(&self, s: &HermitianMatrix) -> Result<f64> {
        let eps = match self.epsilon {
            Some(e) => e,
            None => self.epsilon_rel * s.trace() / s.dim() as f64,
        };
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(Error::InvalidParameter(format!(
                "ridge {eps} is not positive; set epsilon explicitly for a zero sample covariance"
            )))
        }
    }
}
