//! Armijo backtracking. The objective is supplied as a closure of the step
//! size(s); a non-finite trial value counts as a rejection.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Armijo {
    pub alpha: f64,
    pub beta: f64,
    pub max_backtracks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearchOutcome {
    Accepted {
        eta_a: f64,
        eta_w: f64,
        value: f64,
        backtracks: usize,
    },
    Stalled {
        backtracks: usize,
    },
}

/// Largest `η = η₀ βᵐ`, `m ≤ max_backtracks`, with
/// `f(η) ≤ f₀ − α η ‖g‖²`. Reports `eta_w = eta_a = η`.
pub fn armijo_joint<F>(f0: f64, grad_sq: f64, eta0: f64, rule: &Armijo, mut f: F) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut eta = eta0;
    for m in 0..=rule.max_backtracks {
        let value = f(eta)?;
        if value.is_finite() && value <= f0 - rule.alpha * eta * grad_sq {
            return Ok(LineSearchOutcome::Accepted {
                eta_a: eta,
                eta_w: eta,
                value,
                backtracks: m,
            });
        }
        eta *= rule.beta;
    }
    Ok(LineSearchOutcome::Stalled {
        backtracks: rule.max_backtracks,
    })
}

/// Separate rates for the two blocks, shrunk together:
/// `f(η_a, η_ω) ≤ f₀ − α (η_a ‖g_a‖² + η_ω ‖g_ω‖²)`.
pub fn armijo_split<F>(
    f0: f64,
    grad_sq_a: f64,
    grad_sq_w: f64,
    eta_a0: f64,
    eta_w0: f64,
    rule: &Armijo,
    mut f: F,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let (mut eta_a, mut eta_w) = (eta_a0, eta_w0);
    for m in 0..=rule.max_backtracks {
        let value = f(eta_a, eta_w)?;
        if value.is_finite() && value <= f0 - rule.alpha * (eta_a * grad_sq_a + eta_w * grad_sq_w) {
            return Ok(LineSearchOutcome::Accepted {
                eta_a,
                eta_w,
                value,
                backtracks: m,
            });
        }
        eta_a *= rule.beta;
        eta_w *= rule.beta;
    }
    Ok(LineSearchOutcome::Stalled {
        backtracks: rule.max_backtracks,
    })
}
