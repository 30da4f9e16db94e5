//! Weak Wolfe line search for maximisation.
//!
//! With `φ(η) = f(x + η·d)` and `φ'(0) = ⟨∇f(x), d⟩ > 0`, a step is accepted
//! when
//!
//! ```text
//! φ(η) ≥ φ(0) + c1·η·φ'(0)        (sufficient increase)
//! φ'(η) ≤ c2·φ'(0)                 (curvature)
//! ```
//!
//! The bracket `[lo, hi]` starts as `[0, ∞)`; the trial doubles until `hi` is
//! finite and is then bisected.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::objective::SmoothObjective;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub initial_step: f64,
    pub max_trials: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            initial_step: 1.0,
            max_trials: 50,
        }
    }
}

/// Accepted step with the objective and gradient at `x + η·d`.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub eta: f64,
    pub value: f64,
    pub grad: Matrix,
    pub trials: usize,
}

/// Both Wolfe conditions at step `eta`, given `φ(0)`, `φ'(0)`, `φ(η)` and `φ'(η)`.
pub fn wolfe_conditions_hold(params: &WolfeParams, eta: f64, f0: f64, slope0: f64, f: f64, slope: f64) -> bool {
    f >= f0 + params.c1 * eta * slope0 && slope <= params.c2 * slope0
}

fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficientProjection | Error::NotFullColumnRank | Error::ZeroProjection
    )
}

/// Finds `η` satisfying the Wolfe conditions along the ascent direction `d`.
///
/// `f0` and `g0` are the objective value and gradient at `x`. Trial points at
/// which the objective is undefined (rank-deficient projection) are treated
/// as failing sufficient increase.
pub fn wolfe_search<O: SmoothObjective + ?Sized>(
    objective: &O,
    x: &Matrix,
    direction: &Matrix,
    f0: f64,
    g0: &Matrix,
    params: &WolfeParams,
) -> Result<LineSearchOutcome> {
    let slope0 = g0.dot(direction);
    if !(slope0 > 0.0) || direction.norm() < 1e-14 {
        return Err(Error::NotAscentDirection { slope: slope0 });
    }
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut eta = params.initial_step;
    for trial in 1..=params.max_trials {
        let y = x + direction * eta;
        match objective.value_and_grad(&y) {
            Ok((f, g)) if f.is_finite() => {
                let slope = g.dot(direction);
                if f < f0 + params.c1 * eta * slope0 {
                    hi = eta;
                } else if slope > params.c2 * slope0 {
                    lo = eta;
                } else {
                    return Ok(LineSearchOutcome {
                        eta,
                        value: f,
                        grad: g,
                        trials: trial,
                    });
                }
            }
            Ok(_) => hi = eta,
            Err(e) if is_degenerate(&e) => hi = eta,
            Err(e) => return Err(e),
        }
        eta = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * eta };
    }
    Err(Error::LineSearchFailed {
        trials: params.max_trials,
    })
}
