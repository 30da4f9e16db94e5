use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::objective::{DataMatrix, ModelObjective, SmoothObjective};
use crate::randgen::{haar_stiefel_with, rng_from_seed};

/// Multiplier applied to the largest sampled difference quotient.
pub const LIPSCHITZ_SAFETY: f64 = 2.0;

/// Estimates below this are treated as zero (gradient identically vanishing).
pub const LIPSCHITZ_FLOOR: f64 = 1e-10;

const MAX_RESAMPLES: usize = 10;

/// Numerical Lipschitz constant of `∇f_d` for `n×p` loadings.
///
/// Draws `samples` independent pairs `(X, Y)` of Haar points on St(n, p) and
/// returns `2 · max ‖∇f_d(X) − ∇f_d(Y)‖_F / ‖X − Y‖_F`.
pub fn estimate_lipschitz(a: &DataMatrix, p: usize, samples: usize, seed: u64) -> Result<f64> {
    estimate_lipschitz_for(&ModelObjective::determinant(a), a.ncols(), p, samples, seed)
}

/// [`estimate_lipschitz`] for any objective on `n×p` matrices.
pub fn estimate_lipschitz_for<O: SmoothObjective + ?Sized>(
    objective: &O,
    n: usize,
    p: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidConfig("lipschitz estimation needs at least 2 samples".into()));
    }
    if p == 0 || p > n {
        return Err(Error::InvalidConfig(format!("need 1 <= p <= n, got p = {p}, n = {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let draw = |rng: &mut _| -> Result<(Matrix, Matrix)> {
        let mut last = Error::RankDeficientProjection;
        for _ in 0..=MAX_RESAMPLES {
            let x = haar_stiefel_with(n, p, rng);
            match objective.value_and_grad(&x) {
                Ok((_, g)) => return Ok((x, g)),
                Err(e @ (Error::RankDeficientProjection | Error::ZeroProjection)) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    };
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let (x, gx) = draw(&mut rng)?;
        let (y, gy) = draw(&mut rng)?;
        let dist = (&x - &y).norm();
        if dist > 0.0 {
            best = best.max((gx - gy).norm() / dist);
        }
    }
    Ok(LIPSCHITZ_SAFETY * best)
}

/// Constant step `1/Λ`, or 1 when the estimate is degenerate.
pub fn step_from_lipschitz(lipschitz: f64) -> f64 {
    if lipschitz > LIPSCHITZ_FLOOR && lipschitz.is_finite() {
        1.0 / lipschitz
    } else {
        1.0
    }
}
