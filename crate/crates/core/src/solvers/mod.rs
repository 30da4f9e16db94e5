//! Steepest-ascent solvers for the determinant and trace models.
//!
//! Six variants share one driver:
//!
//! | variant            | model | step                                              |
//! |--------------------|-------|---------------------------------------------------|
//! | `det-flow`         | det   | constant `η = 1/Λ`                                |
//! | `det-LS`           | det   | Wolfe line search along `∇f_d`                    |
//! | `trace-flow`       | trace | Wolfe line search along `∇f_t`                    |
//! | `acc-det-flow-k=K` | det   | RNA over `K + 1` constant steps, `ξ = 1`          |
//! | `acc-det-LS`       | det   | RNA direction, `ξ` from a Wolfe line search       |
//! | `acc-det-BT`       | det   | RNA with `λ` picked from a grid by best `f_d`     |
//!
//! Every accepted iterate is replaced by the `Q` factor of its thin QR.

pub mod line_search;
pub mod lipschitz;
pub mod rna;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub use line_search::{wolfe_search, LineSearchOutcome, WolfeParams};
pub use lipschitz::{estimate_lipschitz, estimate_lipschitz_for, step_from_lipschitz};
pub use rna::{rna_coefficients, rna_extrapolate};

use crate::error::{Error, Result};
use crate::metrics::principal_angle;
use crate::numerics::{orthonormalize, Matrix};
use crate::objective::{DataMatrix, LoadingMatrix, Model, ModelObjective, SmoothObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    DetFlow,
    DetLS,
    TraceFlow,
    AccDetFlow,
    AccDetLS,
    AccDetBT,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::DetFlow,
        Variant::DetLS,
        Variant::TraceFlow,
        Variant::AccDetFlow,
        Variant::AccDetLS,
        Variant::AccDetBT,
    ];

    pub fn model(self) -> Model {
        match self {
            Variant::TraceFlow => Model::Trace,
            _ => Model::Determinant,
        }
    }

    pub fn is_accelerated(self) -> bool {
        matches!(self, Variant::AccDetFlow | Variant::AccDetLS | Variant::AccDetBT)
    }

    /// Display name; the acceleration window appears in `acc-det-flow-k=K`.
    pub fn label(self, window: usize) -> String {
        match self {
            Variant::DetFlow => "det-flow".into(),
            Variant::DetLS => "det-LS".into(),
            Variant::TraceFlow => "trace-flow".into(),
            Variant::AccDetFlow => format!("acc-det-flow-k={window}"),
            Variant::AccDetLS => "acc-det-LS".into(),
            Variant::AccDetBT => "acc-det-BT".into(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label(SolverConfig::DEFAULT_WINDOW))
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect();
        let v = match key.as_str() {
            "detflow" => Variant::DetFlow,
            "detls" => Variant::DetLS,
            "traceflow" | "trflow" => Variant::TraceFlow,
            "accdetls" => Variant::AccDetLS,
            "accdetbt" => Variant::AccDetBT,
            k if k == "accdetflow" || k.starts_with("accdetflowk=") => Variant::AccDetFlow,
            _ => return Err(Error::InvalidConfig(format!("unknown solver variant {s:?}"))),
        };
        Ok(v)
    }
}

/// Solver parameters. Defaults follow the usual textbook choices.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Stop once the stationarity measure drops below this.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Acceleration window `K` (`K + 1` inner steps per outer iteration).
    pub window: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub lipschitz_samples: usize,
    pub lipschitz_seed: u64,
    /// Use this Lipschitz constant instead of estimating one.
    pub lipschitz: Option<f64>,
    pub reorthogonalize: bool,
    /// Candidate regularisation scales for `acc-det-BT`.
    pub lambda_grid: Vec<f64>,
    /// Regularisation for `acc-det-flow` and `acc-det-LS`.
    pub rna_lambda: f64,
}

impl SolverConfig {
    pub const DEFAULT_WINDOW: usize = 4;

    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return bad(format!(
                "need 0 < wolfe_c1 < wolfe_c2 < 1, got {} and {}",
                self.wolfe_c1, self.wolfe_c2
            ));
        }
        if self.window < 1 {
            return bad("acceleration window must be at least 1".into());
        }
        if self.lipschitz_samples < 2 {
            return bad("lipschitz_samples must be at least 2".into());
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return bad("lambda_grid must be a nonempty list of nonnegative values".into());
        }
        if !(self.rna_lambda >= 0.0) {
            return bad(format!("rna_lambda must be nonnegative, got {}", self.rna_lambda));
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lipschitz must be finite and nonnegative, got {l}"));
            }
        }
        Ok(())
    }

    pub fn wolfe(&self) -> WolfeParams {
        WolfeParams {
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
            ..WolfeParams::default()
        }
    }

    pub fn label(&self) -> String {
        self.variant.label(self.window)
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::DetFlow,
            epsilon: 1e-6,
            max_iters: 100_000,
            window: Self::DEFAULT_WINDOW,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            lipschitz_samples: 20,
            lipschitz_seed: 0,
            lipschitz: None,
            reorthogonalize: true,
            lambda_grid: vec![1e-1, 1e-3, 1e-5, 1e-7],
            rna_lambda: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradBelowEpsilon,
    MaxIters,
    NumericalFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradBelowEpsilon => "converged",
            Termination::MaxIters => "max-iters",
            Termination::NumericalFailure => "numerical-failure",
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub iter: usize,
    pub elapsed_seconds: f64,
    pub f_value: f64,
    /// Frobenius norm of the stationarity measure (see [`stationarity_measure`]).
    pub grad_norm: f64,
    pub principal_angle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub x_final: LoadingMatrix,
    pub converged: bool,
    pub trace: Vec<IterateRecord>,
    pub total_iters: usize,
    pub termination: Termination,
    /// Lipschitz constant used for constant steps, if one was needed.
    pub lipschitz: Option<f64>,
    /// Steps that fell back from acceleration or line search to a plain step.
    pub fallbacks: usize,
    /// Diagnostic for [`Termination::NumericalFailure`].
    pub failure: Option<String>,
}

impl SolverResult {
    pub fn final_record(&self) -> &IterateRecord {
        self.trace.last().expect("trace always holds the starting point")
    }
}

/// `X + η·∇f`, optionally replaced by the `Q` factor of its thin QR.
pub fn steepest_ascent_step(x: &Matrix, grad: &Matrix, eta: f64, reorthogonalize: bool) -> Result<Matrix> {
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {eta}")));
    }
    if x.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            found: format!("{}x{}", grad.nrows(), grad.ncols()),
        });
    }
    let y = x + grad * eta;
    if reorthogonalize {
        orthonormalize(&y)
    } else {
        Ok(y)
    }
}

/// Norm used by the stopping rule.
///
/// For the determinant model this is `‖∇f_d(X)‖_F`; the gradient is already
/// orthogonal to `range(X)`. For the trace model the Euclidean gradient does
/// not vanish on the Stiefel optimum, so its component orthogonal to
/// `range(X)` is used: `‖(I − QQᵀ)∇f_t(X)‖_F` with `Q` an orthonormal basis.
pub fn stationarity_measure(model: Model, x: &Matrix, grad: &Matrix, orthonormal: bool) -> Result<f64> {
    match model {
        Model::Determinant => Ok(grad.norm()),
        Model::Trace => {
            let q = if orthonormal { x.clone() } else { orthonormalize(x)? };
            Ok((grad - &q * q.tr_mul(grad)).norm())
        }
    }
}

fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficientProjection
            | Error::NotFullColumnRank
            | Error::ZeroProjection
            | Error::RankDeficient
            | Error::SingularSystem
    )
}

struct Runner<'a> {
    data: &'a DataMatrix,
    config: &'a SolverConfig,
    objective: ModelObjective<'a>,
    p: usize,
    lipschitz: Option<f64>,
    fallbacks: usize,
}

impl<'a> Runner<'a> {
    fn constant_step(&mut self) -> Result<f64> {
        let l = match self.lipschitz {
            Some(l) => l,
            None => {
                let l = match self.config.lipschitz {
                    Some(l) => l,
                    None => estimate_lipschitz_for(
                        &self.objective,
                        self.data.ncols(),
                        self.p,
                        self.config.lipschitz_samples,
                        self.config.lipschitz_seed,
                    )?,
                };
                self.lipschitz = Some(l);
                l
            }
        };
        Ok(step_from_lipschitz(l))
    }

    fn plain_step(&mut self, x: &Matrix, g: &Matrix) -> Result<Matrix> {
        let eta = self.constant_step()?;
        Ok(x + g * eta)
    }

    /// Wolfe step along `d`, falling back to a constant step along `g`.
    fn line_search_step(&mut self, x: &Matrix, f: f64, g: &Matrix, d: &Matrix) -> Result<Matrix> {
        match wolfe_search(&self.objective, x, d, f, g, &self.config.wolfe()) {
            Ok(out) => Ok(x + d * out.eta),
            Err(Error::LineSearchFailed { .. } | Error::NotAscentDirection { .. }) => {
                self.fallbacks += 1;
                self.plain_step(x, g)
            }
            Err(e) => Err(e),
        }
    }

    /// Trace-flow step: Wolfe along `∇f_t`, then halve until the
    /// re-orthogonalised point does not lose objective value.
    fn trace_step(&mut self, x: &Matrix, f: f64, g: &Matrix) -> Result<Matrix> {
        let mut eta = match wolfe_search(&self.objective, x, g, f, g, &self.config.wolfe()) {
            Ok(out) => out.eta,
            Err(Error::LineSearchFailed { .. } | Error::NotAscentDirection { .. }) => {
                self.fallbacks += 1;
                self.constant_step()?
            }
            Err(e) => return Err(e),
        };
        if !self.config.reorthogonalize {
            return Ok(x + g * eta);
        }
        let noise = 1e-14 * f.abs().max(1.0);
        for _ in 0..60 {
            let y = x + g * eta;
            if let Ok(q) = orthonormalize(&y) {
                if let Ok(fq) = self.objective.value(&q) {
                    if fq >= f - noise {
                        return Ok(y);
                    }
                }
            }
            eta *= 0.5;
        }
        Err(Error::LineSearchFailed { trials: 60 })
    }

    /// `x_0 = x, x_{j+1} = x_j + η∇f(x_j)` for `j = 0..=K`.
    fn window(&mut self, x: &Matrix, g: &Matrix) -> Result<Vec<Matrix>> {
        let eta = self.constant_step()?;
        let k = self.config.window;
        let mut iterates = Vec::with_capacity(k + 2);
        iterates.push(x.clone());
        let mut grad = g.clone();
        for j in 0..=k {
            let next = &iterates[j] + &grad * eta;
            if j < k {
                grad = self.objective.value_and_grad(&next)?.1;
            }
            iterates.push(next);
        }
        Ok(iterates)
    }

    fn accelerated_step(&mut self, x: &Matrix, f: f64, g: &Matrix) -> Result<Matrix> {
        let iterates = match self.window(x, g) {
            Ok(w) => w,
            Err(e) if is_degenerate(&e) => {
                self.fallbacks += 1;
                return self.plain_step(x, g);
            }
            Err(e) => return Err(e),
        };
        let plain = iterates.last().expect("window is nonempty").clone();
        let evaluable = |y: &Matrix| self.objective.value(y).ok().filter(|v| v.is_finite());
        // Extrapolation estimates a fixed point of the window whatever its
        // stability, so near a saddle it can pull the iterate back onto it.
        // A candidate must do at least as well as the plain iterate.
        let f_plain = evaluable(&plain).unwrap_or(f64::NEG_INFINITY);
        match self.config.variant {
            Variant::AccDetFlow => match rna_extrapolate(&iterates, self.config.rna_lambda) {
                Ok(delta) => {
                    let y = x + delta;
                    if evaluable(&y).is_some_and(|v| v >= f_plain) {
                        return Ok(y);
                    }
                }
                Err(e) if is_degenerate(&e) => {}
                Err(e) => return Err(e),
            },
            Variant::AccDetLS => {
                if let Ok(delta) = rna_extrapolate(&iterates, self.config.rna_lambda) {
                    if g.dot(&delta) > 0.0 {
                        if let Ok(out) = wolfe_search(&self.objective, x, &delta, f, g, &self.config.wolfe()) {
                            return Ok(x + delta * out.eta);
                        }
                    }
                }
                self.fallbacks += 1;
                return self.line_search_step(x, f, g, g);
            }
            Variant::AccDetBT => {
                let mut best: Option<(f64, Matrix)> = None;
                for &lambda in &self.config.lambda_grid {
                    let Ok(delta) = rna_extrapolate(&iterates, lambda) else { continue };
                    let y = x + delta;
                    if let Some(v) = evaluable(&y) {
                        if best.as_ref().is_none_or(|(b, _)| v > *b) {
                            best = Some((v, y));
                        }
                    }
                }
                if let Some((v, y)) = best {
                    if v >= f_plain {
                        return Ok(y);
                    }
                }
            }
            _ => unreachable!("accelerated_step called for a plain variant"),
        }
        self.fallbacks += 1;
        Ok(plain)
    }

    fn step(&mut self, x: &Matrix, f: f64, g: &Matrix) -> Result<Matrix> {
        match self.config.variant {
            Variant::DetFlow => self.plain_step(x, g),
            Variant::DetLS => self.line_search_step(x, f, g, g),
            Variant::TraceFlow => self.trace_step(x, f, g),
            Variant::AccDetFlow | Variant::AccDetLS | Variant::AccDetBT => self.accelerated_step(x, f, g),
        }
    }
}

/// Runs one solver from `x0` until the stationarity measure falls below
/// `epsilon` or the iteration budget is spent.
///
/// When `ground_truth` (an orthonormal `n×p` basis) is given, every trace
/// record carries the principal angle to it. Errors are returned only for
/// invalid inputs; failures during the iteration end the run with
/// [`Termination::NumericalFailure`].
pub fn run(
    data: &DataMatrix,
    x0: &LoadingMatrix,
    config: &SolverConfig,
    ground_truth: Option<&Matrix>,
) -> Result<SolverResult> {
    config.validate()?;
    let (n, p) = x0.shape();
    if n != data.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows in x0", data.ncols()),
            found: format!("{n} rows"),
        });
    }
    if let Some(v) = ground_truth {
        crate::numerics::ensure_shape(v, n, p)?;
    }
    let start = Instant::now();
    let model = config.variant.model();
    let objective = ModelObjective { model, data };
    let mut runner = Runner {
        data,
        config,
        objective,
        p,
        lipschitz: None,
        fallbacks: 0,
    };
    let reorth = config.reorthogonalize;

    let mut x: Matrix = if reorth { orthonormalize(x0)? } else { (**x0).clone() };
    let (mut f, mut g) = objective.value_and_grad(&x)?;
    let angle = |x: &Matrix| -> Result<Option<f64>> { ground_truth.map(|v| principal_angle(v, x)).transpose() };
    let mut measure = stationarity_measure(model, &x, &g, reorth)?;
    let mut trace = vec![IterateRecord {
        iter: 0,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        f_value: f,
        grad_norm: measure,
        principal_angle: angle(&x)?,
    }];

    let mut iter = 0;
    let mut failure = None;
    let termination = loop {
        if measure < config.epsilon {
            break Termination::GradBelowEpsilon;
        }
        if iter >= config.max_iters {
            break Termination::MaxIters;
        }
        let next = runner.step(&x, f, &g).and_then(|y| {
            let y = if reorth { orthonormalize(&y)? } else { y };
            let (fy, gy) = objective.value_and_grad(&y)?;
            if !fy.is_finite() {
                return Err(Error::RankDeficientProjection);
            }
            let my = stationarity_measure(model, &y, &gy, reorth)?;
            Ok((y, fy, gy, my))
        });
        match next {
            Ok((y, fy, gy, my)) => {
                x = y;
                f = fy;
                g = gy;
                measure = my;
            }
            Err(e) => {
                failure = Some(e.to_string());
                break Termination::NumericalFailure;
            }
        }
        iter += 1;
        trace.push(IterateRecord {
            iter,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            f_value: f,
            grad_norm: measure,
            principal_angle: angle(&x)?,
        });
    };

    Ok(SolverResult {
        x_final: LoadingMatrix::new(x)?,
        converged: termination == Termination::GradBelowEpsilon,
        trace,
        total_iters: iter,
        termination,
        lipschitz: runner.lipschitz,
        fallbacks: runner.fallbacks,
        failure,
    })
}
