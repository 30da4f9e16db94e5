//! Trace and volume (determinant) inflation objectives and their gradients.
//!
//! For a data matrix `A` (`m×n`) and a loading matrix `X` (`n×p`):
//!
//! ```text
//! g_t(X) = tr(XᵀAᵀAX) / tr(XᵀX)          f_t = ln g_t
//! g_d(X) = det(XᵀAᵀAX) / det(XᵀX)        f_d = ln g_d
//! ∇f_d(X) = 2AᵀAX(XᵀAᵀAX)⁻¹ − 2X(XᵀX)⁻¹
//! ∇f_t(X) = 2AᵀAX / tr(XᵀAᵀAX) − 2X / tr(XᵀX)
//! ```
//!
//! Determinants are never formed; both log-determinants come from Cholesky
//! pivots of the `p×p` Gram matrices and the inverses are applied by
//! triangular solves.

use std::ops::Deref;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::numerics::{self, thin_svd, Matrix, SpdFactor, ThinSvd};

/// Pivot ratio of the Cholesky factor of `XᵀAᵀAX` below which `A·X` is
/// treated as rank deficient.
pub const PROJECTION_RANK_TOL: f64 = 1e-10;

/// Minimum `σ_p(X)/σ_1(X)` for a loading matrix.
pub const LOADING_RANK_TOL: f64 = 1e-12;

const MEAN_CENTER_TOL: f64 = 1e-10;

/// Data matrix `A` with lazily computed Gram matrix and thin SVD.
///
/// The caches are `OnceLock`s: initialised at most once, then shared freely
/// between threads.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    a: Matrix,
    frob_sq: f64,
    mean_centered: bool,
    gram: OnceLock<Matrix>,
    svd: OnceLock<ThinSvd>,
}

impl DataMatrix {
    pub fn new(a: Matrix) -> Result<Self> {
        numerics::validate(&a)?;
        if a.iter().all(|v| v.abs() < numerics::ZERO_ABS_TOL) {
            return Err(Error::ZeroMatrix);
        }
        Ok(Self {
            frob_sq: a.norm_squared(),
            a,
            mean_centered: false,
            gram: OnceLock::new(),
            svd: OnceLock::new(),
        })
    }

    /// Like [`DataMatrix::new`] but checks and records that the columns sum to zero.
    pub fn new_mean_centered(a: Matrix) -> Result<Self> {
        let mut data = Self::new(a)?;
        let tol = MEAN_CENTER_TOL * data.a.norm();
        for (col, sum) in data.a.row_sum().iter().enumerate() {
            if sum.abs() > tol {
                return Err(Error::NotMeanCentered { col, sum: *sum });
            }
        }
        data.mean_centered = true;
        Ok(data)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_mean_centered(&self) -> bool {
        self.mean_centered
    }

    /// `AᵀA`, computed on first use.
    pub fn gram(&self) -> &Matrix {
        self.gram.get_or_init(|| self.a.tr_mul(&self.a))
    }

    /// Thin SVD of `A`, computed on first use.
    pub fn svd(&self) -> &ThinSvd {
        self.svd
            .get_or_init(|| thin_svd(&self.a).expect("data matrix is validated nonzero"))
    }

    pub fn rank(&self) -> usize {
        self.svd().rank()
    }

    /// `AᵀA·X`, as `Aᵀ(AX)` for wide `A` and through the cached Gram otherwise.
    pub fn apply_gram(&self, x: &Matrix) -> Matrix {
        if self.a.nrows() < self.a.ncols() {
            self.a.tr_mul(&(&self.a * x))
        } else {
            self.gram() * x
        }
    }

    /// `XᵀAᵀAX` together with `AᵀAX`.
    fn projected_gram(&self, x: &Matrix) -> (Matrix, Matrix) {
        let ata_x = self.apply_gram(x);
        let mut g = x.tr_mul(&ata_x);
        symmetrize(&mut g);
        (g, ata_x)
    }
}

fn symmetrize(g: &mut Matrix) {
    let t = g.transpose();
    *g += t;
    *g *= 0.5;
}

/// Full-column-rank `n×p` candidate `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    x: Matrix,
}

impl LoadingMatrix {
    pub fn new(x: Matrix) -> Result<Self> {
        numerics::validate(&x)?;
        if x.ncols() > x.nrows() {
            return Err(Error::NotFullColumnRank);
        }
        let sv = x.clone().singular_values();
        if !(sv.min() > LOADING_RANK_TOL * sv.max()) {
            return Err(Error::NotFullColumnRank);
        }
        Ok(Self { x })
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn into_inner(self) -> Matrix {
        self.x
    }
}

impl Deref for LoadingMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.x
    }
}

/// Trace inflation `tr(XᵀAᵀAX) / tr(XᵀX) = ‖AX‖_F² / ‖X‖_F²`.
pub fn g_trace(a: &DataMatrix, x: &Matrix) -> f64 {
    (a.matrix() * x).norm_squared() / x.norm_squared()
}

/// `ln g_trace`.
pub fn f_trace(a: &DataMatrix, x: &Matrix) -> Result<f64> {
    trace_value_and_grad(a, x).map(|(f, _)| f)
}

fn loading_factor(x: &Matrix) -> Result<SpdFactor> {
    let mut xx = x.tr_mul(x);
    symmetrize(&mut xx);
    let f = SpdFactor::new(&xx).map_err(|_| Error::NotFullColumnRank)?;
    if f.pivot_ratio() < LOADING_RANK_TOL {
        return Err(Error::NotFullColumnRank);
    }
    Ok(f)
}

/// Factors `XᵀAᵀAX`, rejecting it when its pivots are small relative to
/// each other or to the attainable scale `‖A‖_F²·‖X‖²`.
fn projection_factor(a: &DataMatrix, g: &Matrix, xx: &SpdFactor) -> Result<SpdFactor> {
    let f = SpdFactor::new(g).map_err(|_| Error::RankDeficientProjection)?;
    let scale = a.frob_sq.sqrt() * xx.max_pivot();
    if f.pivot_ratio() < PROJECTION_RANK_TOL || f.min_pivot() < PROJECTION_RANK_TOL * scale {
        return Err(Error::RankDeficientProjection);
    }
    Ok(f)
}

/// Log volume inflation `ln det(XᵀAᵀAX) − ln det(XᵀX)`.
pub fn f_det(a: &DataMatrix, x: &Matrix) -> Result<f64> {
    let xx = loading_factor(x)?;
    let (g, _) = a.projected_gram(x);
    let pp = projection_factor(a, &g, &xx)?;
    Ok(pp.logdet() - xx.logdet())
}

/// Volume inflation `det(XᵀAᵀAX) / det(XᵀX)`.
pub fn g_det(a: &DataMatrix, x: &Matrix) -> Result<f64> {
    f_det(a, x).map(f64::exp)
}

/// `f_d` and `∇f_d` sharing one evaluation of `AᵀAX`.
pub fn det_value_and_grad(a: &DataMatrix, x: &Matrix) -> Result<(f64, Matrix)> {
    let xx = loading_factor(x)?;
    let (g, ata_x) = a.projected_gram(x);
    let pp = projection_factor(a, &g, &xx)?;
    let grad = pp.solve_right(&ata_x) * 2.0 - xx.solve_right(x) * 2.0;
    Ok((pp.logdet() - xx.logdet(), grad))
}

/// `∇f_d(X) = 2AᵀAX(XᵀAᵀAX)⁻¹ − 2X(XᵀX)⁻¹`, the ascent direction of `f_d`.
pub fn grad_f_det(a: &DataMatrix, x: &Matrix) -> Result<Matrix> {
    det_value_and_grad(a, x).map(|(_, g)| g)
}

/// `f_t` and `∇f_t` sharing one evaluation of `AᵀAX`.
pub fn trace_value_and_grad(a: &DataMatrix, x: &Matrix) -> Result<(f64, Matrix)> {
    let ata_x = a.apply_gram(x);
    let num = x.dot(&ata_x);
    if num < 1e-300 {
        return Err(Error::ZeroProjection);
    }
    let den = x.norm_squared();
    let grad = ata_x * (2.0 / num) - x * (2.0 / den);
    Ok((num.ln() - den.ln(), grad))
}

/// `∇f_t(X) = 2AᵀAX / tr(XᵀAᵀAX) − 2X / tr(XᵀX)`.
pub fn grad_f_trace(a: &DataMatrix, x: &Matrix) -> Result<Matrix> {
    trace_value_and_grad(a, x).map(|(_, g)| g)
}

/// A smooth function on `n×p` matrices, as seen by the solvers.
pub trait SmoothObjective {
    fn value(&self, x: &Matrix) -> Result<f64>;
    fn value_and_grad(&self, x: &Matrix) -> Result<(f64, Matrix)>;
}

/// Which of the two models a solver maximises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Determinant,
    Trace,
}

/// A model bound to its data matrix.
#[derive(Debug, Clone, Copy)]
pub struct ModelObjective<'a> {
    pub model: Model,
    pub data: &'a DataMatrix,
}

impl<'a> ModelObjective<'a> {
    pub fn determinant(data: &'a DataMatrix) -> Self {
        Self { model: Model::Determinant, data }
    }

    pub fn trace(data: &'a DataMatrix) -> Self {
        Self { model: Model::Trace, data }
    }
}

impl SmoothObjective for ModelObjective<'_> {
    fn value(&self, x: &Matrix) -> Result<f64> {
        match self.model {
            Model::Determinant => f_det(self.data, x),
            Model::Trace => f_trace(self.data, x),
        }
    }

    fn value_and_grad(&self, x: &Matrix) -> Result<(f64, Matrix)> {
        match self.model {
            Model::Determinant => det_value_and_grad(self.data, x),
            Model::Trace => trace_value_and_grad(self.data, x),
        }
    }
}
