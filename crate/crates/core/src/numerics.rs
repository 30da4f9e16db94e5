//! Dense linear-algebra primitives shared by the rest of the crate.
//!
//! Everything here is a thin, validated layer over `nalgebra`: a thin QR with
//! a fixed sign convention, a rank-revealing thin SVD, log-determinants via
//! Cholesky pivots and a plain-text matrix format.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, Dyn, SVD};

use crate::error::{Error, Result};

/// Dense real matrix. Storage is column-major (nalgebra's layout).
pub type Matrix = DMatrix<f64>;

/// Relative threshold on `|R_jj| / ‖M‖_F` below which QR reports rank deficiency.
pub const QR_RANK_TOL: f64 = 1e-12;

/// Relative factor for numerical rank in [`thin_svd`]: `σ_i > tol · σ_1 · max(m, n)`.
pub const SVD_RANK_TOL: f64 = 1e-12;

/// Entries below this magnitude are treated as exactly zero in [`thin_svd`].
pub const ZERO_ABS_TOL: f64 = 1e-300;

const SYMMETRY_TOL: f64 = 1e-12;

/// Rejects empty matrices and matrices holding NaN or infinity.
pub fn validate(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Builds a matrix from row-major data after validation.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{} entries", rows * cols),
            found: format!("{} entries", data.len()),
        });
    }
    let m = Matrix::from_row_slice(rows, cols, data);
    validate(&m)?;
    Ok(m)
}

pub(crate) fn shape(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

pub(crate) fn ensure_shape(m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{rows}x{cols}"),
            found: shape(m),
        });
    }
    Ok(())
}

/// Thin QR factorisation `M = Q·R` of an `n×p` matrix with `p ≤ n`.
///
/// The diagonal of `R` is made nonnegative so that `Q` is unique.
pub fn thin_qr(m: &Matrix) -> Result<(Matrix, Matrix)> {
    let (n, p) = m.shape();
    if p > n {
        return Err(Error::ShapeMismatch {
            expected: "rows >= cols".into(),
            found: shape(m),
        });
    }
    let scale = m.norm();
    if scale == 0.0 {
        return Err(Error::RankDeficient);
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..p {
        let d = r[(j, j)];
        if d.abs() < QR_RANK_TOL * scale {
            return Err(Error::RankDeficient);
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((q, r))
}

/// Orthonormal basis of `range(M)` (the `Q` of [`thin_qr`]).
pub fn orthonormalize(m: &Matrix) -> Result<Matrix> {
    thin_qr(m).map(|(q, _)| q)
}

/// Thin singular value decomposition truncated at numerical rank.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `m×k`, orthonormal columns.
    pub left: Matrix,
    /// `σ_1 ≥ … ≥ σ_k > 0`.
    pub singular_values: Vec<f64>,
    /// `n×k`, orthonormal columns.
    pub right: Matrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Leading `p` right singular vectors.
    pub fn leading_right(&self, p: usize) -> Matrix {
        self.right.columns(0, p.min(self.rank())).into_owned()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.left.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.right.transpose()
    }
}

/// Thin SVD with numerical rank `k = #{σ_i > 1e-12·σ_1·max(m, n)}`.
pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    if m.iter().all(|v| v.abs() < ZERO_ABS_TOL) {
        return Err(Error::ZeroMatrix);
    }
    let (rows, cols) = m.shape();
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("left factor requested");
    let v_t = svd.v_t.expect("right factor requested");
    let sigma = svd.singular_values;
    let cutoff = SVD_RANK_TOL * sigma[0] * rows.max(cols) as f64;
    let k = sigma.iter().take_while(|&&s| s > cutoff).count();
    Ok(ThinSvd {
        left: u.columns(0, k).into_owned(),
        singular_values: sigma.iter().take(k).copied().collect(),
        right: v_t.rows(0, k).transpose(),
    })
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    // Work on the narrower side; the nonzero singular values coincide.
    let sv = if m.nrows() >= m.ncols() {
        m.clone().singular_values()
    } else {
        m.transpose().singular_values()
    };
    sv.max()
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(g: &Matrix) -> Result<Self> {
        let (r, c) = g.shape();
        if r != c {
            return Err(Error::ShapeMismatch {
                expected: "square".into(),
                found: shape(g),
            });
        }
        let scale = g.amax();
        if (g - g.transpose()).amax() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric);
        }
        let chol = Cholesky::new(g.clone()).ok_or(Error::NotPositiveDefinite)?;
        if chol.l_dirty().diagonal().iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { chol })
    }

    /// `ln det G = 2 Σ ln L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Smallest over largest Cholesky pivot.
    pub fn pivot_ratio(&self) -> f64 {
        self.min_pivot() / self.max_pivot()
    }

    /// Smallest diagonal entry of the Cholesky factor.
    pub fn min_pivot(&self) -> f64 {
        self.chol.l_dirty().diagonal().min()
    }

    pub fn max_pivot(&self) -> f64 {
        self.chol.l_dirty().diagonal().max()
    }

    /// Solves `G·Z = B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        self.chol.solve(b)
    }

    /// Returns `B·G⁻¹` for symmetric `G`.
    pub fn solve_right(&self, b: &Matrix) -> Matrix {
        self.chol.solve(&b.transpose()).transpose()
    }
}

/// `ln det G` for symmetric positive definite `G`, via Cholesky pivots.
pub fn logdet_spd(g: &Matrix) -> Result<f64> {
    SpdFactor::new(g).map(|f| f.logdet())
}

/// `max |QᵀQ − I|`.
pub fn orthonormality_error(q: &Matrix) -> f64 {
    let p = q.ncols();
    (q.tr_mul(q) - Matrix::identity(p, p)).amax()
}

/// Writes the text format: a `rows cols` line followed by one line per row.
pub fn write_matrix<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads the text format written by [`write_matrix`].
pub fn read_matrix<R: BufRead>(r: R) -> Result<Matrix> {
    let mut lines = r
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (ln, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: ln, msg: format!("bad header: {e}") })?;
    let &[rows, cols] = dims.as_slice() else {
        return Err(Error::Parse {
            line: ln,
            msg: "header must be `rows cols`".into(),
        });
    };
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, line) = lines.next().ok_or(Error::Parse {
            line: ln + 1,
            msg: format!("expected {rows} rows"),
        })?;
        let line = line?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: ln,
                msg: format!("not a number: {tok:?}"),
            })?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected {cols} values, found {}", data.len() - before),
            });
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse {
            line: ln,
            msg: "trailing data after last row".into(),
        });
    }
    from_rows(rows, cols, &data)
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let f = std::fs::File::open(path)?;
    read_matrix(std::io::BufReader::new(f))
}
