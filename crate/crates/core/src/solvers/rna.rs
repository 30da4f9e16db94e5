//! Regularised nonlinear acceleration of a window of iterates.
//!
//! Given iterates `x_0, …, x_{K+1}` with residuals `r_j = x_{j+1} − x_j`,
//! the coefficients solve
//!
//! ```text
//! (RᵀR + λ‖RᵀR‖·I)·z = 1,    c = z / (1ᵀz)
//! ```
//!
//! and the extrapolated point is `Σ_j c_j·x_j`. Equivalently `c` minimises
//! `cᵀ(RᵀR + λ‖RᵀR‖·I)c` subject to `1ᵀc = 1`; when the regularised matrix is
//! singular (typically `λ = 0`) that bordered least-squares system is solved
//! instead, which still has a unique solution whenever the constraint is not
//! orthogonal to the null space.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{spectral_norm, Matrix};

/// Extrapolation coefficients `c` (one per residual) for the given iterates.
pub fn rna_coefficients(iterates: &[Matrix], lambda: f64) -> Result<DVector<f64>> {
    if iterates.len() < 2 {
        return Err(Error::InvalidConfig("acceleration needs at least two iterates".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("regularisation must be nonnegative, got {lambda}")));
    }
    let (rows, cols) = iterates[0].shape();
    if let Some(bad) = iterates.iter().find(|x| x.shape() != (rows, cols)) {
        return Err(Error::ShapeMismatch {
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", bad.nrows(), bad.ncols()),
        });
    }
    let k = iterates.len() - 1;
    let mut r = Matrix::zeros(rows * cols, k);
    for j in 0..k {
        let diff = &iterates[j + 1] - &iterates[j];
        r.column_mut(j).copy_from_slice(diff.as_slice());
    }
    let rtr = r.tr_mul(&r);
    let scale = spectral_norm(&rtr);
    if scale == 0.0 {
        // Every iterate coincides; any affine combination is the same point.
        return Ok(DVector::from_element(k, 1.0 / k as f64));
    }
    let mut system = rtr;
    for i in 0..k {
        system[(i, i)] += lambda * scale;
    }
    let ones = DVector::from_element(k, 1.0);
    if let Some(chol) = system.clone().cholesky() {
        let z = chol.solve(&ones);
        let total = z.sum();
        if total.is_finite() && total != 0.0 && z.iter().all(|v| v.is_finite()) {
            let c = z / total;
            if c.iter().all(|v| v.is_finite()) {
                return Ok(c);
            }
        }
    }
    // Bordered system [M 1; 1ᵀ 0]·[c; μ] = [0; 1].
    let mut kkt = Matrix::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k)).copy_from(&system);
    for i in 0..k {
        kkt[(i, k)] = 1.0;
        kkt[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt.full_piv_lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let c = sol.rows(0, k).into_owned();
    if c.iter().all(|v| v.is_finite()) {
        Ok(c)
    } else {
        Err(Error::SingularSystem)
    }
}

/// Direction `Δ = Σ_j c_j·x_j − x_0` from a window of `K + 2` iterates.
pub fn rna_extrapolate(iterates: &[Matrix], lambda: f64) -> Result<Matrix> {
    let c = rna_coefficients(iterates, lambda)?;
    let mut combo = Matrix::zeros(iterates[0].nrows(), iterates[0].ncols());
    for (cj, xj) in c.iter().zip(iterates) {
        combo += xj * *cj;
    }
    Ok(combo - &iterates[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec2(a: f64, b: f64) -> Matrix {
        Matrix::from_column_slice(2, 1, &[a, b])
    }

    #[test]
    fn fixed_point_window_gives_zero_step() {
        let x = vec2(0.3, -1.2);
        let iterates = vec![x.clone(); 6];
        let c = rna_coefficients(&iterates, 1e-8).unwrap();
        assert!(c.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert_eq!(rna_extrapolate(&iterates, 1e-8).unwrap(), Matrix::zeros(2, 1));
    }

    #[test]
    fn linear_iteration_recovers_fixed_point() {
        // x_{j+1} = 0.5·x_j from (1, 0): c = (−1, 2) and the limit 0.
        let iterates = vec![vec2(1.0, 0.0), vec2(0.5, 0.0), vec2(0.25, 0.0)];
        let c = rna_coefficients(&iterates, 0.0).unwrap();
        assert_relative_eq!(c[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(c[1], 2.0, epsilon = 1e-12);
        let delta = rna_extrapolate(&iterates, 0.0).unwrap();
        assert_relative_eq!(delta, -vec2(1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn regularised_coefficients_match_direct_formula() {
        let iterates = vec![vec2(1.0, 2.0), vec2(0.7, 1.1), vec2(0.2, 0.9), vec2(0.1, 0.3)];
        let lambda = 1e-2;
        let c = rna_coefficients(&iterates, lambda).unwrap();
        assert_relative_eq!(c.sum(), 1.0, epsilon = 1e-14);
        // Oracle: build R explicitly and invert the 3×3 regularised system.
        let r = Matrix::from_fn(2, 3, |i, j| iterates[j + 1][(i, 0)] - iterates[j][(i, 0)]);
        let rtr = r.transpose() * &r;
        let norm = rtr.clone().singular_values().max();
        let m = &rtr + Matrix::identity(3, 3) * (lambda * norm);
        let z = m.try_inverse().unwrap() * DVector::from_element(3, 1.0);
        let expect = &z / z.sum();
        assert_relative_eq!(c, expect, epsilon = 1e-12);
    }

    #[test]
    fn rejects_inconsistent_input() {
        assert!(rna_coefficients(&[vec2(1.0, 0.0)], 0.0).is_err());
        assert!(rna_coefficients(&[vec2(1.0, 0.0), vec2(0.0, 1.0)], -1.0).is_err());
        let mixed = vec![vec2(1.0, 0.0), Matrix::zeros(3, 1)];
        assert!(matches!(rna_coefficients(&mixed, 0.0), Err(Error::ShapeMismatch { .. })));
    }
}
