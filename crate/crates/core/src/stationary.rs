//! Stationary points of `f_d`: multiplicities, values, classification.
//!
//! Singular values of `A` are grouped into distinct values `ς_1 > … > ς_ρ`
//! with multiplicities `m(i)`, and `V_i` denotes the right singular vectors of
//! group `i`. A loading `X` is described by its profile `m(X, i)`, the
//! dimension of `range(X) ∩ range(V_i)`. `X` is stationary exactly when
//! `range(X)` splits along the groups, i.e. `Σ m(X, i) = p`, and then
//! `f_d(X) = Σ 2·m(X, i)·ln ς_i`.
//!
//! Indices into the spectrum are 0-based throughout.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{orthonormalize, thin_svd, Matrix};
use crate::objective::{det_value_and_grad, DataMatrix};

pub const DEFAULT_COALESCE_TOL: f64 = 1e-8;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;

/// The gradient test is decisive only outside `[grad_tol, GRAD_SLACK·grad_tol]`.
const GRAD_SLACK: f64 = 100.0;

/// Distinct nonzero singular values and their multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEnumeration {
    pub distinct_values: Vec<f64>,
    pub multiplicities: Vec<usize>,
    groups: Vec<Range<usize>>,
}

impl SpectrumEnumeration {
    /// Number of distinct values `ρ`.
    pub fn len(&self) -> usize {
        self.distinct_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct_values.is_empty()
    }

    /// Rank `k = Σ m(i)`.
    pub fn rank(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Positions of group `i` in the sorted list of singular values.
    pub fn group(&self, i: usize) -> Range<usize> {
        self.groups[i].clone()
    }
}

/// Groups a non-increasing positive list, merging neighbours that differ by
/// at most `coalesce_tol·σ_1`. Each group is represented by its mean.
pub fn enumerate_spectrum(singular_values: &[f64], coalesce_tol: f64) -> Result<SpectrumEnumeration> {
    let Some(&first) = singular_values.first() else {
        return Err(Error::EmptySpectrum);
    };
    if singular_values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidModelParams("singular values must be positive and finite".into()));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidModelParams("singular values must be non-increasing".into()));
    }
    let tol = coalesce_tol * first;
    let mut groups = vec![];
    let mut begin = 0;
    for j in 1..=singular_values.len() {
        if j == singular_values.len() || singular_values[j - 1] - singular_values[j] > tol {
            groups.push(begin..j);
            begin = j;
        }
    }
    let distinct_values = groups
        .iter()
        .map(|g| singular_values[g.clone()].iter().sum::<f64>() / g.len() as f64)
        .collect();
    let multiplicities = groups.iter().map(|g| g.len()).collect();
    Ok(SpectrumEnumeration {
        distinct_values,
        multiplicities,
        groups,
    })
}

/// Columns of a `p`-leading right singular factor that belong to group `i`:
/// `min(m(i), max(0, p − Σ_{ℓ<i} m(ℓ)))`.
pub fn leading_multiplicity(spec: &SpectrumEnumeration, i: usize, p: usize) -> usize {
    let before: usize = spec.multiplicities[..i].iter().sum();
    spec.multiplicities[i].min(p.saturating_sub(before))
}

/// Columns of a `p`-trailing right singular factor that belong to group `i`:
/// `min(m(i), max(0, p − Σ_{ℓ>i} m(ℓ)))`.
pub fn trailing_multiplicity(spec: &SpectrumEnumeration, i: usize, p: usize) -> usize {
    let after: usize = spec.multiplicities[i + 1..].iter().sum();
    spec.multiplicities[i].min(p.saturating_sub(after))
}

pub fn leading_profile(spec: &SpectrumEnumeration, p: usize) -> MultiplicityProfile {
    MultiplicityProfile {
        counts: (0..spec.len()).map(|i| leading_multiplicity(spec, i, p)).collect(),
    }
}

pub fn trailing_profile(spec: &SpectrumEnumeration, p: usize) -> MultiplicityProfile {
    MultiplicityProfile {
        counts: (0..spec.len()).map(|i| trailing_multiplicity(spec, i, p)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicityProfile {
    pub counts: Vec<usize>,
}

impl MultiplicityProfile {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Thresholds for the numerical versions of the exact-arithmetic tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative gap below which singular values are treated as equal.
    pub coalesce_tol: f64,
    /// Principal-angle sine below which a direction counts as contained.
    pub rank_tol: f64,
    /// `‖∇f_d‖_F` below which the gradient test reports stationarity.
    pub grad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            coalesce_tol: DEFAULT_COALESCE_TOL,
            rank_tol: DEFAULT_RANK_TOL,
            grad_tol: DEFAULT_GRAD_TOL,
        }
    }
}

/// Spectrum of `A` with the right singular vectors grouped accordingly.
#[derive(Debug, Clone)]
pub struct GroupedSpectrum {
    pub spectrum: SpectrumEnumeration,
    /// `n×k` right singular vectors, in the order of `spectrum`.
    pub right: Matrix,
}

impl GroupedSpectrum {
    pub fn of(a: &DataMatrix, coalesce_tol: f64) -> Result<Self> {
        let svd = a.svd();
        Ok(Self {
            spectrum: enumerate_spectrum(&svd.singular_values, coalesce_tol)?,
            right: svd.right.clone(),
        })
    }

    /// `V_i`, the right singular vectors of group `i`.
    pub fn block(&self, i: usize) -> Matrix {
        let g = self.spectrum.group(i);
        self.right.columns(g.start, g.len()).into_owned()
    }
}

fn count_above(values: impl Iterator<Item = f64>, tol: f64) -> usize {
    values.filter(|&s| s > tol).count()
}

/// Singular values of `M`, padded with zeros to `M.ncols()` entries.
fn column_singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![0.0; m.ncols()];
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.resize(m.ncols(), 0.0);
    s
}

/// Per-group containment and projection dimensions of `range(Q)`.
struct GroupGeometry {
    /// `dim(range(X) ∩ range(V_i))`.
    contained: Vec<usize>,
    /// `dim Π_{V_i} range(X) = rank(V_iᵀQ)`.
    projected: Vec<usize>,
}

fn group_geometry(grouped: &GroupedSpectrum, q: &Matrix, rank_tol: f64) -> GroupGeometry {
    let p = q.ncols();
    let mut contained = vec![];
    let mut projected = vec![];
    for i in 0..grouped.spectrum.len() {
        let v = grouped.block(i);
        let vq = v.tr_mul(q);
        projected.push(count_above(column_singular_values(&vq).into_iter(), rank_tol));
        // Singular values of (I − V_iV_iᵀ)Q are the sines of the principal
        // angles; zero sines are directions lying in range(V_i).
        let residual = q - &v * &vq;
        contained.push(p - count_above(column_singular_values(&residual).into_iter(), rank_tol));
    }
    GroupGeometry { contained, projected }
}

fn checked_basis(a: &DataMatrix, x: &Matrix) -> Result<Matrix> {
    if x.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", a.ncols()),
            found: format!("{} rows", x.nrows()),
        });
    }
    let q = orthonormalize(x).map_err(|_| Error::NotFullColumnRank)?;
    // Rejects rank(AX) < p.
    det_value_and_grad(a, &q)?;
    Ok(q)
}

/// `m(X, i) = dim(range(X) ∩ range(V_i))` for every distinct value.
pub fn multiplicity_profile(a: &DataMatrix, x: &Matrix, coalesce_tol: f64, rank_tol: f64) -> Result<MultiplicityProfile> {
    let q = checked_basis(a, x)?;
    let grouped = GroupedSpectrum::of(a, coalesce_tol)?;
    Ok(MultiplicityProfile {
        counts: group_geometry(&grouped, &q, rank_tol).contained,
    })
}

/// Outcome of both stationarity tests.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityCheck {
    pub stationary: bool,
    pub profile: MultiplicityProfile,
    /// `‖∇f_d(Q)‖_F` at the orthonormalised loading.
    pub grad_norm: f64,
}

/// Geometric test (`m(X, i) = dim Π_{V_i} range(X)` for all `i` and
/// `Σ m(X, i) = p`) cross-checked against `‖∇f_d‖_F < grad_tol`.
///
/// The gradient is evaluated at the orthonormalised loading, which makes the
/// norm independent of the basis. A clear disagreement, meaning the gradient
/// norm lies outside `[grad_tol, 100·grad_tol]` on the wrong side, is an error.
pub fn stationarity_check(a: &DataMatrix, x: &Matrix, tol: &Tolerances) -> Result<StationarityCheck> {
    let q = checked_basis(a, x)?;
    let grouped = GroupedSpectrum::of(a, tol.coalesce_tol)?;
    let geo = group_geometry(&grouped, &q, tol.rank_tol);
    let profile = MultiplicityProfile { counts: geo.contained };
    let geometric = profile.total() == q.ncols() && profile.counts == geo.projected;
    let grad_norm = det_value_and_grad(a, &q)?.1.norm();
    let gradient_says_yes = grad_norm < tol.grad_tol;
    let gradient_says_no = grad_norm > GRAD_SLACK * tol.grad_tol;
    if (geometric && gradient_says_no) || (!geometric && gradient_says_yes) {
        return Err(Error::InconsistentStationarityTests { grad_norm });
    }
    Ok(StationarityCheck {
        stationary: geometric,
        profile,
        grad_norm,
    })
}

pub fn is_stationary(a: &DataMatrix, x: &Matrix, tol: &Tolerances) -> Result<bool> {
    stationarity_check(a, x, tol).map(|c| c.stationary)
}

/// `Σ 2·m(X, i)·ln ς_i`.
pub fn stationary_value(spec: &SpectrumEnumeration, profile: &MultiplicityProfile, p: usize) -> Result<f64> {
    if profile.counts.len() != spec.len() || profile.total() != p {
        return Err(Error::ProfileSumMismatch { sum: profile.total(), p });
    }
    Ok(profile
        .counts
        .iter()
        .zip(&spec.distinct_values)
        .map(|(&m, s)| 2.0 * m as f64 * s.ln())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    GlobalMax,
    GlobalMin,
    Saddle,
    NotStationary,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::GlobalMax => "GlobalMax",
            Verdict::GlobalMin => "GlobalMin",
            Verdict::Saddle => "Saddle",
            Verdict::NotStationary => "NotStationary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryClass {
    pub verdict: Verdict,
    pub profile: MultiplicityProfile,
    /// `f_d` at the point, for stationary points.
    pub value: Option<f64>,
    pub grad_norm: f64,
}

pub fn classify(a: &DataMatrix, x: &Matrix) -> Result<StationaryClass> {
    classify_with(a, x, &Tolerances::default())
}

/// Global max iff the profile equals the leading profile, global min iff
/// `rank(A) = n` and it equals the trailing profile, saddle otherwise.
pub fn classify_with(a: &DataMatrix, x: &Matrix, tol: &Tolerances) -> Result<StationaryClass> {
    let check = stationarity_check(a, x, tol)?;
    if !check.stationary {
        return Ok(StationaryClass {
            verdict: Verdict::NotStationary,
            profile: check.profile,
            value: None,
            grad_norm: check.grad_norm,
        });
    }
    let p = x.ncols();
    let spec = enumerate_spectrum(&a.svd().singular_values, tol.coalesce_tol)?;
    let verdict = if check.profile == leading_profile(&spec, p) {
        Verdict::GlobalMax
    } else if spec.rank() == a.ncols() && check.profile == trailing_profile(&spec, p) {
        Verdict::GlobalMin
    } else {
        Verdict::Saddle
    };
    Ok(StationaryClass {
        verdict,
        value: Some(stationary_value(&spec, &check.profile, p)?),
        profile: check.profile,
        grad_norm: check.grad_norm,
    })
}

/// `θ ↦ X(θ)`: the base with one column rotated towards a unit vector
/// orthogonal to it.
#[derive(Debug, Clone)]
pub struct RotationCurve {
    pub base: Matrix,
    pub column: usize,
    pub partner: Matrix,
    /// Singular value attached to the rotated column.
    pub sigma_column: f64,
    /// Singular value attached to the partner (0 for a null direction).
    pub sigma_partner: f64,
    /// Closed-form `φ''(0)` of `φ(θ) = f_d(X(θ))`.
    pub curvature: f64,
}

impl RotationCurve {
    fn new(base: Matrix, column: usize, partner: Matrix, sigma_column: f64, sigma_partner: f64) -> Self {
        let curvature = 2.0 * (sigma_partner.powi(2) - sigma_column.powi(2)) / sigma_column.powi(2);
        Self {
            base,
            column,
            partner,
            sigma_column,
            sigma_partner,
            curvature,
        }
    }

    pub fn point(&self, theta: f64) -> Matrix {
        let mut x = self.base.clone();
        let rotated = self.base.column(self.column) * theta.cos() + &self.partner * theta.sin();
        x.set_column(self.column, &rotated);
        x
    }

    pub fn value(&self, a: &DataMatrix, theta: f64) -> Result<f64> {
        crate::objective::f_det(a, &self.point(theta))
    }
}

/// Curves of negative and positive curvature through a saddle.
#[derive(Debug, Clone)]
pub struct SaddleProbe {
    pub descent: RotationCurve,
    pub ascent: RotationCurve,
}

/// A direction of group `i` (or the null space when `i` is `None`) orthogonal to `q`.
fn free_direction(grouped: &GroupedSpectrum, i: Option<usize>, q: &Matrix, rank_tol: f64) -> Option<Matrix> {
    let candidates = match i {
        Some(i) => grouped.block(i),
        None => Matrix::identity(q.nrows(), q.nrows()),
    };
    // Remove range(X) and, for the null space, range(V_k).
    let mut residual = &candidates - q * q.tr_mul(&candidates);
    if i.is_none() {
        residual -= &grouped.right * grouped.right.tr_mul(&residual);
    }
    let (j, norm) = residual
        .column_iter()
        .map(|c| c.norm())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if norm <= rank_tol.sqrt() {
        return None;
    }
    let mut v = residual.column(j).into_owned() / norm;
    // One more pass keeps the partner orthogonal to working precision.
    v -= q * q.tr_mul(&v);
    if i.is_none() {
        v -= &grouped.right * grouped.right.tr_mul(&v);
    }
    let n = v.norm();
    Some(Matrix::from_column_slice(v.nrows(), 1, (v / n).as_slice()))
}

/// Builds both rotation curves at a saddle.
///
/// The stationary loading is rewritten in a basis of singular vectors ordered
/// by decreasing singular value. The descent curve rotates the first column
/// (`σ_{j1}`) towards the largest singular direction below it that is not in
/// `X`, falling back to the null space of `A`; the ascent curve rotates the
/// last column (`σ_{jp}`) towards the smallest singular direction above it.
pub fn saddle_probe(a: &DataMatrix, x: &Matrix) -> Result<SaddleProbe> {
    saddle_probe_with(a, x, &Tolerances::default())
}

pub fn saddle_probe_with(a: &DataMatrix, x: &Matrix, tol: &Tolerances) -> Result<SaddleProbe> {
    let class = classify_with(a, x, tol)?;
    if class.verdict != Verdict::Saddle {
        return Err(Error::NotASaddle(format!("point classifies as {}", class.verdict.as_str())));
    }
    let q = checked_basis(a, x)?;
    let grouped = GroupedSpectrum::of(a, tol.coalesce_tol)?;
    let spec = &grouped.spectrum;

    // Canonical basis: for each group, the directions of range(Q) inside V_i.
    let mut columns: Vec<Matrix> = vec![];
    let mut sigmas = vec![];
    for (i, &m) in class.profile.counts.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let v = grouped.block(i);
        let svd = thin_svd(&v.tr_mul(&q)).map_err(|_| Error::NotASaddle("empty group block".into()))?;
        for c in 0..m.min(svd.rank()) {
            let dir = &v * svd.left.column(c);
            columns.push(Matrix::from_column_slice(dir.nrows(), 1, dir.as_slice()));
            sigmas.push(spec.distinct_values[i]);
        }
    }
    let p = q.ncols();
    if columns.len() != p {
        return Err(Error::NotASaddle("could not rebuild a singular basis of the loading".into()));
    }
    let refs: Vec<_> = columns.iter().map(|c| c.column(0)).collect();
    let base = Matrix::from_columns(&refs);
    let group_of = |s: f64| spec.distinct_values.iter().position(|&d| d == s).expect("value from spectrum");
    let top = group_of(sigmas[0]);
    let bottom = group_of(sigmas[p - 1]);

    // Groups are sorted by decreasing value.
    let below = (top + 1..spec.len())
        .find_map(|i| free_direction(&grouped, Some(i), &q, tol.rank_tol).map(|v| (v, spec.distinct_values[i])))
        .or_else(|| free_direction(&grouped, None, &q, tol.rank_tol).map(|v| (v, 0.0)));
    let above = (0..bottom)
        .rev()
        .find_map(|i| free_direction(&grouped, Some(i), &q, tol.rank_tol).map(|v| (v, spec.distinct_values[i])));

    let (Some((eta_dir, sigma_eta)), Some((mu_dir, sigma_mu))) = (below, above) else {
        return Err(Error::NotASaddle("no strict curvature direction".into()));
    };
    let descent = RotationCurve::new(base.clone(), 0, eta_dir, sigmas[0], sigma_eta);
    let ascent = RotationCurve::new(base, p - 1, mu_dir, sigmas[p - 1], sigma_mu);
    if !(descent.curvature < 0.0 && ascent.curvature > 0.0) {
        return Err(Error::NotASaddle("curvature formula vanishes".into()));
    }
    Ok(SaddleProbe { descent, ascent })
}

/// Leading singular triplets recovered from a maximiser of `f_d`.
#[derive(Debug, Clone)]
pub struct RecoveredSvd {
    /// `m×p`.
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    /// `n×p`.
    pub v: Matrix,
}

/// Thin SVD of the `m×p` matrix `A·X̃`, with `X̃` the orthonormalised
/// maximiser; `V_p = X̃·Ṽ`.
pub fn recover_svd(a: &DataMatrix, x_opt: &Matrix) -> Result<RecoveredSvd> {
    let q = checked_basis(a, x_opt)?;
    let p = q.ncols();
    let svd = thin_svd(&(a.matrix() * &q)).map_err(|_| Error::RankDeficientProjection)?;
    if svd.rank() < p {
        return Err(Error::RankDeficientProjection);
    }
    Ok(RecoveredSvd {
        v: &q * &svd.right,
        u: svd.left,
        singular_values: svd.singular_values,
    })
}

/// Classification summary as written by the command line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub profile: Vec<usize>,
    pub leading_profile: Vec<usize>,
    pub trailing_profile: Vec<usize>,
    pub distinct_singular_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descent_curvature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ascent_curvature: Option<f64>,
}

impl ClassificationReport {
    pub fn build(a: &DataMatrix, x: &Matrix, tol: &Tolerances) -> Result<Self> {
        let class = classify_with(a, x, tol)?;
        let spec = enumerate_spectrum(&a.svd().singular_values, tol.coalesce_tol)?;
        let p = x.ncols();
        let probe = match class.verdict {
            Verdict::Saddle => Some(saddle_probe_with(a, x, tol)?),
            _ => None,
        };
        Ok(Self {
            verdict: class.verdict,
            profile: class.profile.counts,
            leading_profile: leading_profile(&spec, p).counts,
            trailing_profile: trailing_profile(&spec, p).counts,
            distinct_singular_values: spec.distinct_values,
            value: class.value,
            grad_norm: class.grad_norm,
            descent_curvature: probe.as_ref().map(|pr| pr.descent.curvature),
            ascent_curvature: probe.as_ref().map(|pr| pr.ascent.curvature),
        })
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report fields are plain values")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::from_rows;
    use crate::objective::{f_det, LoadingMatrix};
    use crate::randgen::{haar_stiefel, random_gl, rng_from_seed, synthesize, RandomMatrixSpec, SpectrumModel};
    use crate::solvers::{run, SolverConfig, Variant};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn diag(values: &[f64]) -> DataMatrix {
        DataMatrix::new(Matrix::from_diagonal(&DVector::from_row_slice(values))).unwrap()
    }

    /// Loading made of coordinate vectors `e_j`.
    fn coords(n: usize, cols: &[usize]) -> Matrix {
        let mut x = Matrix::zeros(n, cols.len());
        for (c, &j) in cols.iter().enumerate() {
            x[(j, c)] = 1.0;
        }
        x
    }

    fn spectrum(values: &[f64]) -> SpectrumEnumeration {
        enumerate_spectrum(values, DEFAULT_COALESCE_TOL).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let s = spectrum(&[5.0, 5.0, 3.0, 3.0, 3.0]);
        assert_eq!(s.distinct_values, vec![5.0, 3.0]);
        assert_eq!(s.multiplicities, vec![2, 3]);
        assert_eq!(s.rank(), 5);
        assert_eq!(s.group(1), 2..5);
        let s = spectrum(&[3.0, 2.0, 1.0]);
        assert_eq!(s.multiplicities, vec![1, 1, 1]);
        let s = spectrum(&[5.0 + 1e-12, 5.0, 4.0]);
        assert_eq!(s.multiplicities, vec![2, 1]);
        assert_relative_eq!(s.distinct_values[0], 5.0 + 0.5e-12, max_relative = 1e-15);
    }

    #[test]
    fn enumeration_rejects_bad_input() {
        assert!(matches!(enumerate_spectrum(&[], 1e-8), Err(Error::EmptySpectrum)));
        assert!(enumerate_spectrum(&[1.0, 2.0], 1e-8).is_err());
        assert!(enumerate_spectrum(&[1.0, 0.0], 1e-8).is_err());
    }

    #[test]
    fn leading_and_trailing_multiplicities() {
        let s = spectrum(&[5.0, 5.0, 3.0, 3.0, 3.0]);
        assert_eq!(leading_profile(&s, 3).counts, vec![2, 1]);
        assert_eq!(trailing_profile(&s, 3).counts, vec![0, 3]);
        let d = spectrum(&[3.0, 2.0, 1.0]);
        assert_eq!(leading_profile(&d, 2).counts, vec![1, 1, 0]);
        assert_eq!(trailing_profile(&d, 2).counts, vec![0, 1, 1]);
        for s in [&s, &d] {
            let k = s.rank();
            assert_eq!(leading_profile(s, k).counts, s.multiplicities);
            assert_eq!(trailing_profile(s, k).counts, s.multiplicities);
        }
    }

    #[test]
    fn profile_examples() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let prof = |x: &Matrix| multiplicity_profile(&a, x, DEFAULT_COALESCE_TOL, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(prof(&coords(3, &[0, 2])).counts, vec![1, 0, 1]);
        assert_eq!(prof(&coords(3, &[0, 1])).counts, leading_profile(&spectrum(&[3.0, 2.0, 1.0]), 2).counts);

        // Any basis of the repeated block counts twice.
        let b = diag(&[4.0, 4.0, 1.0]);
        let c = 0.6;
        let s = 0.8;
        let rotated = from_rows(3, 2, &[c, -s, s, c, 0.0, 0.0]).unwrap();
        let p = multiplicity_profile(&b, &rotated, DEFAULT_COALESCE_TOL, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.counts, vec![2, 0]);
    }

    #[test]
    fn stationarity_examples() {
        let tol = Tolerances::default();
        let svals = [5.0, 4.0, 3.0, 2.0, 1.0];
        let inst = synthesize(&RandomMatrixSpec::new(9, 5, 3, SpectrumModel::Explicit(svals.to_vec()))).unwrap();
        let v = inst.right_factor.clone();
        let pick = Matrix::from_columns(&[v.column(1), v.column(3), v.column(4)]);
        assert!(is_stationary(&inst.a, &pick, &tol).unwrap());

        let mixed = Matrix::from_columns(&[(v.column(0) + v.column(1)).as_view(), v.column(2)]);
        let check = stationarity_check(&inst.a, &mixed, &tol).unwrap();
        assert!(!check.stationary);
        assert!(check.grad_norm > 1e-3);

        let mut rng = rng_from_seed(2);
        let vp = inst.ground_truth_vp(3);
        let theta = random_gl(3, 20.0, &mut rng);
        assert!(is_stationary(&inst.a, &(vp * theta), &tol).unwrap());
    }

    #[test]
    fn stationary_values() {
        let s = spectrum(&[3.0, 2.0, 1.0]);
        let v = stationary_value(&s, &MultiplicityProfile { counts: vec![1, 0, 1] }, 2).unwrap();
        assert_relative_eq!(v, 2.19722, epsilon = 1e-5);
        let v = stationary_value(&s, &leading_profile(&s, 2), 2).unwrap();
        assert_relative_eq!(v, 3.58352, epsilon = 1e-5);
        let bad = stationary_value(&s, &MultiplicityProfile { counts: vec![1, 1, 1] }, 2);
        assert!(matches!(bad, Err(Error::ProfileSumMismatch { sum: 3, p: 2 })));

        let a = diag(&[3.0, 2.0, 1.0]);
        let x = coords(3, &[0, 2]);
        let class = classify(&a, &x).unwrap();
        assert!((class.value.unwrap() - f_det(&a, &x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn classification_examples() {
        let a = diag(&[3.0, 2.0, 1.0]);
        assert_eq!(classify(&a, &coords(3, &[0, 1])).unwrap().verdict, Verdict::GlobalMax);
        assert_eq!(classify(&a, &coords(3, &[1, 2])).unwrap().verdict, Verdict::GlobalMin);
        assert_eq!(classify(&a, &coords(3, &[0, 2])).unwrap().verdict, Verdict::Saddle);
        let s = 0.5f64.sqrt();
        let tilted = from_rows(3, 1, &[s, s, 0.0]).unwrap();
        assert_eq!(classify(&a, &tilted).unwrap().verdict, Verdict::NotStationary);

        // Without full column rank there is no global minimiser.
        let wide = DataMatrix::new(from_rows(2, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap()).unwrap();
        assert_eq!(classify(&wide, &coords(3, &[1])).unwrap().verdict, Verdict::Saddle);
    }

    #[test]
    fn rank_deficient_projection_is_an_error() {
        let a = diag(&[3.0, 2.0, 0.0]);
        assert!(matches!(classify(&a, &coords(3, &[2])), Err(Error::RankDeficientProjection)));
    }

    #[test]
    fn probe_example_values() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let probe = saddle_probe(&a, &coords(3, &[1])).unwrap();
        assert_relative_eq!(probe.descent.curvature, -1.5, epsilon = 1e-14);
        assert_relative_eq!(probe.ascent.curvature, 2.5, epsilon = 1e-14);
        assert!(matches!(saddle_probe(&a, &coords(3, &[0])), Err(Error::NotASaddle(_))));
        assert!(matches!(saddle_probe(&a, &coords(3, &[2])), Err(Error::NotASaddle(_))));
    }

    #[test]
    fn probe_uses_null_directions() {
        let wide = DataMatrix::new(from_rows(2, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap()).unwrap();
        let probe = saddle_probe(&wide, &coords(3, &[1])).unwrap();
        assert_eq!(probe.descent.sigma_partner, 0.0);
        assert_relative_eq!(probe.descent.curvature, -2.0, epsilon = 1e-14);
    }

    fn second_difference(curve: &RotationCurve, a: &DataMatrix) -> f64 {
        let h = 1e-4;
        let f = |t: f64| curve.value(a, t).unwrap();
        (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h)
    }

    #[test]
    fn exhaustive_pairs_on_diag54321() {
        let a = diag(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let spec = spectrum(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let (mut max, mut min, mut saddle) = (0, 0, 0);
        let mut values = vec![];
        for i in 0..5 {
            for j in i + 1..5 {
                let x = coords(5, &[i, j]);
                assert!(is_stationary(&a, &x, &Tolerances::default()).unwrap());
                let class = classify(&a, &x).unwrap();
                values.push((class.verdict, class.value.unwrap()));
                match class.verdict {
                    Verdict::GlobalMax => max += 1,
                    Verdict::GlobalMin => min += 1,
                    Verdict::Saddle => {
                        saddle += 1;
                        let probe = saddle_probe(&a, &x).unwrap();
                        for curve in [&probe.descent, &probe.ascent] {
                            let fd = second_difference(curve, &a);
                            assert!((fd - curve.curvature).abs() <= 1e-4 * curve.curvature.abs(), "{fd} vs {}", curve.curvature);
                        }
                    }
                    Verdict::NotStationary => unreachable!(),
                }
                assert_eq!(class.profile.total(), 2);
                assert_relative_eq!(class.value.unwrap(), f_det(&a, &x).unwrap(), epsilon = 1e-12);
            }
        }
        assert_eq!((max, min, saddle), (1, 1, 8));
        let top = stationary_value(&spec, &leading_profile(&spec, 2), 2).unwrap();
        let bottom = stationary_value(&spec, &trailing_profile(&spec, 2), 2).unwrap();
        for (verdict, v) in values {
            if verdict == Verdict::Saddle {
                assert!(bottom < v && v < top);
            }
        }
    }

    #[test]
    fn classification_is_basis_invariant() {
        let a = diag(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let mut rng = rng_from_seed(5);
        for cols in [[0, 1], [3, 4], [1, 3]] {
            let x = coords(5, &cols);
            let base = classify(&a, &x).unwrap();
            for _ in 0..5 {
                let y = &x * random_gl(2, 30.0, &mut rng);
                let c = classify(&a, &y).unwrap();
                assert_eq!(c.verdict, base.verdict);
                assert_eq!(c.profile, base.profile);
            }
        }
    }

    #[test]
    fn recovery_from_exact_and_rotated_factors() {
        let svals: Vec<f64> = (0..6).map(|i| 9.0 - i as f64).collect();
        let inst = synthesize(&RandomMatrixSpec::new(10, 8, 4, SpectrumModel::Explicit(svals.clone()))).unwrap();
        let vp = inst.ground_truth_vp(3);
        let rec = recover_svd(&inst.a, &vp).unwrap();
        for (s, t) in rec.singular_values.iter().zip(&svals) {
            assert_relative_eq!(s, t, max_relative = 1e-12);
        }
        assert!(crate::metrics::principal_angle(&vp, &rec.v).unwrap() < 1e-10);
        let theta = random_gl(3, 100.0, &mut rng_from_seed(6));
        let rec = recover_svd(&inst.a, &(&vp * theta)).unwrap();
        for (s, t) in rec.singular_values.iter().zip(&svals) {
            assert_relative_eq!(s, t, max_relative = 1e-10);
        }
        let av = inst.a.matrix() * &rec.v;
        let us = &rec.u * Matrix::from_diagonal(&DVector::from_row_slice(&rec.singular_values));
        assert!((av - us).amax() < 1e-10);
    }

    #[test]
    fn recovery_after_a_det_flow_run() {
        let inst = synthesize(&RandomMatrixSpec::new(80, 60, 11, SpectrumModel::Flat)).unwrap();
        let x0 = LoadingMatrix::new(haar_stiefel(60, 5, 12)).unwrap();
        let cfg = SolverConfig {
            epsilon: 1e-10,
            ..SolverConfig::new(Variant::DetLS)
        };
        let res = run(&inst.a, &x0, &cfg, None).unwrap();
        assert!(res.converged);
        let rec = recover_svd(&inst.a, &res.x_final).unwrap();
        for (s, t) in rec.singular_values.iter().zip(&inst.true_singular_values) {
            assert_relative_eq!(s, t, max_relative = 1e-6);
        }
    }

    #[test]
    fn report_round_trips() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let rep = ClassificationReport::build(&a, &coords(3, &[0, 2]), &Tolerances::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Saddle);
        assert!(rep.descent_curvature.unwrap() < 0.0);
        let text = rep.to_text();
        assert!(text.contains("verdict = \"Saddle\""), "{text}");
        assert_eq!(ClassificationReport::from_text(&text).unwrap(), rep);
        assert!(ClassificationReport::from_text("verdict = \"Saddle\"\nbogus = 1\n").is_err());
    }
}
