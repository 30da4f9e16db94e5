//! Random test matrices with known singular structure.
//!
//! All randomness in the crate flows from [`rng_from_seed`], a ChaCha8 stream
//! seeded from a `u64`. ChaCha8 is portable and its output is fixed by the
//! algorithm, so a seed names the same matrix on every platform up to
//! floating-point differences in the factorisations.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, thin_qr, thin_svd, Matrix};
use crate::objective::DataMatrix;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix of independent standard normal entries, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed point on St(n, k) drawn from `rng`.
///
/// QR of a Gaussian matrix with the signs of `diag(R)` absorbed into `Q`;
/// [`thin_qr`] already normalises `R` to a nonnegative diagonal.
pub fn haar_stiefel_with<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Matrix {
    assert!(k >= 1 && k <= n, "haar_stiefel requires 1 <= k <= n");
    loop {
        let g = gaussian_matrix(n, k, rng);
        if let Ok((q, _)) = thin_qr(&g) {
            return q;
        }
    }
}

pub fn haar_stiefel(n: usize, k: usize, seed: u64) -> Matrix {
    haar_stiefel_with(n, k, &mut rng_from_seed(seed))
}

/// Haar-distributed orthogonal `n×n` matrix.
pub fn haar_orthogonal(n: usize, seed: u64) -> Matrix {
    haar_stiefel(n, n, seed)
}

/// Random invertible `p×p` matrix with condition number at most `max_cond`.
///
/// Built as `Q₁·diag(s)·Q₂ᵀ` with Haar factors and singular values spread
/// log-uniformly over `[1, max_cond]`.
pub fn random_gl<R: Rng + ?Sized>(p: usize, max_cond: f64, rng: &mut R) -> Matrix {
    assert!(max_cond >= 1.0);
    let q1 = haar_stiefel_with(p, p, rng);
    let q2 = haar_stiefel_with(p, p, rng);
    let log_max = max_cond.ln();
    let s = DVector::from_fn(p, |i, _| {
        if i == 0 {
            1.0
        } else if i == 1 {
            max_cond
        } else {
            (rng.random::<f64>() * log_max).exp()
        }
    });
    q1 * Matrix::from_diagonal(&s) * q2.transpose()
}

/// Shape of a synthetic singular spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumModel {
    /// `σ_i = 10·(1 − 0.3·(i−1)/(L−1))`: a flat scree plot.
    Flat,
    /// `σ_i = 10·0.6^(i−1)` for the first 20 values, then a constant plateau.
    HockeyStick,
    /// User-supplied values, sorted into non-increasing order.
    Explicit(Vec<f64>),
}

const HOCKEY_BLADE: usize = 20;
const HOCKEY_RATIO: f64 = 0.6;

impl SpectrumModel {
    pub fn name(&self) -> &'static str {
        match self {
            SpectrumModel::Flat => "flat",
            SpectrumModel::HockeyStick => "hockey-stick",
            SpectrumModel::Explicit(_) => "explicit",
        }
    }

    pub fn from_name(name: &str, values: Option<Vec<f64>>) -> Result<Self> {
        match (name.to_ascii_lowercase().as_str(), values) {
            ("flat", None) => Ok(SpectrumModel::Flat),
            ("hockey-stick" | "hockey_stick" | "hockeystick", None) => Ok(SpectrumModel::HockeyStick),
            ("explicit", Some(v)) => Ok(SpectrumModel::Explicit(v)),
            ("explicit", None) => Err(Error::InvalidModelParams("explicit spectrum needs values".into())),
            ("flat" | "hockey-stick" | "hockey_stick" | "hockeystick", Some(_)) => Err(
                Error::InvalidModelParams(format!("spectrum {name:?} does not take values")),
            ),
            (other, _) => Err(Error::InvalidModelParams(format!("unknown spectrum kind {other:?}"))),
        }
    }

    /// Number of values the model produces for an `m×n` matrix.
    pub fn natural_length(&self, m: usize, n: usize) -> usize {
        match self {
            SpectrumModel::Explicit(v) => v.len(),
            _ => m.min(n),
        }
    }
}

/// Evaluates a spectrum model at `length` values.
pub fn make_spectrum(model: &SpectrumModel, length: usize) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::InvalidModelParams("spectrum length must be at least 1".into()));
    }
    let values = match model {
        SpectrumModel::Flat => {
            if length == 1 {
                vec![10.0]
            } else {
                let denom = (length - 1) as f64;
                (0..length).map(|i| 10.0 * (1.0 - 0.3 * i as f64 / denom)).collect()
            }
        }
        SpectrumModel::HockeyStick => {
            // Indices past the blade repeat the last blade value exactly.
            (0..length)
                .map(|i| 10.0 * HOCKEY_RATIO.powi(i.min(HOCKEY_BLADE - 1) as i32))
                .collect()
        }
        SpectrumModel::Explicit(v) => {
            if v.len() != length {
                return Err(Error::InvalidModelParams(format!(
                    "explicit spectrum has {} values, expected {length}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                return Err(Error::InvalidModelParams(format!("singular value {bad} is not positive")));
            }
            let mut v = v.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        }
    };
    Ok(values)
}

/// Description of a synthetic `m×n` data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMatrixSpec {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub spectrum: SpectrumModel,
    pub mean_center: bool,
}

impl RandomMatrixSpec {
    pub fn new(m: usize, n: usize, seed: u64, spectrum: SpectrumModel) -> Self {
        Self { m, n, seed, spectrum, mean_center: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidModelParams("matrix dimensions must be positive".into()));
        }
        let len = self.spectrum.natural_length(self.m, self.n);
        if len > self.m.min(self.n) {
            return Err(Error::InvalidModelParams(format!(
                "spectrum length {len} exceeds min(m, n) = {}",
                self.m.min(self.n)
            )));
        }
        if self.mean_center && self.m < 2 {
            return Err(Error::InvalidModelParams("mean-centring needs at least two rows".into()));
        }
        Ok(())
    }
}

/// A generated data matrix together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub spec: RandomMatrixSpec,
    pub a: DataMatrix,
    pub true_singular_values: Vec<f64>,
    /// Right singular factor (`n × L`) whose leading columns are the ground truth.
    pub right_factor: Matrix,
}

impl SyntheticInstance {
    /// Leading `p` columns of the right singular factor.
    pub fn ground_truth_vp(&self, p: usize) -> Matrix {
        assert!(p <= self.right_factor.ncols(), "p exceeds the number of known singular vectors");
        self.right_factor.columns(0, p).into_owned()
    }
}

/// `A = U·diag(σ)·Vᵀ` with `U ∈ St(m, L)` and `V ∈ St(n, L)` Haar-distributed.
///
/// When `L = m` the left factor is a Haar orthogonal matrix, matching the
/// convention of drawing `U ∈ Orth(m)` and `V ∈ St(n, m)` for wide matrices.
pub fn synthesize(spec: &RandomMatrixSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let len = spec.spectrum.natural_length(spec.m, spec.n);
    let sigma = make_spectrum(&spec.spectrum, len)?;
    let mut rng = rng_from_seed(spec.seed);
    let u = haar_stiefel_with(spec.m, len, &mut rng);
    let v = haar_stiefel_with(spec.n, len, &mut rng);
    let mut us = u;
    for (j, s) in sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    let a = us * v.transpose();
    if spec.mean_center {
        let centered = mean_center(&a);
        let svd = thin_svd(&centered)?;
        Ok(SyntheticInstance {
            spec: spec.clone(),
            a: DataMatrix::new_mean_centered(centered)?,
            true_singular_values: svd.singular_values,
            right_factor: svd.right,
        })
    } else {
        Ok(SyntheticInstance {
            spec: spec.clone(),
            a: DataMatrix::new(a)?,
            true_singular_values: sigma,
            right_factor: v,
        })
    }
}

/// Subtracts the column means from every row.
pub fn mean_center(a: &Matrix) -> Matrix {
    let m = a.nrows() as f64;
    let means: DVector<f64> = a.row_sum().transpose() / m;
    let mut out = a.clone();
    for (j, mean) in means.iter().enumerate() {
        out.column_mut(j).add_scalar_mut(-mean);
    }
    out
}

/// Sidecar record written next to a generated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMetadata {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub spectrum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_values: Option<Vec<f64>>,
    pub mean_center: bool,
    pub singular_values: Vec<f64>,
}

impl InstanceMetadata {
    pub fn of(instance: &SyntheticInstance) -> Self {
        let spec = &instance.spec;
        Self {
            m: spec.m,
            n: spec.n,
            seed: spec.seed,
            spectrum: spec.spectrum.name().to_string(),
            spectrum_values: match &spec.spectrum {
                SpectrumModel::Explicit(v) => Some(v.clone()),
                _ => None,
            },
            mean_center: spec.mean_center,
            singular_values: instance.true_singular_values.clone(),
        }
    }

    pub fn spec(&self) -> Result<RandomMatrixSpec> {
        Ok(RandomMatrixSpec {
            m: self.m,
            n: self.n,
            seed: self.seed,
            spectrum: SpectrumModel::from_name(&self.spectrum, self.spectrum_values.clone())?,
            mean_center: self.mean_center,
        })
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("metadata is always serialisable")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })
    }
}

/// Paths of a saved instance.
#[derive(Debug, Clone)]
pub struct InstanceFiles {
    pub matrix: PathBuf,
    pub metadata: PathBuf,
}

impl InstanceFiles {
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        Self {
            matrix: dir.join(format!("{name}.matrix")),
            metadata: dir.join(format!("{name}.meta.toml")),
        }
    }
}

pub fn save_instance(instance: &SyntheticInstance, files: &InstanceFiles) -> Result<()> {
    numerics::save_matrix(&files.matrix, instance.a.matrix())?;
    std::fs::write(&files.metadata, InstanceMetadata::of(instance).to_text())?;
    Ok(())
}

pub fn load_metadata(path: &Path) -> Result<InstanceMetadata> {
    InstanceMetadata::from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::principal_angle;
    use crate::numerics::orthonormality_error;
    use approx::assert_relative_eq;

    #[test]
    fn haar_one_by_one_signs_are_balanced() {
        let plus = (0..1000).filter(|&s| haar_orthogonal(1, s)[(0, 0)] > 0.0).count();
        assert!((400..=600).contains(&plus), "plus count {plus}");
        for s in 0..20 {
            assert_eq!(haar_orthogonal(1, s)[(0, 0)].abs(), 1.0);
        }
    }

    #[test]
    fn haar_is_orthogonal() {
        for n in [1, 2, 7, 40] {
            assert!(orthonormality_error(&haar_orthogonal(n, n as u64)) < 1e-12);
        }
        let st = haar_stiefel(30, 4, 2);
        assert_eq!(st.shape(), (30, 4));
        assert!(orthonormality_error(&st) < 1e-12);
    }

    #[test]
    fn haar_first_moment_vanishes() {
        let n = 4;
        let trials = 10_000;
        let mean_orth: f64 = (0..trials).map(|s| haar_orthogonal(n, s)[(0, 0)]).sum::<f64>() / trials as f64;
        let bound = 3.0 * (1.0 / (n as f64).sqrt()) / (trials as f64).sqrt();
        assert!(mean_orth.abs() < bound, "mean {mean_orth} bound {bound}");
        let mean_st: f64 = (0..trials).map(|s| haar_stiefel(n, 2, s)[(0, 0)]).sum::<f64>() / trials as f64;
        assert!(mean_st.abs() < bound, "mean {mean_st} bound {bound}");
        // Second moment of an entry of a uniform unit vector is 1/n.
        let second: f64 = (0..trials).map(|s| haar_stiefel(n, 2, s)[(1, 1)].powi(2)).sum::<f64>() / trials as f64;
        assert!((second - 0.25).abs() < 0.02, "second moment {second}");
    }

    #[test]
    fn haar_is_deterministic_per_seed() {
        assert_eq!(haar_orthogonal(6, 42), haar_orthogonal(6, 42));
        assert_ne!(haar_orthogonal(6, 42), haar_orthogonal(6, 43));
    }

    #[test]
    fn spectrum_formulas() {
        let flat = make_spectrum(&SpectrumModel::Flat, 2).unwrap();
        assert_relative_eq!(flat[0], 10.0);
        assert_relative_eq!(flat[1], 7.0, epsilon = 1e-14);
        let hs = make_spectrum(&SpectrumModel::HockeyStick, 3).unwrap();
        assert_relative_eq!(hs[0], 10.0);
        assert_relative_eq!(hs[1], 6.0, epsilon = 1e-14);
        assert_relative_eq!(hs[2], 3.6, epsilon = 1e-14);
        assert_eq!(make_spectrum(&SpectrumModel::Explicit(vec![1.0, 3.0, 2.0]), 3).unwrap(), vec![3.0, 2.0, 1.0]);
        assert_eq!(make_spectrum(&SpectrumModel::Flat, 1).unwrap(), vec![10.0]);
    }

    #[test]
    fn spectrum_shapes_hold_for_long_lengths() {
        let flat = make_spectrum(&SpectrumModel::Flat, 300).unwrap();
        assert_relative_eq!(flat[0] / flat[299], 10.0 / 7.0, epsilon = 1e-12);
        let hs = make_spectrum(&SpectrumModel::HockeyStick, 300).unwrap();
        assert_eq!(hs[19], hs[299]);
        assert!(hs[18] > hs[19]);
        for s in [&flat, &hs] {
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn spectrum_errors() {
        assert!(make_spectrum(&SpectrumModel::Flat, 0).is_err());
        assert!(make_spectrum(&SpectrumModel::Explicit(vec![1.0, 0.0]), 2).is_err());
        assert!(make_spectrum(&SpectrumModel::Explicit(vec![1.0]), 2).is_err());
        assert!(SpectrumModel::from_name("triangle", None).is_err());
    }

    #[test]
    fn synthesize_explicit_spectrum() {
        let spec = RandomMatrixSpec::new(5, 4, 7, SpectrumModel::Explicit(vec![4.0, 3.0, 2.0, 1.0]));
        let inst = synthesize(&spec).unwrap();
        let svd = thin_svd(inst.a.matrix()).unwrap();
        for (s, e) in svd.singular_values.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((s - e).abs() <= 1e-10 * e);
        }
        // p = n: the full right factor is square orthogonal.
        let v = inst.ground_truth_vp(4);
        assert!(orthonormality_error(&v) < 1e-12);
        assert!(principal_angle(&v, &svd.right).unwrap() < 1e-8);
        // Each leading subspace agrees with the recomputed factor.
        for p in 1..4 {
            let angle = principal_angle(&inst.ground_truth_vp(p), &svd.leading_right(p)).unwrap();
            assert!(angle < 1e-8, "p={p} angle={angle}");
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let spec = RandomMatrixSpec::new(12, 9, 3, SpectrumModel::Flat);
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        assert_eq!(a.a.matrix(), b.a.matrix());
    }

    #[test]
    fn synthesize_all_kinds_match_construction() {
        for (m, n) in [(200, 300), (60, 40)] {
            for model in [SpectrumModel::Flat, SpectrumModel::HockeyStick] {
                let spec = RandomMatrixSpec::new(m, n, 11, model);
                let inst = synthesize(&spec).unwrap();
                let svd = thin_svd(inst.a.matrix()).unwrap();
                assert_eq!(svd.rank(), inst.true_singular_values.len());
                for (s, e) in svd.singular_values.iter().zip(&inst.true_singular_values) {
                    assert!((s - e).abs() <= 1e-10 * e, "{s} vs {e}");
                }
            }
        }
    }

    #[test]
    fn synthesize_mean_centered_recomputes_truth() {
        let mut spec = RandomMatrixSpec::new(30, 10, 5, SpectrumModel::Flat);
        spec.mean_center = true;
        let inst = synthesize(&spec).unwrap();
        assert!(inst.a.is_mean_centered());
        let svd = thin_svd(inst.a.matrix()).unwrap();
        assert_eq!(svd.singular_values, inst.true_singular_values);
        let sums = inst.a.matrix().row_sum();
        assert!(sums.amax() <= 1e-12 * inst.a.matrix().norm());
    }

    #[test]
    fn synthesize_rejects_bad_specs() {
        let spec = RandomMatrixSpec::new(3, 4, 0, SpectrumModel::Explicit(vec![4.0, 3.0, 2.0, 1.0]));
        assert!(synthesize(&spec).is_err());
        assert!(synthesize(&RandomMatrixSpec::new(0, 4, 0, SpectrumModel::Flat)).is_err());
    }

    #[test]
    fn mean_center_examples() {
        let a = gaussian_matrix(20, 6, &mut rng_from_seed(2));
        let c = mean_center(&a);
        assert!(c.row_sum().amax() <= 1e-12 * a.norm());
        let cc = mean_center(&c);
        assert!((&cc - &c).amax() <= 1e-15);
        let same = Matrix::from_fn(4, 3, |_, j| j as f64 + 0.5);
        assert!(mean_center(&same).amax() == 0.0);
    }

    #[test]
    fn metadata_round_trips() {
        let spec = RandomMatrixSpec::new(5, 4, 7, SpectrumModel::Explicit(vec![4.0, 3.0, 2.0, 1.0]));
        let inst = synthesize(&spec).unwrap();
        let meta = InstanceMetadata::of(&inst);
        let back = InstanceMetadata::from_text(&meta.to_text()).unwrap();
        assert_eq!(back, meta);
        assert_eq!(back.spec().unwrap(), spec);
    }
}
