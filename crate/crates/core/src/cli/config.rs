//! Run configuration read from TOML.
//!
//! ```toml
//! [matrix]
//! m = 200
//! n = 150
//! seed = 1
//! spectrum = "flat"          # "flat", "hockey-stick" or "explicit"
//! # values = [5.0, 3.0]      # explicit spectra only
//! # path = "a.matrix"        # load data instead of synthesizing it
//!
//! [solver]
//! variant = "det-flow"
//! epsilon = 1e-6
//!
//! [run]
//! p = 15
//! start = "random"           # or "optimum"
//!
//! [output]
//! dir = "out"
//! csv = "trace.csv"
//! ```
//!
//! Every section and key is optional; unknown keys are rejected with the
//! dotted name of the offending key. Relative paths are resolved against the
//! directory containing the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::randgen::{RandomMatrixSpec, SpectrumModel};
use crate::solvers::{SolverConfig, Variant};
use crate::stationary::Tolerances;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub matrix: MatrixSection,
    pub solver: SolverSection,
    pub run: RunSection,
    pub output: OutputSection,
    pub bench: BenchSection,
    pub classify: ClassifySection,
    pub check_grad: CheckGradSection,
    /// Directory of the config file; relative paths are resolved against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSection {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub spectrum: String,
    pub values: Option<Vec<f64>>,
    pub mean_center: bool,
    pub path: Option<PathBuf>,
}

impl Default for MatrixSection {
    fn default() -> Self {
        Self {
            name: "instance".into(),
            m: 200,
            n: 150,
            seed: 0,
            spectrum: "flat".into(),
            values: None,
            mean_center: false,
            path: None,
        }
    }
}

impl MatrixSection {
    pub fn random_spec(&self) -> Result<RandomMatrixSpec> {
        let model = SpectrumModel::from_name(&self.spectrum, self.values.clone())
            .map_err(|e| Error::InvalidConfig(format!("matrix.spectrum: {e}")))?;
        let spec = RandomMatrixSpec {
            m: self.m,
            n: self.n,
            seed: self.seed,
            spectrum: model,
            mean_center: self.mean_center,
        };
        spec.validate().map_err(|e| Error::InvalidConfig(format!("matrix: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub variant: String,
    pub epsilon: f64,
    pub max_iters: usize,
    pub window: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub lipschitz_samples: usize,
    pub lipschitz_seed: u64,
    pub lipschitz: Option<f64>,
    pub reorthogonalize: bool,
    pub lambda_grid: Vec<f64>,
    pub rna_lambda: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            variant: d.variant.label(d.window),
            epsilon: d.epsilon,
            max_iters: d.max_iters,
            window: d.window,
            wolfe_c1: d.wolfe_c1,
            wolfe_c2: d.wolfe_c2,
            lipschitz_samples: d.lipschitz_samples,
            lipschitz_seed: d.lipschitz_seed,
            lipschitz: d.lipschitz,
            reorthogonalize: d.reorthogonalize,
            lambda_grid: d.lambda_grid,
            rna_lambda: d.rna_lambda,
        }
    }
}

impl SolverSection {
    /// Solver settings for `variant`, or for `solver.variant` when `None`.
    pub fn solver_config(&self, variant: Option<Variant>) -> Result<SolverConfig> {
        let variant = match variant {
            Some(v) => v,
            None => self
                .variant
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("solver.variant: {e}")))?,
        };
        let cfg = SolverConfig {
            variant,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            window: self.window,
            wolfe_c1: self.wolfe_c1,
            wolfe_c2: self.wolfe_c2,
            lipschitz_samples: self.lipschitz_samples,
            lipschitz_seed: self.lipschitz_seed,
            lipschitz: self.lipschitz,
            reorthogonalize: self.reorthogonalize,
            lambda_grid: self.lambda_grid.clone(),
            rna_lambda: self.rna_lambda,
        };
        cfg.validate().map_err(|e| Error::InvalidConfig(format!("solver: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Number of components.
    pub p: usize,
    /// `"random"` (Haar start drawn from `seed`) or `"optimum"`.
    pub start: String,
    pub seed: u64,
    /// Start seeds for `bench`; empty means `seed, seed + 1, …` for `trials` runs.
    pub seeds: Vec<u64>,
    pub trials: usize,
    /// Principal angle used for the time-to-target summary.
    pub target_angle: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            p: 15,
            start: "random".into(),
            seed: 0,
            seeds: vec![],
            trials: 1,
            target_angle: 1e-3,
        }
    }
}

impl RunSection {
    pub fn start_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.trials as u64).map(|t| self.seed + t).collect()
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: String,
    pub loading: String,
    pub bench_csv: String,
    pub summary_csv: String,
    pub report: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            csv: "trace.csv".into(),
            loading: "x_final.matrix".into(),
            bench_csv: "bench.csv".into(),
            summary_csv: "summary.csv".into(),
            report: "classification.toml".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub instances: Vec<MatrixSection>,
    /// Variant names; empty means all six.
    pub variants: Vec<String>,
}

impl BenchSection {
    pub fn variants(&self) -> Result<Vec<Variant>> {
        if self.variants.is_empty() {
            return Ok(Variant::ALL.to_vec());
        }
        self.variants
            .iter()
            .map(|v| v.parse().map_err(|e| Error::InvalidConfig(format!("bench.variants: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySection {
    pub matrix: Option<PathBuf>,
    pub loading: Option<PathBuf>,
    pub coalesce_tol: f64,
    pub rank_tol: f64,
    pub grad_tol: f64,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            matrix: None,
            loading: None,
            coalesce_tol: t.coalesce_tol,
            rank_tol: t.rank_tol,
            grad_tol: t.grad_tol,
        }
    }
}

impl ClassifySection {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            coalesce_tol: self.coalesce_tol,
            rank_tol: self.rank_tol,
            grad_tol: self.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckGradSection {
    pub pairs: usize,
    pub max_rows: usize,
    pub max_cols: usize,
    pub max_p: usize,
    pub seed: u64,
    pub rtol: f64,
    /// Used instead of `rtol` when both gradients are this small.
    pub atol: f64,
    /// Use `A = 2·I`, whose gradients vanish identically.
    pub isotropic: bool,
    /// Test hook: perturb the analytic gradient before comparing.
    pub corrupt: bool,
}

impl Default for CheckGradSection {
    fn default() -> Self {
        Self {
            pairs: 20,
            max_rows: 30,
            max_cols: 20,
            max_p: 5,
            seed: 0,
            rtol: 1e-6,
            atol: 1e-8,
            isotropic: false,
            corrupt: false,
        }
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, key) = match e.span() {
                Some(span) => locate_key(text, span.start),
                None => (0, None),
            };
            let msg = e.message().trim().to_string();
            Error::Parse {
                line,
                msg: match key {
                    Some(k) => format!("key `{k}`: {msg}"),
                    None => msg,
                },
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_text(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// `path` relative to the config file's directory unless it is absolute.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }
}

/// 1-based line of `offset` and the dotted name of the key on it.
fn locate_key(text: &str, offset: usize) -> (usize, Option<String>) {
    let offset = offset.min(text.len());
    let line_no = text[..offset].matches('\n').count() + 1;
    let mut section: Option<String> = None;
    let mut line_text = "";
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if i + 1 == line_no {
            line_text = trimmed;
            break;
        }
        if trimmed.starts_with('[') {
            section = Some(trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        }
    }
    if line_text.starts_with('[') {
        return (line_no, Some(line_text.trim_matches(|c| c == '[' || c == ']').trim().to_string()));
    }
    let key = line_text.split('=').next().map(str::trim).filter(|k| !k.is_empty());
    let dotted = match (section, key) {
        (Some(s), Some(k)) => Some(format!("{s}.{k}")),
        (None, Some(k)) => Some(k.to_string()),
        (s, None) => s,
    };
    (line_no, dotted)
}
