use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::config::{MatrixSection, RunConfig};
use super::csvio;
use crate::error::{Error, Result};
use crate::metrics::{summarize, BenchRecord, Summary};
use crate::numerics::{load_matrix, save_matrix, thin_svd, Matrix};
use crate::objective::{grad_f_det, grad_f_trace, f_det, f_trace, DataMatrix, LoadingMatrix};
use crate::randgen::{gaussian_matrix, haar_stiefel, rng_from_seed, save_instance, synthesize, InstanceFiles};
use crate::solvers::{run, SolverResult, Variant};
use crate::stationary::ClassificationReport;

/// Data matrix with its ground-truth leading factor, when known.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub a: DataMatrix,
    /// `n×p` leading right singular vectors.
    pub truth: Option<Matrix>,
}

fn check_p(p: usize, a: &DataMatrix) -> Result<()> {
    let limit = a.nrows().min(a.ncols());
    if p == 0 || p > limit {
        return Err(Error::InvalidConfig(format!("run.p must lie in 1..={limit}, got {p}")));
    }
    Ok(())
}

/// Synthesizes the instance described by `section`, or loads `section.path`.
pub fn build_instance(cfg: &RunConfig, section: &MatrixSection, p: usize) -> Result<Instance> {
    let (a, truth) = match &section.path {
        Some(path) => {
            let a = DataMatrix::new(load_matrix(&cfg.resolve(path))?)?;
            check_p(p, &a)?;
            let svd = thin_svd(a.matrix())?;
            let truth = (svd.rank() >= p).then(|| svd.leading_right(p));
            (a, truth)
        }
        None => {
            let inst = synthesize(&section.random_spec()?)?;
            check_p(p, &inst.a)?;
            let truth = (inst.right_factor.ncols() >= p).then(|| inst.ground_truth_vp(p));
            (inst.a, truth)
        }
    };
    Ok(Instance {
        name: section.name.clone(),
        a,
        truth,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_generate(cfg: &RunConfig, out: &mut dyn Write) -> Result<InstanceFiles> {
    if cfg.matrix.path.is_some() {
        return Err(Error::InvalidConfig("matrix.path: generate synthesizes data and cannot load a matrix".into()));
    }
    let spec = cfg.matrix.random_spec()?;
    let inst = synthesize(&spec)?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let files = InstanceFiles::in_dir(&dir, &cfg.matrix.name);
    save_instance(&inst, &files)?;
    let s = &inst.true_singular_values;
    writeln!(out, "seed = {}", spec.seed)?;
    writeln!(
        out,
        "spectrum = {} ({} values, sigma_1 = {:.6e}, sigma_last = {:.6e})",
        spec.spectrum.name(),
        s.len(),
        s[0],
        s[s.len() - 1]
    )?;
    writeln!(out, "matrix = {}", files.matrix.display())?;
    writeln!(out, "metadata = {}", files.metadata.display())?;
    Ok(files)
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub result: SolverResult,
    pub trace_path: PathBuf,
    pub loading_path: PathBuf,
}

pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<SolveOutcome> {
    let solver = cfg.solver.solver_config(None)?;
    let p = cfg.run.p;
    let inst = build_instance(cfg, &cfg.matrix, p)?;
    let x0 = match cfg.run.start.as_str() {
        "random" => haar_stiefel(inst.a.ncols(), p, cfg.run.seed),
        "optimum" => inst
            .truth
            .clone()
            .ok_or_else(|| Error::InvalidConfig("run.start: no leading factor known for this matrix".into()))?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "run.start must be \"random\" or \"optimum\", got {other:?}"
            )))
        }
    };
    let result = run(&inst.a, &LoadingMatrix::new(x0)?, &solver, inst.truth.as_ref())?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let trace_path = dir.join(&cfg.output.csv);
    csvio::write_trace(BufWriter::new(File::create(&trace_path)?), &result.trace)?;
    let loading_path = dir.join(&cfg.output.loading);
    save_matrix(&loading_path, &result.x_final)?;

    let last = result.final_record();
    writeln!(out, "variant = {}", solver.label())?;
    writeln!(out, "termination = {}", result.termination.as_str())?;
    writeln!(out, "iterations = {}", result.total_iters)?;
    writeln!(out, "f_value = {:.15e}", last.f_value)?;
    writeln!(out, "grad_norm = {:.6e}", last.grad_norm)?;
    if let Some(angle) = last.principal_angle {
        writeln!(out, "principal_angle = {angle:.6e}")?;
    }
    if let Some(msg) = &result.failure {
        writeln!(out, "failure = {msg}")?;
    }
    writeln!(out, "trace = {}", trace_path.display())?;
    Ok(SolveOutcome {
        result,
        trace_path,
        loading_path,
    })
}

/// Threads for `bench`: `DETFLOW_THREADS` if set, otherwise all cores.
pub fn bench_threads() -> Result<usize> {
    match std::env::var("DETFLOW_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidConfig(format!("DETFLOW_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub records: Vec<BenchRecord>,
    pub summary: Summary,
    pub bench_path: PathBuf,
    pub summary_path: PathBuf,
}

struct Job<'a> {
    instance: &'a Instance,
    label: String,
    variant: Variant,
    seed: u64,
}

fn bench_job(cfg: &RunConfig, job: &Job<'_>) -> BenchRecord {
    let p = cfg.run.p;
    let solver = cfg.solver.solver_config(Some(job.variant));
    let outcome = solver.and_then(|solver| {
        let x0 = LoadingMatrix::new(haar_stiefel(job.instance.a.ncols(), p, job.seed))?;
        run(&job.instance.a, &x0, &solver, job.instance.truth.as_ref()).map(|r| (solver.label(), r))
    });
    match outcome {
        Ok((algorithm, res)) => BenchRecord {
            algorithm,
            instance: job.label.clone(),
            final_angle: res.final_record().principal_angle,
            wall_time: res.final_record().elapsed_seconds,
            termination: Some(res.termination),
            failure: res.failure.clone(),
            trace: res.trace,
        },
        Err(e) => BenchRecord {
            algorithm: job.variant.label(cfg.solver.window),
            instance: job.label.clone(),
            trace: vec![],
            final_angle: None,
            wall_time: 0.0,
            termination: None,
            failure: Some(e.to_string()),
        },
    }
}

/// Runs every variant on every instance and start seed.
pub fn cmd_bench(cfg: &RunConfig, out: &mut dyn Write) -> Result<BenchOutcome> {
    if cfg.bench.instances.is_empty() {
        return Err(Error::InvalidConfig("bench.instances is empty".into()));
    }
    let variants = cfg.bench.variants()?;
    cfg.solver.solver_config(None)?;
    let seeds = cfg.run.start_seeds();
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("run.trials must be positive".into()));
    }
    let instances = cfg
        .bench
        .instances
        .iter()
        .map(|s| build_instance(cfg, s, cfg.run.p))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = vec![];
    for inst in &instances {
        for &seed in &seeds {
            let label = if seeds.len() > 1 {
                format!("{}-s{seed}", inst.name)
            } else {
                inst.name.clone()
            };
            for &variant in &variants {
                jobs.push(Job {
                    instance: inst,
                    label: label.clone(),
                    variant,
                    seed,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(bench_threads()?)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let records: Vec<BenchRecord> = pool.install(|| jobs.par_iter().map(|job| bench_job(cfg, job)).collect());

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let bench_path = dir.join(&cfg.output.bench_csv);
    csvio::write_bench(BufWriter::new(File::create(&bench_path)?), &records)?;
    let summary = summarize(&records, cfg.run.target_angle);
    let summary_path = dir.join(&cfg.output.summary_csv);
    summary.write_csv(BufWriter::new(File::create(&summary_path)?))?;

    write!(out, "{}", summary.render())?;
    let mut labels: Vec<&str> = records.iter().map(|r| r.instance.as_str()).collect();
    labels.dedup();
    for label in labels {
        writeln!(out, "time-to-target ordering on {label}: {}", summary.ordering_by_time(label).join(" < "))?;
    }
    writeln!(out, "bench = {}", bench_path.display())?;
    writeln!(out, "summary = {}", summary_path.display())?;
    Ok(BenchOutcome {
        records,
        summary,
        bench_path,
        summary_path,
    })
}

pub fn cmd_classify(cfg: &RunConfig, out: &mut dyn Write) -> Result<ClassificationReport> {
    let section = &cfg.classify;
    let (Some(matrix), Some(loading)) = (&section.matrix, &section.loading) else {
        return Err(Error::InvalidConfig("classify.matrix and classify.loading are required".into()));
    };
    let a = DataMatrix::new(load_matrix(&cfg.resolve(matrix))?)?;
    let x = load_matrix(&cfg.resolve(loading))?;
    let report = ClassificationReport::build(&a, &x, &section.tolerances())?;
    let text = report.to_text();
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    fs::write(dir.join(&cfg.output.report), &text)?;
    write!(out, "{text}")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub pair: usize,
    pub model: &'static str,
    pub shape: (usize, usize, usize),
    pub abs_error: f64,
    pub rel_error: f64,
    pub passed: bool,
}

fn central_differences(f: impl Fn(&Matrix) -> Result<f64>, x: &Matrix) -> Result<Matrix> {
    let mut g = Matrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let h = 1e-5 * (1.0 + x[(i, j)].abs());
            let mut xp = x.clone();
            xp[(i, j)] += h;
            let mut xm = x.clone();
            xm[(i, j)] -= h;
            g[(i, j)] = (f(&xp)? - f(&xm)?) / (2.0 * h);
        }
    }
    Ok(g)
}

/// Compares both analytic gradients with central differences on random pairs.
pub fn cmd_check_grad(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<GradCheck>> {
    let c = &cfg.check_grad;
    if c.pairs == 0 || c.max_p == 0 || c.max_cols < 1 || c.max_rows < 1 {
        return Err(Error::InvalidConfig("check_grad sizes and pairs must be positive".into()));
    }
    let mut rng = rng_from_seed(c.seed);
    let mut checks = vec![];
    for pair in 0..c.pairs {
        let n = rng.random_range(1..=c.max_cols);
        let p = rng.random_range(1..=c.max_p.min(n).min(c.max_rows));
        let (a, m) = if c.isotropic {
            (DataMatrix::new(Matrix::identity(n, n) * 2.0)?, n)
        } else {
            let m = rng.random_range(p..=c.max_rows);
            (DataMatrix::new(gaussian_matrix(m, n, &mut rng))?, m)
        };
        let x = gaussian_matrix(n, p, &mut rng);
        let models: [(&'static str, Matrix, Matrix); 2] = [
            ("det", grad_f_det(&a, &x)?, central_differences(|y| f_det(&a, y), &x)?),
            ("trace", grad_f_trace(&a, &x)?, central_differences(|y| f_trace(&a, y), &x)?),
        ];
        for (model, mut g, fd) in models {
            if c.corrupt {
                g[(0, 0)] += 1e-3 * g.norm().max(1.0);
            }
            let abs_error = (&g - &fd).norm();
            let scale = fd.norm();
            let rel_error = if scale > 0.0 { abs_error / scale } else { f64::INFINITY };
            let passed = abs_error <= c.rtol * scale || (scale < c.atol && abs_error <= c.atol);
            writeln!(
                out,
                "pair {pair:>3} {model:<5} {m}x{n} p={p}: abs {abs_error:.3e} rel {rel_error:.3e} {}",
                if passed { "PASS" } else { "FAIL" }
            )?;
            checks.push(GradCheck {
                pair,
                model,
                shape: (m, n, p),
                abs_error,
                rel_error,
                passed,
            });
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {failed} failed", checks.len())?;
    Ok(checks)
}
