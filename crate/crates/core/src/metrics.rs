//! Error metric against ground truth and benchmark summaries.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{orthonormality_error, orthonormalize, spectral_norm, Matrix};
use crate::solvers::{IterateRecord, Termination};

/// Largest principal angle `arcsin ‖V_pV_pᵀX̂ − X̂‖₂` between `range(x_hat)`
/// and `range(v_p)`, where `X̂` is the orthonormalised `x_hat`.
pub fn principal_angle(v_p: &Matrix, x_hat: &Matrix) -> Result<f64> {
    if v_p.nrows() != x_hat.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", v_p.nrows()),
            found: format!("{} rows", x_hat.nrows()),
        });
    }
    let err = orthonormality_error(v_p);
    if err > 1e-10 {
        return Err(Error::NotOrthonormal(err));
    }
    let q = orthonormalize(x_hat)?;
    let residual = v_p * v_p.tr_mul(&q) - &q;
    // ‖·‖₂ can exceed 1 by a rounding error.
    Ok(spectral_norm(&residual).clamp(0.0, 1.0).asin())
}

/// One solver run inside a benchmark.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub algorithm: String,
    pub instance: String,
    pub trace: Vec<IterateRecord>,
    pub final_angle: Option<f64>,
    pub wall_time: f64,
    pub termination: Option<Termination>,
    /// Set when the run aborted with an error instead of producing a result.
    pub failure: Option<String>,
}

impl BenchRecord {
    /// First trace entry whose principal angle is below `target`.
    pub fn first_below(&self, target: f64) -> Option<&IterateRecord> {
        self.trace
            .iter()
            .find(|r| r.principal_angle.is_some_and(|a| a < target))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub instance: String,
    pub iters_to_target: Option<usize>,
    /// `None` renders as "unreached".
    pub seconds_to_target: Option<f64>,
    pub final_angle: Option<f64>,
    pub total_iters: usize,
    pub wall_time: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub target_angle: f64,
    pub rows: Vec<SummaryRow>,
}

/// Per-run time and iterations to `target_angle`, ordered by algorithm then instance.
pub fn summarize(records: &[BenchRecord], target_angle: f64) -> Summary {
    let mut rows: Vec<SummaryRow> = records
        .iter()
        .map(|rec| {
            let hit = rec.first_below(target_angle);
            let status = match (&rec.failure, rec.termination) {
                (Some(msg), _) => format!("failed: {msg}"),
                (None, Some(t)) => t.as_str().to_string(),
                (None, None) => "unknown".to_string(),
            };
            SummaryRow {
                algorithm: rec.algorithm.clone(),
                instance: rec.instance.clone(),
                iters_to_target: hit.map(|r| r.iter),
                seconds_to_target: hit.map(|r| r.elapsed_seconds),
                final_angle: rec.final_angle,
                total_iters: rec.trace.last().map_or(0, |r| r.iter),
                wall_time: rec.wall_time,
                status,
            }
        })
        .collect();
    rows.sort_by(|a, b| (&a.algorithm, &a.instance).cmp(&(&b.algorithm, &b.instance)));
    Summary { target_angle, rows }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "unreached".to_string(), |x| format!("{x:.6e}"))
}

impl Summary {
    /// Algorithms on `instance` ordered by seconds to target; unreached last.
    pub fn ordering_by_time(&self, instance: &str) -> Vec<String> {
        let mut rows: Vec<&SummaryRow> = self.rows.iter().filter(|r| r.instance == instance).collect();
        rows.sort_by(|a, b| {
            let key = |r: &SummaryRow| r.seconds_to_target.unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b)).then_with(|| a.algorithm.cmp(&b.algorithm))
        });
        rows.into_iter().map(|r| r.algorithm.clone()).collect()
    }

    /// Same as [`Summary::ordering_by_time`] but by iterations.
    pub fn ordering_by_iters(&self, instance: &str) -> Vec<String> {
        let mut rows: Vec<&SummaryRow> = self.rows.iter().filter(|r| r.instance == instance).collect();
        rows.sort_by_key(|r| (r.iters_to_target.unwrap_or(usize::MAX), r.algorithm.clone()));
        rows.into_iter().map(|r| r.algorithm.clone()).collect()
    }

    pub fn row(&self, algorithm: &str, instance: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.instance == instance)
    }

    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "target principal angle: {:e}", self.target_angle);
        let _ = writeln!(
            out,
            "{:<20} {:<16} {:>12} {:>14} {:>14} {:>10} {:>10}  {}",
            "algorithm", "instance", "iters", "seconds", "final_angle", "total_it", "wall_s", "status"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:<16} {:>12} {:>14} {:>14} {:>10} {:>10.3}  {}",
                r.algorithm,
                r.instance,
                r.iters_to_target.map_or_else(|| "unreached".to_string(), |i| i.to_string()),
                fmt_opt(r.seconds_to_target),
                r.final_angle.map_or_else(|| "-".to_string(), |a| format!("{a:.3e}")),
                r.total_iters,
                r.wall_time,
                r.status
            );
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.into());
        wtr.write_record([
            "algorithm",
            "instance",
            "iters_to_target",
            "seconds_to_target",
            "final_angle",
            "total_iters",
            "wall_time_s",
            "status",
        ])
        .map_err(io)?;
        for r in &self.rows {
            wtr.write_record([
                r.algorithm.clone(),
                r.instance.clone(),
                r.iters_to_target.map_or_else(|| "unreached".to_string(), |i| i.to_string()),
                fmt_opt(r.seconds_to_target),
                r.final_angle.map_or_else(String::new, |a| format!("{a:.15e}")),
                r.total_iters.to_string(),
                format!("{:.6}", r.wall_time),
                r.status.clone(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::from_rows;
    use crate::randgen::{gaussian_matrix, haar_stiefel, random_gl, rng_from_seed};
    use std::f64::consts::FRAC_PI_2;

    fn rec(iter: usize, t: f64, angle: f64) -> IterateRecord {
        IterateRecord {
            iter,
            elapsed_seconds: t,
            f_value: 0.0,
            grad_norm: 1.0,
            principal_angle: Some(angle),
        }
    }

    fn bench(alg: &str, trace: Vec<IterateRecord>) -> BenchRecord {
        BenchRecord {
            algorithm: alg.into(),
            instance: "inst".into(),
            final_angle: trace.last().and_then(|r| r.principal_angle),
            wall_time: trace.last().map_or(0.0, |r| r.elapsed_seconds),
            trace,
            termination: Some(Termination::GradBelowEpsilon),
            failure: None,
        }
    }

    #[test]
    fn angle_examples() {
        let v = haar_stiefel(7, 3, 1);
        assert!(principal_angle(&v, &v).unwrap() < 1e-7);
        let v23 = from_rows(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let x12 = from_rows(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((principal_angle(&v23, &x12).unwrap() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn angle_is_basis_invariant() {
        let mut rng = rng_from_seed(3);
        let v = haar_stiefel(10, 3, 2);
        let theta = random_gl(3, 50.0, &mut rng);
        // arcsin near 0 amplifies nothing, but the residual itself is ~1e-16.
        assert!(principal_angle(&v, &(&v * theta)).unwrap() < 1e-10);
        let x = gaussian_matrix(10, 3, &mut rng);
        let base = principal_angle(&v, &x).unwrap();
        let theta = random_gl(3, 50.0, &mut rng);
        assert!((principal_angle(&v, &(&x * theta)).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn angle_is_symmetric_for_orthonormal_pairs() {
        let v = haar_stiefel(9, 2, 4);
        let q = haar_stiefel(9, 2, 5);
        let a = principal_angle(&v, &q).unwrap();
        let b = principal_angle(&q, &v).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!((0.0..=FRAC_PI_2).contains(&a));
    }

    #[test]
    fn angle_rejects_bad_inputs() {
        let not_orth = from_rows(2, 1, &[2.0, 0.0]).unwrap();
        assert!(matches!(principal_angle(&not_orth, &not_orth), Err(Error::NotOrthonormal(_))));
        let v = from_rows(2, 1, &[1.0, 0.0]).unwrap();
        assert!(principal_angle(&v, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn summary_at_target_from_start() {
        let s = summarize(&[bench("det-flow", vec![rec(0, 0.01, 1e-9)])], 1e-6);
        assert_eq!(s.rows[0].iters_to_target, Some(0));
        assert_eq!(s.rows[0].seconds_to_target, Some(0.01));
    }

    #[test]
    fn summary_unreached() {
        let s = summarize(&[bench("trace-flow", vec![rec(0, 0.0, 0.5), rec(1, 0.1, 0.2)])], 1e-6);
        assert_eq!(s.rows[0].seconds_to_target, None);
        assert!(s.render().contains("unreached"));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("unreached"));
    }

    #[test]
    fn summary_orders_crossing_traces() {
        // A needs fewer iterations, B less time: the orderings cross.
        let a = bench("a", vec![rec(0, 0.0, 1.0), rec(5, 2.0, 1e-4)]);
        let b = bench("b", vec![rec(0, 0.0, 1.0), rec(9, 0.5, 0.5), rec(10, 1.0, 1e-4)]);
        let s = summarize(&[b, a], 1e-3);
        assert_eq!(s.rows[0].algorithm, "a");
        assert_eq!(s.ordering_by_time("inst"), vec!["b", "a"]);
        assert_eq!(s.ordering_by_iters("inst"), vec!["a", "b"]);
    }
}
