//! CSV formats for solver traces and benchmark runs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BenchRecord;
use crate::solvers::IterateRecord;

pub const TRACE_HEADER: [&str; 5] = ["iter", "time_s", "f_value", "grad_norm", "principal_angle"];
pub const BENCH_HEADER: [&str; 5] = ["algorithm", "instance", "iter", "time_s", "principal_angle"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// 16 significant digits.
fn real(v: f64) -> String {
    format!("{v:.15e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map_or_else(String::new, real)
}

pub fn write_trace<W: Write>(w: W, trace: &[IterateRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        wtr.write_record([
            r.iter.to_string(),
            real(r.elapsed_seconds),
            real(r.f_value),
            real(r.grad_norm),
            opt_real(r.principal_angle),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    iter: usize,
    time_s: f64,
    f_value: f64,
    grad_norm: f64,
    principal_angle: Option<f64>,
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}, found {}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

fn row_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match csv_err(e) {
        Error::Parse { msg, .. } => Error::Parse { line, msg },
        other => other,
    }
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<IterateRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &TRACE_HEADER)?;
    rdr.deserialize::<TraceRow>()
        .map(|row| {
            let row = row.map_err(row_err)?;
            Ok(IterateRecord {
                iter: row.iter,
                elapsed_seconds: row.time_s,
                f_value: row.f_value,
                grad_norm: row.grad_norm,
                principal_angle: row.principal_angle,
            })
        })
        .collect()
}

/// One row of the long-form benchmark CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub algorithm: String,
    pub instance: String,
    pub iter: usize,
    pub time_s: f64,
    pub principal_angle: Option<f64>,
}

pub fn write_bench<W: Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BENCH_HEADER).map_err(csv_err)?;
    for rec in records {
        for r in &rec.trace {
            wtr.write_record([
                rec.algorithm.clone(),
                rec.instance.clone(),
                r.iter.to_string(),
                real(r.elapsed_seconds),
                opt_real(r.principal_angle),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_bench<R: Read>(r: R) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &BENCH_HEADER)?;
    rdr.deserialize::<BenchRow>().map(|row| row.map_err(row_err)).collect()
}
