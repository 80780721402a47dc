//! Flat CSV output. Numbers use 17 significant digits so that every finite
//! `f64` survives a write/parse round trip; `#` lines carry metadata.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::harness::{ConvergenceReport, ConvergenceRow, Trajectory};

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_meta<W: Write>(w: &mut W, meta: &[(String, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Trajectory with header `t,y1,...,yN,sum`.
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory, meta: &[(String, String)]) -> Result<()> {
    writeln!(w, "# problem={}", traj.problem)?;
    writeln!(w, "# scheme={}", traj.scheme)?;
    write_meta(&mut w, meta)?;
    let n = traj.states.first().map_or(0, |y| y.len());
    let mut out = csv_writer(&mut w);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.push("sum".into());
    out.write_record(&header)?;
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let mut rec = Vec::with_capacity(n + 2);
        rec.push(fmt_f64(*t));
        rec.extend(y.iter().map(|v| fmt_f64(*v)));
        rec.push(fmt_f64(y.iter().sum()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Convergence report with header `dt,E,order` (order empty on the first row).
pub fn write_report<W: Write>(mut w: W, report: &ConvergenceReport, meta: &[(String, String)]) -> Result<()> {
    writeln!(w, "# problem={}", report.problem)?;
    writeln!(w, "# scheme={}", report.scheme)?;
    write_meta(&mut w, meta)?;
    let mut out = csv_writer(&mut w);
    out.write_record(["dt", "E", "order"])?;
    for row in &report.rows {
        out.write_record([
            fmt_f64(row.dt),
            fmt_f64(row.error),
            row.order.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::arg(format!("line {line}: '{s}' is not a number")))
}

/// Reads back a report written by [`write_report`].
pub fn parse_report<R: BufRead>(r: R) -> Result<ConvergenceReport> {
    let mut problem = String::new();
    let mut scheme = String::new();
    let mut body = String::new();
    for line in r.lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(meta) => {
                let meta = meta.strip_prefix(' ').unwrap_or(meta);
                if let Some((k, v)) = meta.split_once('=') {
                    match k {
                        "problem" => problem = v.to_string(),
                        "scheme" => scheme = v.to_string(),
                        _ => {}
                    }
                }
            }
            None => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["dt", "E", "order"] {
        return Err(Error::arg(format!("unexpected report header {headers:?}")));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let order = match rec.get(2).unwrap_or("").trim() {
            "" => None,
            s => Some(parse_f64(s, line)?),
        };
        rows.push(ConvergenceRow {
            dt: parse_f64(&rec[0], line)?,
            error: parse_f64(&rec[1], line)?,
            order,
        });
    }
    Ok(ConvergenceReport { problem, scheme, rows })
}

/// α-sweep rows with header `alpha,E`.
pub fn write_sweep<W: Write>(mut w: W, rows: &[(f64, f64)], meta: &[(String, String)]) -> Result<()> {
    write_meta(&mut w, meta)?;
    let mut out = csv_writer(&mut w);
    out.write_record(["alpha", "E"])?;
    for (a, e) in rows {
        out.write_record([fmt_f64(*a), fmt_f64(*e)])?;
    }
    out.flush()?;
    Ok(())
}

/// Footer line `# tv_y1=...,tv_y2=...` with per-component total variation.
pub fn write_tv_footer<W: Write>(mut w: W, tv: &[f64]) -> Result<()> {
    let parts: Vec<String> = tv
        .iter()
        .enumerate()
        .map(|(i, v)| format!("tv_y{}={}", i + 1, fmt_f64(*v)))
        .collect();
    writeln!(w, "# {}", parts.join(","))?;
    Ok(())
}
