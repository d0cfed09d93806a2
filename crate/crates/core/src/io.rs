//! CSV persistence for datasets and weights.
//!
//! Datasets: header `x_0,…,x_{d-1},y`, one sample per row.
//! Weights: first line `k=<k>,d=<d>`, then `k` rows of `d` values.
//! Floats are written with 17 significant digits so files round-trip exactly.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{QuadError, Result};
use crate::model::{Dataset, Task, Weights};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = (0..data.d())
        .map(|j| format!("x_{j}"))
        .chain(std::iter::once("y".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let row: Vec<String> = data
            .inputs()
            .row(i)
            .iter()
            .map(|&v| fmt_f64(v))
            .chain(std::iter::once(fmt_f64(data.labels()[i])))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                QuadError::invalid("csv", format!("line {lineno}: cannot parse `{}`", tok.trim()))
            })
        })
        .collect()
}

pub fn read_dataset_csv<R: BufRead>(input: R, task: Task) -> Result<Dataset> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        _ => return Err(QuadError::invalid("csv", "missing header")),
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(1);
    let expected: Vec<String> = (0..d).map(|j| format!("x_{j}")).chain(["y".into()]).collect();
    if d == 0 || cols != expected {
        return Err(QuadError::invalid(
            "csv",
            format!("dataset header must be `{}`", expected.join(",")),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| QuadError::invalid("csv", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(&line, idx + 1)?;
        if row.len() != d + 1 {
            return Err(QuadError::shape("dataset row", d + 1, row.len()));
        }
        xs.extend_from_slice(&row[..d]);
        ys.push(row[d]);
    }
    let n = ys.len();
    Dataset::new(
        DMatrix::from_row_slice(n, d, &xs),
        DVector::from_vec(ys),
        task,
    )
}

pub fn write_weights_csv<W: Write>(w: &Weights, mut out: W) -> std::io::Result<()> {
    writeln!(out, "k={},d={}", w.k(), w.d())?;
    for row in w.matrix().row_iter() {
        let vals: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", vals.join(","))?;
    }
    Ok(())
}

pub fn read_weights_csv<R: BufRead>(input: R) -> Result<Weights> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        _ => return Err(QuadError::invalid("weights", "missing `k=..,d=..` header")),
    };
    let mut k = None;
    let mut d = None;
    for part in header.split(',') {
        match part.trim().split_once('=') {
            Some(("k", v)) => k = v.trim().parse::<usize>().ok(),
            Some(("d", v)) => d = v.trim().parse::<usize>().ok(),
            _ => {}
        }
    }
    let (k, d) = match (k, d) {
        (Some(k), Some(d)) => (k, d),
        _ => return Err(QuadError::invalid("weights", "header must be `k=<k>,d=<d>`")),
    };
    let mut vals = Vec::with_capacity(k * d);
    let mut rows = 0;
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| QuadError::invalid("weights", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(&line, idx + 2)?;
        if row.len() != d {
            return Err(QuadError::shape("weights row", d, row.len()));
        }
        vals.extend(row);
        rows += 1;
    }
    if rows != k {
        return Err(QuadError::shape("weights rows", k, rows));
    }
    Weights::new(DMatrix::from_row_slice(k, d, &vals))
}
