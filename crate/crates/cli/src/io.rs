//! Dataset and link CSV files.
//!
//! Datasets have a header `x_1,…,x_p,y` with an optional trailing
//! `mu_star` column.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sodsim::datagen::LabeledDataset;
use sodsim::experiments::fmt_num;
use sodsim::isotonic::StepLink;
use sodsim::linalg::DenseMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub mu_star: Option<Vec<f64>>,
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let p = headers.iter().take_while(|h| h.starts_with("x_")).count();
    for (j, h) in headers[..p].iter().enumerate() {
        if *h != format!("x_{}", j + 1) {
            return Err(CliError::schema(
                path,
                format!("column {} is `{h}`, expected `x_{}`", j + 1, j + 1),
            ));
        }
    }
    if p == 0 {
        return Err(CliError::schema(path, "no `x_1` column"));
    }
    let rest: Vec<&str> = headers[p..].iter().map(String::as_str).collect();
    let has_mu = match rest.as_slice() {
        ["y"] => false,
        ["y", "mu_star"] => true,
        [] => return Err(CliError::schema(path, "missing `y` column")),
        other => {
            return Err(CliError::schema(
                path,
                format!("expected `y` (and optionally `mu_star`) after x_{p}, found {other:?}"),
            ))
        }
    };

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut mu = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = r + 2;
        let parse = |k: usize| -> CliResult<f64> {
            let raw = record.get(k).unwrap_or("").trim();
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::schema(
                    path,
                    format!("line {line}, column `{}`: bad number {raw:?}", headers[k]),
                )
            })
        };
        for k in 0..p {
            values.push(parse(k)?);
        }
        y.push(parse(p)?);
        if has_mu {
            mu.push(parse(p + 1)?);
        }
    }
    if y.is_empty() {
        return Err(CliError::schema(path, "no data rows"));
    }
    let x = DenseMatrix::new(y.len(), p, values)?;
    Ok(Dataset {
        x,
        y,
        mu_star: has_mu.then_some(mu),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let csv::ErrorKind::Io(io) = e.into_kind() else {
                unreachable!()
            };
            CliError::io(path, io)
        }
        _ => CliError::schema(path, e.to_string()),
    }
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_dataset(path: &Path, data: &LabeledDataset) -> CliResult<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    let header: Vec<String> = (1..=data.x.n_cols()).map(|j| format!("x_{j}")).collect();
    writeln!(out, "{},y,mu_star", header.join(",")).map_err(io)?;
    for (i, row) in data.x.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        fields.push(fmt_num(data.y[i]));
        fields.push(fmt_num(data.mu_star[i]));
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_link(path: &Path, link: &StepLink) -> CliResult<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(out, "knot,level").map_err(io)?;
    for (k, l) in link.knots().iter().zip(link.levels()) {
        writeln!(out, "{},{}", fmt_num(*k), fmt_num(*l)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(out).map_err(io)?;
    out.flush().map_err(io)
}
