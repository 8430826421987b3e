//! Field serialization: CSV-long (`p,q,t_index,value`) and NDJSON (a
//! metadata line followed by one object per site).
//!
//! Doubles are written in shortest round-trip form, so `load(save(f)) == f`
//! bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FunctionalField, SpatialGrid, TimeGrid};
use crate::wavelet::MultiscaleCoefficients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    Csv,
    Ndjson,
}

impl FieldFormat {
    /// Picks the format from a file extension (`.csv`, `.ndjson`/`.jsonl`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(FieldFormat::Csv),
            "ndjson" | "jsonl" => Some(FieldFormat::Ndjson),
            _ => None,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            FieldFormat::Csv => "csv",
            FieldFormat::Ndjson => "ndjson",
        }
    }
}

impl FromStr for FieldFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv-long" => Ok(FieldFormat::Csv),
            "ndjson" => Ok(FieldFormat::Ndjson),
            other => Err(Error::Validation(format!("unknown field format `{other}`"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    s1: usize,
    s2: usize,
    depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    j0: Option<u32>,
}

#[derive(Serialize)]
struct SiteOut<'a> {
    p: usize,
    q: usize,
    curve: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteIn {
    p: usize,
    q: usize,
    curve: Vec<Option<f64>>,
}

pub fn save_field(field: &FunctionalField, path: &Path, format: FieldFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        FieldFormat::Csv => write_csv(field, &mut out),
        FieldFormat::Ndjson => write_ndjson(
            field.values(),
            Metadata {
                s1: field.grid().rows(),
                s2: field.grid().cols(),
                depth: field.time().depth(),
                j0: None,
            },
            &mut out,
        ),
    }
    .map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_field(path: &Path, format: FieldFormat) -> Result<FunctionalField> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        FieldFormat::Csv => read_csv(reader, path),
        FieldFormat::Ndjson => {
            let (meta, values) = read_ndjson(reader, path)?;
            if meta.j0.is_some() {
                return Err(Error::Validation(
                    "file holds wavelet coefficients, not a curve field".into(),
                ));
            }
            FunctionalField::new(
                SpatialGrid::new(meta.s1, meta.s2)?,
                TimeGrid::new(meta.depth)?,
                values,
            )
        }
    }
}

/// Writes coefficients as NDJSON with `j0` in the metadata line.
pub fn save_coefficients(coeffs: &MultiscaleCoefficients, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_ndjson(
        coeffs.coeffs(),
        Metadata {
            s1: coeffs.grid().rows(),
            s2: coeffs.grid().cols(),
            depth: coeffs.depth(),
            j0: Some(coeffs.j0()),
        },
        &mut out,
    )
    .map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_coefficients(path: &Path) -> Result<MultiscaleCoefficients> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (meta, values) = read_ndjson(BufReader::new(file), path)?;
    let j0 = meta
        .j0
        .ok_or_else(|| Error::Validation("coefficient file metadata lacks `j0`".into()))?;
    MultiscaleCoefficients::new(
        SpatialGrid::new(meta.s1, meta.s2)?,
        TimeGrid::new(meta.depth)?,
        j0,
        values,
    )
}

fn write_csv(field: &FunctionalField, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "p,q,t_index,value")?;
    for ((p, q, m), v) in field.values().indexed_iter() {
        writeln!(out, "{p},{q},{m},{v:?}")?;
    }
    Ok(())
}

fn read_csv(reader: impl BufRead, path: &Path) -> Result<FunctionalField> {
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == "p,q,t_index,value" => {}
        Some((_, Ok(h))) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `p,q,t_index,value`, got `{h}`"),
            })
        }
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 columns, found {}", parts.len()),
            });
        }
        let idx = |s: &str, name: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid {name} `{s}`"),
            })
        };
        let value: f64 = parts[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid value `{}`", parts[3]),
        })?;
        if !value.is_finite() {
            return Err(Error::Validation(format!(
                "line {lineno}: non-finite value `{}`",
                parts[3]
            )));
        }
        rows.push((idx(parts[0], "p")?, idx(parts[1], "q")?, idx(parts[2], "t_index")?, value));
    }
    if rows.is_empty() {
        return Err(Error::Shape("no data rows".into()));
    }
    let s1 = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let s2 = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let nt = rows.iter().map(|r| r.2).max().unwrap() + 1;
    if !nt.is_power_of_two() || nt < 2 {
        return Err(Error::Shape(format!(
            "time axis has {nt} samples; a power of two >= 2 is required"
        )));
    }
    let time = TimeGrid::new(nt.trailing_zeros())?;
    let grid = SpatialGrid::new(s1, s2)?;
    if rows.len() != s1 * s2 * nt {
        return Err(Error::Shape(format!(
            "expected {} rows for a {s1}x{s2}x{nt} field, found {}",
            s1 * s2 * nt,
            rows.len()
        )));
    }
    let mut values = Array3::from_elem((s1, s2, nt), f64::NAN);
    let mut seen = Array3::from_elem((s1, s2, nt), false);
    for (p, q, m, v) in rows {
        if std::mem::replace(&mut seen[[p, q, m]], true) {
            return Err(Error::Shape(format!("duplicate entry (p={p}, q={q}, t={m})")));
        }
        values[[p, q, m]] = v;
    }
    if let Some(((p, q, m), _)) = seen.indexed_iter().find(|(_, s)| !**s) {
        return Err(Error::Shape(format!("missing entry (p={p}, q={q}, t={m})")));
    }
    FunctionalField::new(grid, time, values)
}

fn write_ndjson(values: &Array3<f64>, meta: Metadata, out: &mut impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, &meta)?;
    writeln!(out)?;
    let (s1, s2, _) = values.dim();
    for p in 0..s1 {
        for q in 0..s2 {
            let curve: Vec<f64> = values.slice(ndarray::s![p, q, ..]).to_vec();
            serde_json::to_writer(
                &mut *out,
                &SiteOut {
                    p,
                    q,
                    curve: &curve,
                },
            )?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn read_ndjson(reader: impl BufRead, path: &Path) -> Result<(Metadata, Array3<f64>)> {
    let mut lines = reader.lines().enumerate();
    let meta: Metadata = match lines.next() {
        Some((_, Ok(l))) => serde_json::from_str(&l).map_err(|e| Error::Parse {
            line: 1,
            message: format!("bad metadata line: {e}"),
        })?,
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let grid = SpatialGrid::new(meta.s1, meta.s2)?;
    let time = TimeGrid::new(meta.depth)?;
    let nt = time.len();
    let mut values = Array3::from_elem((grid.rows(), grid.cols(), nt), 0.0);
    let mut seen = ndarray::Array2::from_elem((grid.rows(), grid.cols()), false);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let site: SiteIn = serde_json::from_str(&line).map_err(|e| {
            if line.contains("NaN") || line.contains("Infinity") {
                Error::Validation(format!("line {lineno}: non-finite curve value"))
            } else {
                Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                }
            }
        })?;
        if site.p >= grid.rows() || site.q >= grid.cols() {
            return Err(Error::Shape(format!(
                "line {lineno}: site ({}, {}) outside {}x{} grid",
                site.p,
                site.q,
                grid.rows(),
                grid.cols()
            )));
        }
        if site.curve.len() != nt {
            return Err(Error::Shape(format!(
                "line {lineno}: curve has {} samples, expected {nt}",
                site.curve.len()
            )));
        }
        if std::mem::replace(&mut seen[[site.p, site.q]], true) {
            return Err(Error::Shape(format!(
                "line {lineno}: duplicate site ({}, {})",
                site.p, site.q
            )));
        }
        for (m, v) in site.curve.into_iter().enumerate() {
            match v {
                Some(v) if v.is_finite() => values[[site.p, site.q, m]] = v,
                _ => {
                    return Err(Error::Validation(format!(
                        "line {lineno}: non-finite curve value at t_index {m}"
                    )))
                }
            }
        }
    }
    if let Some(((p, q), _)) = seen.indexed_iter().find(|(_, s)| !**s) {
        return Err(Error::Shape(format!("missing site ({p}, {q})")));
    }
    Ok((meta, values))
}
