//! Flat text table format for measures.
//!
//! ```text
//! dim=2 split=1,1,0
//! 0.5 0.1 -0.3
//! 0.5 1.2 0.7
//! ```
//!
//! Each row is `weight x_1 ... x_d`. Numbers are written in shortest
//! round-trip form, so reading a written measure gives it back bit for bit.

use std::io::{BufRead, Write};

use super::{EmpiricalMeasure, Split};
use crate::error::{Error, Result};

pub fn write_measure<W: Write>(mu: &EmpiricalMeasure, mut out: W) -> Result<()> {
    let s = mu.split();
    writeln!(
        out,
        "dim={} split={},{},{}",
        mu.dim(),
        s.initial,
        s.terminal,
        s.action
    )?;
    let mut line = String::new();
    for (w, p) in mu.atoms() {
        line.clear();
        line.push_str(&format!("{w:?}"));
        for x in p {
            line.push(' ');
            line.push_str(&format!("{x:?}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<(usize, Split)> {
    let mut dim = None;
    let mut split = None;
    for field in line.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("expected key=value, got `{field}`")))?;
        match key {
            "dim" => {
                dim = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| parse_err(1, format!("dim: {e}")))?,
                )
            }
            "split" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|v| v.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(1, format!("split: {e}")))?;
                if parts.len() != 3 {
                    return Err(parse_err(1, "split needs three components"));
                }
                split = Some(Split::new(parts[0], parts[1], parts[2]));
            }
            other => return Err(parse_err(1, format!("unknown header key `{other}`"))),
        }
    }
    let dim = dim.ok_or_else(|| parse_err(1, "missing dim"))?;
    let split = split.unwrap_or(Split::flat(dim));
    if split.dim() != dim {
        return Err(parse_err(1, "split does not add up to dim"));
    }
    Ok((dim, split))
}

pub fn read_measure<R: BufRead>(input: R) -> Result<EmpiricalMeasure> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header"))??;
    let (dim, split) = parse_header(&header)?;
    let mut weights = Vec::new();
    let mut points = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if values.len() != dim + 1 {
            return Err(parse_err(
                lineno,
                format!("expected {} numbers, found {}", dim + 1, values.len()),
            ));
        }
        weights.push(values[0]);
        points.extend_from_slice(&values[1..]);
    }
    if weights.is_empty() {
        return Err(Error::EmptySupport);
    }
    let n = weights.len();
    let uniform = weights.iter().all(|&w| w == 1.0 / n as f64);
    let mu = if uniform {
        EmpiricalMeasure::uniform(points, dim)?
    } else {
        EmpiricalMeasure::new(points, dim, weights)?
    };
    mu.with_split(split)
}
