//! Stacked-CSV file format for observation stacks, plus plain CSV matrices
//! for decomposition outputs.
//!
//! A stack file is UTF-8 with LF line endings:
//!
//! ```text
//! # p=<int> q=<int> n=<int> kind=<poisson|bernoulli|exponential|gaussian> [sigma2=<real>]
//! <q comma-separated values>   (p rows)
//! <blank line>
//! <next block...>              (n blocks total, one blank line between blocks)
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! write/read cycle reproduces the in-memory stack exactly.

use crate::error::{Error, Result};
use crate::expfam::{DistributionKind, LinkMode};
use crate::stack::MatrixStack;
use ndarray::Array2;
use std::fmt::Write as _;
use std::path::Path;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn format_matrix(out: &mut String, m: &Array2<f64>) {
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
}

/// Render a stack in the stacked-CSV format.
pub fn render_stack(stack: &MatrixStack) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "# p={} q={} n={} kind={}",
        stack.p(),
        stack.q(),
        stack.n(),
        stack.kind().name()
    );
    if let DistributionKind::Gaussian { sigma2 } = stack.kind() {
        let _ = write!(out, " sigma2={sigma2}");
    }
    out.push('\n');
    for (i, m) in stack.matrices().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        format_matrix(&mut out, m);
    }
    out
}

pub fn write_stack(path: &Path, stack: &MatrixStack) -> Result<()> {
    std::fs::write(path, render_stack(stack))?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize, usize, DistributionKind)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "header must start with '#'"))?
        .trim();
    let mut p = None;
    let mut q = None;
    let mut n = None;
    let mut kind_name = None;
    let mut sigma2 = None;
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header token '{token}'")))?;
        match key {
            "p" => p = Some(parse_usize(value, "p")?),
            "q" => q = Some(parse_usize(value, "q")?),
            "n" => n = Some(parse_usize(value, "n")?),
            "kind" => kind_name = Some(value.to_string()),
            "sigma2" => {
                sigma2 = Some(value.parse::<f64>().map_err(|_| {
                    parse_err(1, format!("sigma2 value '{value}' is not a number"))
                })?)
            }
            other => return Err(parse_err(1, format!("unknown header key '{other}'"))),
        }
    }
    let p = p.ok_or_else(|| parse_err(1, "header missing p"))?;
    let q = q.ok_or_else(|| parse_err(1, "header missing q"))?;
    let n = n.ok_or_else(|| parse_err(1, "header missing n"))?;
    let kind = match (kind_name.as_deref(), sigma2) {
        (Some("poisson"), None) => DistributionKind::Poisson,
        (Some("bernoulli"), None) => DistributionKind::Bernoulli,
        (Some("exponential"), None) => DistributionKind::Exponential,
        (Some("gaussian"), Some(s2)) => DistributionKind::Gaussian { sigma2: s2 },
        (Some("gaussian"), None) => {
            return Err(parse_err(1, "kind=gaussian requires sigma2=<real>"))
        }
        (Some(other), _) => return Err(parse_err(1, format!("unknown kind '{other}'"))),
        (None, _) => return Err(parse_err(1, "header missing kind")),
    };
    if sigma2.is_some() && !matches!(kind, DistributionKind::Gaussian { .. }) {
        return Err(parse_err(1, "sigma2 is only valid for kind=gaussian"));
    }
    Ok((p, q, n, kind))
}

fn parse_usize(value: &str, key: &str) -> Result<usize> {
    let v: usize = value
        .parse()
        .map_err(|_| parse_err(1, format!("{key} value '{value}' is not a positive integer")))?;
    if v == 0 {
        return Err(parse_err(1, format!("{key} must be positive")));
    }
    Ok(v)
}

/// Parse the stacked-CSV format. The returned stack uses the mean link; use
/// [`MatrixStack::with_link`] to switch.
pub fn parse_stack(text: &str) -> Result<MatrixStack> {
    // The final newline terminates the last row; it is not a blank line.
    let text = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = text.split('\n').enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let (p, q, n, kind) = parse_header(header)?;

    let mut matrices: Vec<Array2<f64>> = Vec::with_capacity(n);
    let mut current: Vec<f64> = Vec::with_capacity(p * q);
    let mut rows_in_block = 0usize;
    let mut expecting_blank = false;

    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.is_empty() {
            if expecting_blank {
                expecting_blank = false;
                continue;
            }
            return Err(parse_err(
                line_no,
                format!(
                    "unexpected blank line ({} complete blocks, {} rows into the next)",
                    matrices.len(),
                    rows_in_block
                ),
            ));
        }
        if expecting_blank {
            return Err(parse_err(
                line_no,
                "expected exactly one blank line between blocks",
            ));
        }
        if matrices.len() == n {
            return Err(parse_err(
                line_no,
                format!("found data beyond the {n} blocks declared in the header"),
            ));
        }
        let values: Vec<&str> = raw.split(',').collect();
        if values.len() != q {
            return Err(parse_err(
                line_no,
                format!("expected {q} comma-separated values, found {}", values.len()),
            ));
        }
        for v in values {
            let parsed: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("'{v}' is not a number")))?;
            current.push(parsed);
        }
        rows_in_block += 1;
        if rows_in_block == p {
            let m = Array2::from_shape_vec((p, q), std::mem::take(&mut current))
                .expect("row count was checked");
            matrices.push(m);
            rows_in_block = 0;
            current = Vec::with_capacity(p * q);
            expecting_blank = matrices.len() < n;
        }
    }

    if rows_in_block != 0 {
        return Err(parse_err(
            0,
            format!("file ended {rows_in_block} rows into an incomplete block"),
        ));
    }
    if matrices.len() != n {
        return Err(parse_err(
            0,
            format!("header declares n={n} blocks but file has {}", matrices.len()),
        ));
    }
    MatrixStack::new(matrices, kind, LinkMode::Mean)
}

pub fn read_stack(path: &Path) -> Result<MatrixStack> {
    let text = std::fs::read_to_string(path)?;
    parse_stack(&text)
}

/// Plain CSV matrix: one row per line, shortest round-trip floats.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    format_matrix(&mut out, m);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for v in line.split(',') {
            row.push(
                v.trim()
                    .parse()
                    .map_err(|_| parse_err(idx + 1, format!("'{v}' is not a number")))?,
            );
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(idx + 1, "ragged rows"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "empty matrix file"));
    }
    let q = rows[0].len();
    let p = rows.len();
    Ok(Array2::from_shape_vec((p, q), rows.concat()).expect("rectangular by construction"))
}
