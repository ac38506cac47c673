//! Text matrix and binary PGM formats. Byte layouts are specified in
//! docs/formats.md.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TdsError};
use crate::grid::Grid;

pub const MATRIX_MAGIC: &str = "tds-matrix";
pub const MATRIX_VERSION: &str = "v1";

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> TdsError {
    TdsError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Renders `g` as a matrix file. Values use `{:.16e}`, which round-trips
/// every finite `f64` exactly.
pub fn render_matrix(g: &Grid) -> String {
    let mut out = format!("{MATRIX_MAGIC} {MATRIX_VERSION} {} {}\n", g.rows(), g.cols());
    for i in 0..g.rows() {
        let line: Vec<String> = g.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a matrix file. Lines and columns in errors are 1-based.
pub fn parse_matrix(text: &str) -> Result<Grid> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MATRIX_MAGIC || fields[1] != MATRIX_VERSION {
        return Err(parse_err(
            1,
            1,
            format!("expected header `{MATRIX_MAGIC} {MATRIX_VERSION} <rows> <cols>`"),
        ));
    }
    let dim = |s: &str, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(parse_err(1, 1, format!("invalid {what} `{s}`"))),
        }
    };
    let rows = dim(fields[2], "row count")?;
    let cols = dim(fields[3], "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if seen_rows == rows {
            return Err(parse_err(lineno, 1, format!("extra data after {rows} rows")));
        }
        let mut count = 0;
        for (col, token) in line.split_whitespace().enumerate() {
            let column = col + 1;
            let v: f64 = token
                .parse()
                .map_err(|_| parse_err(lineno, column, format!("invalid number `{token}`")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, column, format!("non-finite value `{token}`")));
            }
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(parse_err(
                lineno,
                count.min(cols) + 1,
                format!("expected {cols} values, found {count}"),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(parse_err(
            text.lines().count() + 1,
            1,
            format!("expected {rows} rows, found {seen_rows}"),
        ));
    }
    Grid::new(rows, cols, data)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Grid> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text)
}

pub fn write_matrix(g: &Grid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_matrix(g))?;
    Ok(())
}

/// A decoded PGM: samples divided by `maxval`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub grid: Grid,
    pub maxval: u16,
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(TdsError::Data("truncated PGM header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(TdsError::Data("bad PGM magic, expected P5".into()));
    }
    let mut pos = 2;
    let field = |name: &str, pos: &mut usize| -> Result<usize> {
        let tok = pgm_token(bytes, pos)?;
        tok.parse::<usize>()
            .map_err(|_| TdsError::Data(format!("invalid PGM {name} `{tok}`")))
    };
    let width = field("width", &mut pos)?;
    let height = field("height", &mut pos)?;
    let maxval = field("maxval", &mut pos)?;
    if width == 0 || height == 0 {
        return Err(TdsError::Data("PGM dimensions must be positive".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(TdsError::Data(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(TdsError::Data("truncated PGM header".into()));
    }
    pos += 1;
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(TdsError::Data(format!(
            "truncated PGM payload: expected {need} bytes, found {}",
            payload.len()
        )));
    }
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(width * height);
    for k in 0..width * height {
        let s = if wide {
            u16::from_be_bytes([payload[2 * k], payload[2 * k + 1]]) as usize
        } else {
            payload[k] as usize
        };
        if s > maxval {
            return Err(TdsError::Data(format!("PGM sample {s} exceeds maxval {maxval}")));
        }
        data.push(s as f64 / scale);
    }
    Ok(PgmImage {
        grid: Grid::new(height, width, data)?,
        maxval: maxval as u16,
    })
}

/// Quantizes `g` to integer samples with round-half-to-even. Values outside
/// `[0, 1]` are an error unless `clamp` is set.
pub fn quantize(g: &Grid, maxval: u16, clamp: bool) -> Result<Vec<u16>> {
    if maxval != 255 && maxval != 65535 {
        return Err(TdsError::Parameter(format!(
            "maxval must be 255 or 65535, got {maxval}"
        )));
    }
    let top = maxval as f64;
    let mut out = Vec::with_capacity(g.len());
    for (k, &v) in g.as_slice().iter().enumerate() {
        let v = if (0.0..=1.0).contains(&v) {
            v
        } else if clamp {
            v.clamp(0.0, 1.0)
        } else {
            return Err(TdsError::Data(format!(
                "value {v} at ({}, {}) outside [0, 1]",
                k / g.cols(),
                k % g.cols()
            )));
        };
        out.push((v * top).round_ties_even() as u16);
    }
    Ok(out)
}

pub fn encode_pgm(g: &Grid, maxval: u16, clamp: bool) -> Result<Vec<u8>> {
    let samples = quantize(g, maxval, clamp)?;
    let mut out = Vec::with_capacity(samples.len() * 2 + 32);
    write!(out, "P5\n{} {}\n{}\n", g.cols(), g.rows(), maxval)?;
    if maxval > 255 {
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.into_iter().map(|s| s as u8));
    }
    Ok(out)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(g: &Grid, maxval: u16, clamp: bool, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(g, maxval, clamp)?)?;
    Ok(())
}
