//! Matrix Market (`.mtx`) reading and writing, densified on load.
//!
//! Supported headers: `%%MatrixMarket matrix {coordinate|array}
//! {real|integer|pattern} {general|symmetric}`. Coordinate indices are
//! 1-based, duplicates are summed, symmetric storage is mirrored and
//! pattern entries become `1.0`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatrixMarketHeader {
    pub layout: Layout,
    pub field: Field,
    pub symmetric: bool,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str) -> Result<MatrixMarketHeader> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <kind> <field> <symmetry>'"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(1, format!("unknown kind '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        "complex" => return Err(Error::UnsupportedField("complex".into())),
        other => return Err(Error::UnsupportedField(other.into())),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::UnsupportedField(format!("symmetry '{other}'"))),
    };
    if layout == Layout::Array && field == Field::Pattern {
        return Err(parse_err(1, "pattern field requires coordinate layout"));
    }
    Ok(MatrixMarketHeader {
        layout,
        field,
        symmetric,
    })
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what}")))
}

fn parse_value(tok: Option<&str>, line: usize) -> Result<f64> {
    let v: f64 = tok
        .ok_or_else(|| parse_err(line, "missing value"))?
        .parse()
        .map_err(|_| parse_err(line, "invalid value"))?;
    if !v.is_finite() {
        return Err(parse_err(line, "non-finite value"));
    }
    Ok(v)
}

/// Parses a Matrix Market stream into a dense matrix.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<DenseMatrix> {
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k + 1, l));
    let header = match lines.next() {
        Some((_, l)) => parse_header(&l?)?,
        None => return Err(parse_err(1, "empty file")),
    };
    // skip comments and blank lines
    let mut body = lines.filter_map(|(k, l)| match l {
        Ok(s) => {
            let t = s.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((k, t.to_string())))
            }
        }
        Err(e) => Some(Err(e)),
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(2, "missing size line"))??;
    let mut it = size.split_whitespace();
    let m = parse_usize(it.next(), size_line, "row count")?;
    let n = parse_usize(it.next(), size_line, "column count")?;
    if m == 0 || n == 0 {
        return Err(parse_err(size_line, "matrix has no entries"));
    }
    if header.symmetric && m != n {
        return Err(parse_err(size_line, "symmetric matrix must be square"));
    }
    let mut data = vec![0.0; m * n];
    match header.layout {
        Layout::Coordinate => {
            let nnz = parse_usize(it.next(), size_line, "entry count")?;
            let mut seen = 0;
            for item in body {
                let (ln, text) = item?;
                if seen == nnz {
                    return Err(parse_err(ln, "more entries than declared"));
                }
                let mut t = text.split_whitespace();
                let i = parse_usize(t.next(), ln, "row index")?;
                let j = parse_usize(t.next(), ln, "column index")?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(parse_err(ln, format!("index ({i}, {j}) out of range")));
                }
                let v = match header.field {
                    Field::Pattern => 1.0,
                    _ => parse_value(t.next(), ln)?,
                };
                let (i, j) = (i - 1, j - 1);
                data[i * n + j] += v;
                if header.symmetric && i != j {
                    data[j * n + i] += v;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(size_line, format!("declared {nnz} entries, found {seen}")));
            }
        }
        Layout::Array => {
            // column-major; symmetric stores the lower triangle only
            let mut slots = Vec::new();
            for j in 0..n {
                let start = if header.symmetric { j } else { 0 };
                for i in start..m {
                    slots.push((i, j));
                }
            }
            let mut k = 0;
            for item in body {
                let (ln, text) = item?;
                for tok in text.split_whitespace() {
                    let &(i, j) = slots.get(k).ok_or_else(|| parse_err(ln, "too many values"))?;
                    let v = parse_value(Some(tok), ln)?;
                    data[i * n + j] = v;
                    if header.symmetric {
                        data[j * n + i] = v;
                    }
                    k += 1;
                }
            }
            if k != slots.len() {
                return Err(parse_err(size_line, format!("expected {} values, found {k}", slots.len())));
            }
        }
    }
    DenseMatrix::from_row_major(m, n, data)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let file = File::open(path)?;
    parse_matrix_market(BufReader::new(file))
}

/// Writes `coordinate real general` with 17 significant digits so values
/// survive a read-back exactly.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to<W: Write>(w: &mut W, a: &DenseMatrix) -> Result<()> {
    let nnz = a.as_slice().iter().filter(|&&v| v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), nnz)?;
    for (i, row) in a.rows_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}
