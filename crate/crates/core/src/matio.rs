//! Plain-text dense matrix format.
//!
//! ```text
//! rows cols
//! v00 v01 ...
//! v10 v11 ...
//! ```
//!
//! Values are row-major and written with 17 significant digits, which is
//! enough for an exact `f64` round trip. The reader accepts any whitespace
//! layout after the header line.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt::Write;

pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(24 * a.len() + 16);
    writeln!(out, "{} {}", a.nrows(), a.ncols()).unwrap();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", a[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.trim_start().splitn(2, '\n');
    let header = lines.next().unwrap_or_default();
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad matrix header `{header}`: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!(
            "matrix header must be `rows cols`, got `{header}`"
        )));
    };
    let body = lines.next().unwrap_or_default();
    let values: Vec<f64> = body
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value `{t}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} values for a {rows}x{cols} matrix, found {}",
            rows * cols,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Serde adapter storing a matrix as its text form.
pub mod text {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_matrix(a))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let s = String::deserialize(d)?;
        parse_matrix(&s).map_err(serde::de::Error::custom)
    }
}

/// Like [`text`] but for `Option<DMatrix<f64>>`.
pub mod text_opt {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        a: &Option<DMatrix<f64>>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match a {
            Some(a) => s.serialize_some(&format_matrix(a)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<DMatrix<f64>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_matrix(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
