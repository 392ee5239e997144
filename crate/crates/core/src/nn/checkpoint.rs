//! Versioned plain-text tensor container.
//!
//! ```text
//! bsdb-tensors v1
//! tensor <name> <rows> <cols>
//! <row 0 values, space separated, 17 significant digits>
//! ...
//! end
//! ```
//!
//! Values are written in `{:.16e}` form, which round-trips every finite `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &str = "bsdb-tensors v1";

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (name, m) in tensors {
        let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

pub fn decode_tensors(text: &str) -> Result<Vec<(String, Matrix)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::Data(format!("missing header {MAGIC:?}"))),
    }
    let mut out = Vec::new();
    loop {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::Data("truncated: missing `end`".into()))?;
        let line = line.trim();
        if line == "end" {
            break;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Data(format!("line {}: malformed tensor header {line:?}", lineno + 1));
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(bad());
        }
        let rows: usize = parts[2].parse().map_err(|_| bad())?;
        let cols: usize = parts[3].parse().map_err(|_| bad())?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rl, row) = lines
                .next()
                .ok_or_else(|| Error::Data(format!("tensor {}: truncated", parts[1])))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| {
                    Error::Data(format!("line {}: bad number {tok:?}", rl + 1))
                })?);
            }
            if data.len() - before != cols {
                return Err(Error::Data(format!(
                    "line {}: expected {cols} values",
                    rl + 1
                )));
            }
        }
        out.push((parts[1].to_string(), Matrix::new(rows, cols, data)?));
    }
    Ok(out)
}

/// Removes and returns the tensor called `name`.
pub fn take_tensor(tensors: &mut Vec<(String, Matrix)>, name: &str) -> Result<Matrix> {
    let pos = tensors
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Data(format!("missing tensor {name:?}")))?;
    Ok(tensors.remove(pos).1)
}
