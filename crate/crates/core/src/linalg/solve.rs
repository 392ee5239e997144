use super::Matrix;
use crate::error::{Error, Result};

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::shape("solve", a.shape(), b.shape()));
    }
    let n = a.rows();
    let m = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[(i, col)].abs().total_cmp(&lu[(j, col)].abs()).then(j.cmp(&i)))
            .expect("non-empty pivot range");
        if lu[(pivot, col)].abs() <= 1e-14 * scale {
            return Err(Error::Numeric(format!("singular system at column {col}")));
        }
        if pivot != col {
            swap_rows(&mut lu, pivot, col);
            swap_rows(&mut x, pivot, col);
        }
        let diag = lu[(col, col)];
        for r in (col + 1)..n {
            let factor = lu[(r, col)] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                lu[(r, c)] -= factor * lu[(col, c)];
            }
            for c in 0..m {
                x[(r, c)] -= factor * x[(col, c)];
            }
        }
    }
    for col in (0..n).rev() {
        let diag = lu[(col, col)];
        for c in 0..m {
            let mut acc = x[(col, c)];
            for k in (col + 1)..n {
                acc -= lu[(col, k)] * x[(k, c)];
            }
            x[(col, c)] = acc / diag;
        }
    }
    if !x.is_finite() {
        return Err(Error::Numeric("solve produced non-finite values".into()));
    }
    Ok(x)
}

/// Determinant via partial-pivoting elimination; zero for singular input.
pub fn determinant(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::shape("determinant", a.shape(), a.shape()));
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[(i, col)].abs().total_cmp(&lu[(j, col)].abs()).then(j.cmp(&i)))
            .expect("non-empty pivot range");
        if lu[(pivot, col)] == 0.0 {
            return Ok(0.0);
        }
        if pivot != col {
            swap_rows(&mut lu, pivot, col);
            det = -det;
        }
        let diag = lu[(col, col)];
        det *= diag;
        for r in (col + 1)..n {
            let factor = lu[(r, col)] / diag;
            for c in col..n {
                lu[(r, c)] -= factor * lu[(col, c)];
            }
        }
    }
    Ok(det)
}

fn swap_rows(m: &mut Matrix, i: usize, j: usize) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for c in 0..cols {
        data.swap(i * cols + c, j * cols + c);
    }
}
