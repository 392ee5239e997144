use super::{matmul, Matrix};
use crate::error::{Error, Result};

/// Sweep cap for the cyclic Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal stopping threshold, relative to the Frobenius norm of the input.
const JACOBI_REL_TOL: f64 = 1e-12;
/// Symmetry tolerance accepted by [`sym_eig`].
const SYMMETRY_TOL: f64 = 1e-10;
/// Below this magnitude a component counts as zero for the sign convention.
const SIGN_EPS: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`; its first
    /// non-negligible component is positive.
    pub vectors: Matrix,
    pub sweeps: usize,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(z: &Matrix) -> Result<SymEig> {
    if !z.is_square() {
        return Err(Error::Contract(format!(
            "sym_eig needs a square matrix, got {}x{}",
            z.rows(),
            z.cols()
        )));
    }
    if !z.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Contract("sym_eig input is not symmetric".into()));
    }
    let n = z.rows();
    let mut a = z.clone();
    let mut v = Matrix::identity(n);
    let tol = JACOBI_REL_TOL * z.frobenius_norm_sq().sqrt();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= tol {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-diagonal norm {off:e})"
            )));
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let sign = (0..n)
            .map(|r| v[(r, src)])
            .find(|c| c.abs() > SIGN_EPS)
            .map_or(1.0, f64::signum);
        for r in 0..n {
            vectors[(r, dst)] = sign * v[(r, src)];
        }
    }
    Ok(SymEig {
        values,
        vectors,
        sweeps,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation that annihilates `a[p][q]`: `A ← JᵀAJ`, `V ← VJ`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Singular values in non-increasing order, `min(rows, cols)` of them, from
/// the eigenvalues of the smaller Gram matrix.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(Vec::new());
    }
    let at = a.transpose();
    let gram = if a.rows() <= a.cols() {
        matmul(a, &at)?
    } else {
        matmul(&at, a)?
    };
    let gram = symmetrize(gram);
    let eig = sym_eig(&gram)?;
    let mut sv: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

// Rounding in the Gram product can break exact symmetry.
fn symmetrize(mut g: Matrix) -> Matrix {
    let n = g.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = m;
            g[(j, i)] = m;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_symmetric, randn_matrix, RngStream};

    fn orthogonality_error(q: &Matrix) -> f64 {
        let qtq = matmul(&q.transpose(), q).unwrap();
        qtq.sub(&Matrix::identity(q.rows())).unwrap().max_abs()
    }

    #[test]
    fn diagonal_input() {
        let eig = sym_eig(&Matrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 2.0]);
        let expected = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(eig.vectors, expected);
    }

    #[test]
    fn swap_matrix() {
        let z = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let eig = sym_eig(&z).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        assert!(orthogonality_error(&eig.vectors) < 1e-14);
    }

    #[test]
    fn random_reconstruction() {
        let z = random_symmetric(&mut RngStream::new(7), 8);
        let eig = sym_eig(&z).unwrap();
        let q = &eig.vectors;
        let rebuilt = matmul(&matmul(q, &Matrix::from_diag(&eig.values)).unwrap(), &q.transpose()).unwrap();
        assert!(rebuilt.sub(&z).unwrap().max_abs() <= 1e-8);
        let residual = matmul(&z, q)
            .unwrap()
            .sub(&matmul(q, &Matrix::from_diag(&eig.values)).unwrap())
            .unwrap()
            .max_abs();
        assert!(residual <= 1e-8 * z.max_abs());
        assert!(orthogonality_error(q) <= 1e-8);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sign_convention_first_component_positive() {
        let z = random_symmetric(&mut RngStream::new(70), 6);
        let eig = sym_eig(&z).unwrap();
        for k in 0..6 {
            let first = (0..6).map(|r| eig.vectors[(r, k)]).find(|c| c.abs() > SIGN_EPS).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(Error::Contract(_))));
        let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&asym), Err(Error::Contract(_))));
    }

    #[test]
    fn singular_value_examples() {
        assert_eq!(singular_values(&Matrix::from_diag(&[3.0, 4.0])).unwrap(), vec![4.0, 3.0]);
        assert_eq!(singular_values(&Matrix::zeros(2, 3)).unwrap(), vec![0.0, 0.0]);
        // eigenvalues of AᵀA solve l² - 30 l + 4 = 0
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let disc = (30.0f64 * 30.0 - 16.0).sqrt();
        let hi = ((30.0 + disc) / 2.0).sqrt();
        let lo = ((30.0 - disc) / 2.0).sqrt();
        let sv = singular_values(&a).unwrap();
        assert!((sv[0] - hi).abs() < 1e-12 && (hi - 5.4650).abs() < 1e-4);
        assert!((sv[1] - lo).abs() < 1e-12 && (lo - 0.3660).abs() < 1e-4);
    }

    #[test]
    fn singular_values_tall_and_wide_agree() {
        let a = randn_matrix(&mut RngStream::new(42), 5, 7);
        let wide = singular_values(&a).unwrap();
        let tall = singular_values(&a.transpose()).unwrap();
        assert_eq!(wide.len(), 5);
        for (x, y) in wide.iter().zip(&tall) {
            assert!((x - y).abs() < 1e-10);
        }
        let sum_sq: f64 = wide.iter().map(|s| s * s).sum();
        assert!((sum_sq - a.frobenius_norm_sq()).abs() <= 1e-8 * a.frobenius_norm_sq());
    }
}
