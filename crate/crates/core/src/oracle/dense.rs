//! Textbook factorizations used only by the reference solvers, so that the
//! checks do not share code paths with the eigen-based kernels they check.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if !a.is_square() {
        return Err(Error::ShapeError(format!("cholesky of {:?}", a.shape())));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite(d));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub fn cholesky_logdet(a: &DenseMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>())
}

/// Inverse by Gauss–Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if !a.is_square() {
        return Err(Error::ShapeError(format!("inverse of {:?}", a.shape())));
    }
    let mut m = a.clone();
    let mut inv = DenseMatrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("nonempty range");
        if m[(pivot, col)].abs() <= 1e-14 * scale {
            return Err(Error::RankDeficient(m[(pivot, col)].abs() / scale));
        }
        if pivot != col {
            for k in 0..n {
                let (x, y) = (m[(col, k)], m[(pivot, k)]);
                m[(col, k)] = y;
                m[(pivot, k)] = x;
                let (x, y) = (inv[(col, k)], inv[(pivot, k)]);
                inv[(col, k)] = y;
                inv[(pivot, k)] = x;
            }
        }
        let p = m[(col, col)];
        for k in 0..n {
            m[(col, k)] /= p;
            inv[(col, k)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[(r, k)] -= f * m[(col, k)];
                inv[(r, k)] -= f * inv[(col, k)];
            }
        }
    }
    Ok(inv)
}

/// Inverse of a symmetric matrix, symmetrized.
pub fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(gauss_jordan_inverse(a)?.symmetrize())
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return Err(Error::ShapeError(format!(
            "solve with {:?} and rhs of length {}",
            a.shape(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("nonempty range");
        if m[(pivot, col)].abs() <= 1e-14 * scale {
            return Err(Error::RankDeficient(m[(pivot, col)].abs() / scale));
        }
        if pivot != col {
            for k in 0..n {
                let (p, q) = (m[(col, k)], m[(pivot, k)]);
                m[(col, k)] = q;
                m[(pivot, k)] = p;
            }
            x.swap(col, pivot);
        }
        for r in (col + 1)..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[(r, k)] -= f * m[(col, k)];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in (col + 1)..n {
            s -= m[(col, k)] * x[k];
        }
        x[col] = s / m[(col, col)];
    }
    Ok(x)
}

/// `½(logdet S + Tr(X S⁻¹))`, the Gaussian KL without the terms that do not
/// depend on `S`. Finite even when `X` is singular.
pub fn kl_objective(x: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    let logdet = cholesky_logdet(s)?;
    let p = spd_inverse(s)?;
    Ok(0.5 * (logdet + x.frobenius_dot(&p)))
}

/// Full Gaussian KL `½(logdet S − logdet X + Tr(X S⁻¹) − n)`; `+∞` when
/// `X` is not positive definite.
pub fn kl_dense(x: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    let obj = kl_objective(x, s)?;
    match cholesky_logdet(x) {
        Ok(ld) => Ok(obj - 0.5 * ld - 0.5 * x.rows() as f64),
        Err(Error::NotPositiveDefinite(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, -0.2], &[0.5, -0.2, 2.0]])
    }

    #[test]
    fn cholesky_reconstructs() {
        let l = cholesky(&spd()).unwrap();
        assert!(l.matmul_t(&l).rel_diff(&spd()) < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn inverse_and_solve_agree() {
        let a = spd();
        let inv = gauss_jordan_inverse(&a).unwrap();
        assert!(a.matmul(&inv).rel_diff(&DenseMatrix::identity(3)) < 1e-14);
        let b = [1.0, -2.0, 0.5];
        let x = solve(&a, &b).unwrap();
        let back = a.matvec(&x);
        assert!(back.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn singular_inputs_are_rejected() {
        let s = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(gauss_jordan_inverse(&s).is_err());
        assert!(cholesky(&s).is_err());
        assert_eq!(kl_dense(&s, &DenseMatrix::identity(2)).unwrap(), f64::INFINITY);
    }
}
