//! Kronecker products and the row-major flattening convention.
//!
//! Flattening is row-major: `vec(G)[i·cols + j] = G[i, j]`. Under this
//! convention `(A ⊗ B)·vec(G) = vec(A·G·Bᵀ)`, so a Kronecker-factored
//! preconditioner `S_a ⊗ S_b` acts on a matrix gradient as `G ↦ S_a G S_b`
//! for symmetric factors.

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Kronecker product: entry `(i·rows_B + k, j·cols_B + l)` is `A[i,j]·B[k,l]`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DenseMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two vectors.
pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

/// Row-major flattening.
pub fn vec_rowmajor(g: &DenseMatrix) -> Vec<f64> {
    g.as_slice().to_vec()
}

/// Inverse of [`vec_rowmajor`].
pub fn mat(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::ShapeError(format!(
            "vector of length {} cannot be reshaped to {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    DenseMatrix::from_vec(rows, cols, v.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_with_identity_expands_blocks() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let k = kron(&a, &DenseMatrix::identity(2));
        let expected = DenseMatrix::from_rows(&[
            &[1.0, 0.0, 2.0, 0.0],
            &[0.0, 1.0, 0.0, 2.0],
            &[3.0, 0.0, 4.0, 0.0],
            &[0.0, 3.0, 0.0, 4.0],
        ]);
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_of_identities_is_identity() {
        assert_eq!(
            kron(&DenseMatrix::identity(3), &DenseMatrix::identity(2)),
            DenseMatrix::identity(6)
        );
    }

    #[test]
    fn kron_of_diagonals() {
        let k = kron(
            &DenseMatrix::from_diag(&[2.0, 3.0]),
            &DenseMatrix::from_diag(&[5.0, 7.0]),
        );
        assert_eq!(k, DenseMatrix::from_diag(&[10.0, 14.0, 15.0, 21.0]));
    }

    #[test]
    fn vec_is_row_major_and_mat_inverts_it() {
        let g = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let v = vec_rowmajor(&g);
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mat(&v, 2, 2).unwrap(), g);
        assert!(matches!(mat(&v, 3, 2), Err(Error::ShapeError(_))));
    }
}
