//! Symmetric eigendecomposition, QR orthonormalization and spectral matrix
//! functions. The factorizations themselves are delegated to `nalgebra`;
//! this module owns ordering, sign conventions and error reporting.

use nalgebra::DMatrix;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`sym_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix. Columns of `basis` are orthonormal and
/// `values` is sorted non-increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub basis: DenseMatrix,
    pub values: Vec<f64>,
}

impl EigenPair {
    /// The identity eigenpair `(I_n, 1)`.
    pub fn identity(n: usize) -> Self {
        Self {
            basis: DenseMatrix::identity(n),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `basis · Diag(values) · basisᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        spectral_apply(&self.basis, &self.values)
    }
}

pub(crate) fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `Q · Diag(values) · Qᵀ`.
pub fn spectral_apply(basis: &DenseMatrix, values: &[f64]) -> DenseMatrix {
    let n = basis.rows();
    assert_eq!(basis.cols(), values.len(), "basis/values length mismatch");
    let scaled = DenseMatrix::from_fn(n, values.len(), |i, j| basis[(i, j)] * values[j]);
    scaled.matmul_t(basis).symmetrize()
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back in descending order; equal eigenvalues keep the
/// order produced by the underlying solver.
pub fn sym_eigen(s: &DenseMatrix) -> Result<EigenPair> {
    if !s.is_square() {
        return Err(Error::ShapeError(format!(
            "sym_eigen needs a square matrix, got {:?}",
            s.shape()
        )));
    }
    if !s.is_finite() {
        return Err(Error::InvalidInput(
            "matrix has non-finite entries".to_string(),
        ));
    }
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let n = s.rows();
    if n == 0 {
        return Ok(EigenPair {
            basis: DenseMatrix::zeros(0, 0),
            values: Vec::new(),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(&s.symmetrize()));
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps solver order for ties
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenPair { basis, values })
}

/// Flips each column so that its largest-magnitude entry is positive.
/// Near-ties resolve to the lowest row index.
pub fn canonicalize_column_signs(q: &mut DenseMatrix) {
    let (rows, cols) = q.shape();
    for j in 0..cols {
        let max = (0..rows).fold(0.0f64, |m, i| m.max(q[(i, j)].abs()));
        if max == 0.0 {
            continue;
        }
        let lead = (0..rows)
            .find(|&i| q[(i, j)].abs() >= max * (1.0 - 1e-9))
            .expect("max is attained");
        if q[(lead, j)] < 0.0 {
            for i in 0..rows {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
}

/// Orthonormalizes the columns of a square matrix by Householder QR and
/// applies the column sign convention of [`canonicalize_column_signs`].
pub fn qr_orthonormalize(m: &DenseMatrix) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(Error::ShapeError(format!(
            "qr_orthonormalize needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput(
            "matrix has non-finite entries".to_string(),
        ));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let qr = to_nalgebra(m).qr();
    let r = qr.r();
    let pivots: Vec<f64> = (0..n).map(|i| r[(i, i)].abs()).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio <= (n as f64) * f64::EPSILON {
        return Err(Error::RankDeficient(ratio));
    }
    let mut q = from_nalgebra(&qr.q());
    canonicalize_column_signs(&mut q);
    Ok(q)
}

/// `basis · Diag(values^⊙p) · basisᵀ`.
pub fn matrix_power_from_eigen(e: &EigenPair, p: f64) -> Result<DenseMatrix> {
    if p == 0.0 {
        return Ok(DenseMatrix::identity(e.dim()));
    }
    let integral = p.fract() == 0.0;
    let mut powered = Vec::with_capacity(e.dim());
    for &v in &e.values {
        let bad = if p < 0.0 {
            v <= 0.0
        } else {
            !integral && v < 0.0
        };
        if bad {
            return Err(Error::SingularPower { value: v, power: p });
        }
        powered.push(v.powf(p));
    }
    Ok(spectral_apply(&e.basis, &powered))
}

/// Log-determinant of an SPD matrix from its eigenvalues.
pub fn spd_logdet(s: &DenseMatrix) -> Result<f64> {
    let e = sym_eigen(s)?;
    let min = e.values.last().copied().unwrap_or(1.0);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(min));
    }
    Ok(e.values.iter().map(|v| v.ln()).sum())
}

/// Principal matrix logarithm of an SPD matrix.
pub fn matrix_log(s: &DenseMatrix) -> Result<DenseMatrix> {
    let e = sym_eigen(s)?;
    let min = e.values.last().copied().unwrap_or(1.0);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(min));
    }
    let logs: Vec<f64> = e.values.iter().map(|v| v.ln()).collect();
    Ok(spectral_apply(&e.basis, &logs))
}

/// Matrix exponential of a symmetric matrix.
pub fn matrix_exp(s: &DenseMatrix) -> Result<DenseMatrix> {
    let e = sym_eigen(s)?;
    let exps: Vec<f64> = e.values.iter().map(|v| v.exp()).collect();
    Ok(spectral_apply(&e.basis, &exps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_eigen() {
        let e = sym_eigen(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0; 3]);
        let qtq = e.basis.t_matmul(&e.basis);
        assert!(qtq.rel_diff(&DenseMatrix::identity(3)) < 1e-12);
        // any permutation/sign of I: every entry is 0 or ±1
        assert!(e
            .basis
            .as_slice()
            .iter()
            .all(|v| v.abs() < 1e-12 || (v.abs() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn diagonal_eigen_is_sorted_descending() {
        let e = sym_eigen(&DenseMatrix::from_diag(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert!((e.basis[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((e.basis[(0, 1)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eigen_rejects_bad_input() {
        let nonsym = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eigen(&nonsym), Err(Error::NotSymmetric(_))));
        let nan = DenseMatrix::from_rows(&[&[f64::NAN, 0.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eigen(&nan), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn qr_of_identity_and_positive_diagonal() {
        assert_eq!(
            qr_orthonormalize(&DenseMatrix::identity(4)).unwrap(),
            DenseMatrix::identity(4)
        );
        let q = qr_orthonormalize(&DenseMatrix::from_diag(&[2.0, 3.0])).unwrap();
        assert!(q.rel_diff(&DenseMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn qr_rejects_rank_deficient() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(qr_orthonormalize(&m), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn diagonal_power() {
        let e = EigenPair {
            basis: DenseMatrix::identity(2),
            values: vec![4.0, 9.0],
        };
        let p = matrix_power_from_eigen(&e, -0.5).unwrap();
        assert!(p.rel_diff(&DenseMatrix::from_diag(&[0.5, 1.0 / 3.0])) < 1e-15);
        assert_eq!(
            matrix_power_from_eigen(&e, 0.0).unwrap(),
            DenseMatrix::identity(2)
        );
    }

    #[test]
    fn power_of_singular_is_rejected() {
        let e = EigenPair {
            basis: DenseMatrix::identity(2),
            values: vec![1.0, 0.0],
        };
        assert!(matches!(
            matrix_power_from_eigen(&e, -1.0),
            Err(Error::SingularPower { .. })
        ));
        let neg = EigenPair {
            basis: DenseMatrix::identity(2),
            values: vec![1.0, -1.0],
        };
        assert!(matrix_power_from_eigen(&neg, 0.5).is_err());
        assert!(matrix_power_from_eigen(&neg, 2.0).is_ok());
    }

    #[test]
    fn logdet_and_log_of_simple_matrices() {
        assert_eq!(spd_logdet(&DenseMatrix::identity(3)).unwrap(), 0.0);
        assert!(matrix_log(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-15);
        let ld = spd_logdet(&DenseMatrix::from_diag(&[2.0, 3.0])).unwrap();
        assert!((ld - 6f64.ln()).abs() < 1e-15);
        let indefinite = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            spd_logdet(&indefinite),
            Err(Error::NotPositiveDefinite(_))
        ));
    }
}
