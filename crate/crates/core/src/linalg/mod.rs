//! Dense kernels for small and medium square matrices.
//!
//! Everything is `f64`, row-major, and pure: no function here mutates its
//! inputs or holds shared state.

mod decomp;
mod kron;
mod matrix;
mod tensor;

pub use decomp::{
    canonicalize_column_signs, matrix_exp, matrix_log, matrix_power_from_eigen, qr_orthonormalize,
    spd_logdet, spectral_apply, sym_eigen, EigenPair, SYMMETRY_TOL,
};
pub(crate) use decomp::{from_nalgebra, to_nalgebra};
pub use kron::{kron, kron_vec, mat, vec_rowmajor};
pub use matrix::{dot, DenseMatrix};
pub use tensor::{Mode, Tensor3};
