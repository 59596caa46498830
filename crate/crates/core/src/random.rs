//! Seeded random sampling.
//!
//! All randomness in the crate flows through [`seeded_rng`], a ChaCha8
//! stream cipher generator. Its output stream is fixed by the seed alone and
//! does not depend on platform word size or endianness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{qr_orthonormalize, spectral_apply, DenseMatrix, Tensor3};

pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, normal_vec(rng, rows * cols)).expect("sizes match")
}

pub fn normal_tensor(rng: &mut impl Rng, dims: [usize; 3]) -> Tensor3 {
    Tensor3::from_vec(dims, normal_vec(rng, dims.iter().product())).expect("sizes match")
}

/// Haar-like random orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DenseMatrix {
    loop {
        let m = normal_matrix(rng, n, n);
        if let Ok(q) = qr_orthonormalize(&m) {
            return q;
        }
    }
}

/// Random SPD matrix `Q Diag(λ) Qᵀ` with log-uniform eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DenseMatrix {
    let q = random_orthogonal(rng, n);
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let t: f64 = rng.random();
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect();
    spectral_apply(&q, &values)
}
