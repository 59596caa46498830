use super::dense::cholesky;
use crate::divergence::SecondMoment;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Tensor3};
use crate::random::{normal_matrix, normal_tensor, random_spd, seeded_rng};

/// A finite sample of gradients standing in for an expectation.
#[derive(Clone, Debug)]
pub struct GradientPopulation {
    pub samples: Vec<DenseMatrix>,
    pub seed: u64,
}

impl GradientPopulation {
    pub fn new(samples: Vec<DenseMatrix>, seed: u64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("empty population".to_string()))?;
        let shape = first.shape();
        if samples.iter().any(|g| g.shape() != shape) {
            return Err(Error::ShapeError("samples differ in shape".to_string()));
        }
        if samples.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".to_string()));
        }
        Ok(Self { samples, seed })
    }

    /// `n` i.i.d. standard Gaussian `d_a × d_b` samples.
    pub fn gaussian(seed: u64, da: usize, db: usize, n: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let samples = (0..n).map(|_| normal_matrix(&mut rng, da, db)).collect();
        Self { samples, seed }
    }

    /// Matrix-normal samples `G = L_a Z L_bᵀ` with `L_k L_kᵀ` equal to the
    /// given row and column covariances, so `E[vec G vec Gᵀ] = A ⊗ B`.
    pub fn matrix_normal(seed: u64, a: &DenseMatrix, b: &DenseMatrix, n: usize) -> Result<Self> {
        let la = cholesky(a)?;
        let lb = cholesky(b)?;
        let mut rng = seeded_rng(seed);
        let samples = (0..n)
            .map(|_| la.matmul(&normal_matrix(&mut rng, a.rows(), b.rows())).matmul_t(&lb))
            .collect();
        Ok(Self { samples, seed })
    }

    /// Mixture of `components` matrix-normal populations with random SPD
    /// row and column covariances (eigenvalues in `[0.2, 5]`). Its second
    /// moment is a sum of Kronecker products, so no single product fits it.
    pub fn mixture(seed: u64, da: usize, db: usize, n: usize, components: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let chol: Vec<(DenseMatrix, DenseMatrix)> = (0..components.max(1))
            .map(|_| {
                let a = random_spd(&mut rng, da, 0.2, 5.0);
                let b = random_spd(&mut rng, db, 0.2, 5.0);
                (cholesky(&a).expect("SPD"), cholesky(&b).expect("SPD"))
            })
            .collect();
        let samples = (0..n)
            .map(|i| {
                let (la, lb) = &chol[i % chol.len()];
                la.matmul(&normal_matrix(&mut rng, da, db)).matmul_t(lb)
            })
            .collect();
        Self { samples, seed }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.samples[0].shape()
    }

    pub fn second_moment(&self, kappa: f64) -> Result<SecondMoment> {
        SecondMoment::from_matrix_samples(&self.samples, kappa)
    }

    /// `mean G M Gᵀ`.
    pub fn left_mean(&self, m: &DenseMatrix) -> DenseMatrix {
        let (da, _) = self.shape();
        let mut out = DenseMatrix::zeros(da, da);
        for g in &self.samples {
            out.axpby_mut(1.0, 1.0, &g.matmul(m).matmul_t(g));
        }
        out.scale(1.0 / self.len() as f64).symmetrize()
    }

    /// `mean Gᵀ M G`.
    pub fn right_mean(&self, m: &DenseMatrix) -> DenseMatrix {
        let (_, db) = self.shape();
        let mut out = DenseMatrix::zeros(db, db);
        for g in &self.samples {
            out.axpby_mut(1.0, 1.0, &g.t_matmul(&m.matmul(g)));
        }
        out.scale(1.0 / self.len() as f64).symmetrize()
    }
}

/// Tensor-valued counterpart of [`GradientPopulation`].
#[derive(Clone, Debug)]
pub struct TensorPopulation {
    pub samples: Vec<Tensor3>,
    pub seed: u64,
}

impl TensorPopulation {
    pub fn gaussian(seed: u64, dims: [usize; 3], n: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let samples = (0..n).map(|_| normal_tensor(&mut rng, dims)).collect();
        Self { samples, seed }
    }

    /// Samples whose mode-`k` covariance is `L_k L_kᵀ`; the diagonal
    /// scalings make the population anisotropic along every mode.
    pub fn anisotropic(seed: u64, dims: [usize; 3], n: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let scales: Vec<Vec<f64>> = dims
            .iter()
            .map(|&d| (0..d).map(|i| 1.0 + i as f64 * 0.75).collect())
            .collect();
        let samples = (0..n)
            .map(|_| {
                let z = normal_tensor(&mut rng, dims);
                Tensor3::from_fn(dims, |a, b, c| {
                    z.get(a, b, c) * scales[0][a] * scales[1][b] * scales[2][c]
                })
            })
            .collect();
        Self { samples, seed }
    }

    pub fn second_moment(&self, kappa: f64) -> Result<SecondMoment> {
        SecondMoment::from_tensor_samples(&self.samples, kappa)
    }
}
