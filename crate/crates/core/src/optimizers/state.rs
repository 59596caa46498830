use serde::Serialize;

use super::config::{OptimizerConfig, Variant};
use crate::error::{Error, Result};
use crate::estimators::{AugmentedDiag, SpdFactor};

/// Per-parameter optimizer state. Only the buffers a variant needs are
/// allocated.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamState {
    pub variant: Variant,
    pub shape: Vec<usize>,
    /// One factor per parameter mode; empty for Adam and SGD.
    pub factors: Vec<SpdFactor>,
    /// Augmented eigenvalues (SOAP, KL-SOAP).
    pub augmented: Option<AugmentedDiag>,
    /// Heavy-ball buffer on the preconditioned update; Adam's first moment.
    pub momentum: Vec<f64>,
    /// Elementwise second moment (Adam, or Shampoo's grafting reference).
    pub second_moment: Option<Vec<f64>>,
    /// Latest trace scale (VN-Shampoo v1); `1` otherwise.
    pub tau: f64,
    pub step: u64,
}

/// Element counts of every allocated buffer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MemoryFootprint {
    pub factors: usize,
    pub eigenbases: usize,
    pub eigenvalues: usize,
    pub augmented: usize,
    pub momentum: usize,
    pub second_moment: usize,
}

impl MemoryFootprint {
    pub fn total(&self) -> usize {
        self.factors
            + self.eigenbases
            + self.eigenvalues
            + self.augmented
            + self.momentum
            + self.second_moment
    }
}

/// Allocates identity factors (`S = Q = I·c`, `λ = c·1` with
/// `c = init_scale`), zero augmented diagonal and zero moment buffers.
pub fn init_state(shape: &[usize], cfg: &OptimizerConfig) -> Result<ParamState> {
    cfg.validate()?;
    let v = cfg.variant;
    let unsupported = || Error::UnsupportedShape {
        shape: shape.to_vec(),
        variant: v.name().to_string(),
    };
    match shape.len() {
        2 => {}
        3 if matches!(v, Variant::KlShampoo | Variant::Adam | Variant::Sgd) => {}
        _ => return Err(unsupported()),
    }
    if shape.iter().any(|d| *d == 0) {
        return Err(unsupported());
    }
    let n: usize = shape.iter().product();
    let factors = if v.is_kronecker() {
        shape
            .iter()
            .map(|&d| {
                if v.tracks_eigenvalues() {
                    SpdFactor::scaled_identity(d, cfg.init_scale)
                } else {
                    SpdFactor::basis_only(d, cfg.init_scale)
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let second_moment = (v == Variant::Adam || cfg.grafting).then(|| vec![0.0; n]);
    Ok(ParamState {
        variant: v,
        shape: shape.to_vec(),
        factors,
        augmented: v.uses_augmented().then(|| AugmentedDiag::zeros(n)),
        momentum: vec![0.0; n],
        second_moment,
        tau: 1.0,
        step: 0,
    })
}

impl ParamState {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn memory(&self) -> MemoryFootprint {
        let sq: usize = self.factors.iter().map(|f| f.dim() * f.dim()).sum();
        MemoryFootprint {
            factors: sq,
            eigenbases: sq,
            eigenvalues: self
                .factors
                .iter()
                .filter_map(|f| f.values.as_ref().map(|v| v.len()))
                .sum(),
            augmented: self.augmented.as_ref().map_or(0, |d| d.d.len()),
            momentum: self.momentum.len(),
            second_moment: self.second_moment.as_ref().map_or(0, |v| v.len()),
        }
    }

    pub(crate) fn expect(&self, v: Variant) -> Result<()> {
        if self.variant != v {
            return Err(Error::StateError(format!(
                "state was initialized for {}, not {}",
                self.variant, v
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_shampoo_matrix_state() {
        let st = init_state(&[4, 3], &OptimizerConfig::new(Variant::KlShampoo)).unwrap();
        assert_eq!(st.factors.len(), 2);
        assert_eq!(st.factors[0].s, crate::linalg::DenseMatrix::identity(4));
        assert_eq!(st.factors[1].values, Some(vec![1.0; 3]));
        assert!(st.augmented.is_none());
        assert!(st.second_moment.is_none());
    }

    #[test]
    fn soap_state_has_diag_but_no_eigenvalues() {
        let st = init_state(&[4, 3], &OptimizerConfig::new(Variant::Soap)).unwrap();
        assert_eq!(st.augmented.as_ref().unwrap().d.len(), 12);
        assert!(st.factors.iter().all(|f| f.values.is_none()));
    }

    #[test]
    fn tensor_shapes() {
        let st = init_state(&[2, 3, 4], &OptimizerConfig::new(Variant::KlShampoo)).unwrap();
        let dims: Vec<usize> = st.factors.iter().map(|f| f.dim()).collect();
        assert_eq!(dims, vec![2, 3, 4]);
        let err = init_state(&[2, 3, 4], &OptimizerConfig::new(Variant::Soap));
        assert!(matches!(err, Err(Error::UnsupportedShape { .. })));
        let err = init_state(&[5], &OptimizerConfig::new(Variant::Sgd));
        assert!(matches!(err, Err(Error::UnsupportedShape { .. })));
    }
}
