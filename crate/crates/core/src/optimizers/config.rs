use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EmaConfig, ScaleVariant, DEFAULT_EIG_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Shampoo,
    Soap,
    KlShampoo,
    KlSoap,
    FShampooV1,
    FShampooV2,
    VnShampooV1,
    VnShampooV2,
    Adam,
    Sgd,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Shampoo,
        Variant::Soap,
        Variant::KlShampoo,
        Variant::KlSoap,
        Variant::FShampooV1,
        Variant::FShampooV2,
        Variant::VnShampooV1,
        Variant::VnShampooV2,
        Variant::Adam,
        Variant::Sgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Shampoo => "shampoo",
            Variant::Soap => "soap",
            Variant::KlShampoo => "kl_shampoo",
            Variant::KlSoap => "kl_soap",
            Variant::FShampooV1 => "f_shampoo_v1",
            Variant::FShampooV2 => "f_shampoo_v2",
            Variant::VnShampooV1 => "vn_shampoo_v1",
            Variant::VnShampooV2 => "vn_shampoo_v2",
            Variant::Adam => "adam",
            Variant::Sgd => "sgd",
        }
    }

    /// Variants that keep Kronecker factors.
    pub fn is_kronecker(self) -> bool {
        !matches!(self, Variant::Adam | Variant::Sgd)
    }

    /// Variants that precondition with a rotated per-coordinate diagonal.
    pub fn uses_augmented(self) -> bool {
        matches!(self, Variant::Soap | Variant::KlSoap)
    }

    /// Variants whose factors carry an eigenvalue vector.
    pub fn tracks_eigenvalues(self) -> bool {
        self.is_kronecker() && self != Variant::Soap
    }

    pub(crate) fn scale_variant(self) -> Option<ScaleVariant> {
        match self {
            Variant::FShampooV1 | Variant::VnShampooV1 => Some(ScaleVariant::V1),
            Variant::FShampooV2 | Variant::VnShampooV2 => Some(ScaleVariant::V2),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown optimizer variant '{s}'")))
    }
}

/// How the factor eigenbases are refreshed every `refresh_interval` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisRefresh {
    /// Full eigendecomposition of each factor. Eigenvalues are replaced too.
    Eigen,
    /// One orthogonal-iteration step `Q ← qr(S Q)`; eigenvalues are tracked
    /// by their own moving average every step.
    Qr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub kappa: f64,
    /// Shampoo's root `p`; the other Kronecker variants always use `1/2`.
    pub power: f64,
    pub refresh_interval: usize,
    pub weight_decay: f64,
    pub grafting: bool,
    pub epsilon: f64,
    pub bias_correction: bool,
    pub basis_refresh: BasisRefresh,
    pub init_scale: f64,
    pub eig_floor: f64,
}

impl OptimizerConfig {
    /// Defaults: `γ = 1e-2`, no momentum, `β₂ = 0.05`, no damping, `p = 1/2`,
    /// `T = 1`, no weight decay, `ε = 1e-8`. Shampoo refreshes by
    /// eigendecomposition, every other variant by QR.
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            gamma: 1e-2,
            beta1: 0.0,
            beta2: 0.05,
            kappa: 0.0,
            power: 0.5,
            refresh_interval: 1,
            weight_decay: 0.0,
            grafting: false,
            epsilon: 1e-8,
            bias_correction: false,
            basis_refresh: if variant == Variant::Shampoo {
                BasisRefresh::Eigen
            } else {
                BasisRefresh::Qr
            },
            init_scale: 1.0,
            eig_floor: DEFAULT_EIG_FLOOR,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_beta2(mut self, beta2: f64) -> Self {
        self.beta2 = beta2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma = {} must be positive", self.gamma));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 = {} outside [0, 1)", self.beta1));
        }
        if !(self.beta2 > 0.0 && self.beta2 <= 1.0) {
            return bad(format!("beta2 = {} outside (0, 1]", self.beta2));
        }
        if !(self.kappa >= 0.0) {
            return bad(format!("kappa = {} < 0", self.kappa));
        }
        if self.power != 0.25 && self.power != 0.5 {
            return bad(format!("power = {} not in {{0.25, 0.5}}", self.power));
        }
        if self.refresh_interval == 0 {
            return bad("refresh interval must be >= 1".to_string());
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay = {} < 0", self.weight_decay));
        }
        if self.grafting && self.variant != Variant::Shampoo {
            return bad(format!("grafting is only defined for shampoo, not {}", self.variant));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon = {} < 0", self.epsilon));
        }
        if !(self.init_scale > 0.0) {
            return bad(format!("init scale = {} must be positive", self.init_scale));
        }
        if !(self.eig_floor > 0.0) {
            return bad(format!("eigenvalue floor = {} must be positive", self.eig_floor));
        }
        Ok(())
    }

    pub fn ema(&self) -> EmaConfig {
        EmaConfig {
            beta2: self.beta2,
            kappa: self.kappa,
            eig_floor: self.eig_floor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("KL-Shampoo".parse::<Variant>().unwrap(), Variant::KlShampoo);
        assert!("lion".parse::<Variant>().is_err());
    }

    #[test]
    fn grafting_only_for_shampoo() {
        let mut c = OptimizerConfig::new(Variant::KlShampoo);
        c.grafting = true;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::new(Variant::Shampoo);
        c.grafting = true;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_out_of_range() {
        let base = OptimizerConfig::new(Variant::Sgd);
        assert!(base.clone().with_gamma(0.0).validate().is_err());
        assert!(base.clone().with_beta2(0.0).validate().is_err());
        let mut c = base.clone();
        c.power = 1.0 / 3.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.refresh_interval = 0;
        assert!(c.validate().is_err());
    }
}
