//! Kronecker-factored second-moment preconditioners.
//!
//! The crate implements Shampoo, SOAP and their KL-divergence counterparts
//! (KL-Shampoo, KL-SOAP), the Frobenius and von Neumann variants, and Adam /
//! SGD baselines, together with brute-force reference solvers used to check
//! the closed-form estimators and a small deterministic training harness.
//!
//! Layout:
//!
//! * [`linalg`] dense kernels (eigen, QR, Kronecker, unfolding)
//! * [`divergence`] KL, Frobenius and von Neumann objectives
//! * [`estimators`] second-moment EMA rules
//! * [`optimizers`] full step functions and per-parameter state
//! * [`oracle`] independent reference solvers
//! * [`harness`] synthetic tasks, claim suite, comparison runs

pub mod divergence;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod oracle;
pub mod random;

pub use error::{Error, Result};
