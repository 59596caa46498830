//! Brute-force reference solvers.
//!
//! Everything here is deliberately naive: textbook factorizations, dense
//! Kronecker expansions, alternating fixed points, gradient descent and
//! random probing. The solvers are used to check the closed-form estimators
//! and never feed back into them.

pub mod dense;
mod population;
mod solvers;

pub use population::{GradientPopulation, TensorPopulation};
pub use solvers::{
    diag_kl_min, flip_flop_kl, flip_flop_kl_damped, kl_gap, nearest_kron_frobenius,
    one_sided_kl_min, optimal_scale, probe_one_sided, prox_solve, stationarity_residuals,
    symmetric_fd_gradient, vn_closed_form, DiagKlMin, Divergence, FlipFlop, OneSided,
    ProxProblem, Side,
};
