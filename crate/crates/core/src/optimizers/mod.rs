//! Optimizer step functions built on the estimators.
//!
//! A step is split in three parts so the pieces can be inspected alone:
//! [`update_statistics`] advances the second-moment state,
//! [`precondition`] maps a gradient to an update direction, and
//! [`apply_update`] applies weight decay, momentum and the step size.

mod config;
mod state;
mod step;

pub use config::{BasisRefresh, OptimizerConfig, Variant};
pub use state::{init_state, MemoryFootprint, ParamState};
pub use step::{
    apply_update, precondition, step, step_adam, step_f_shampoo_v1, step_f_shampoo_v2,
    step_kl_shampoo, step_kl_soap, step_matrix, step_sgd, step_shampoo, step_soap, step_tensor,
    step_vn_shampoo_v1, step_vn_shampoo_v2, update_statistics,
};
