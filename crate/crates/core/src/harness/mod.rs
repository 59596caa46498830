//! Deterministic desk-scale experiments: synthetic tasks, optimizer
//! comparisons and the claim-verification suite.

mod claims;
mod compare;
mod run;
mod task;

pub use claims::{
    desk_config, desk_experiment, desk_task, memory_formula, run_claim, run_claims, run_claims_on,
    tensor_kl_fixed_point, Check, ClaimReport, ClaimResult, DeskOutcome, SeedGrid, TolProfile,
    CLAIM_NAMES, DESK_GAMMAS, DESK_STEPS, DESK_THRESHOLD,
};
pub use compare::{
    compare, compare_config, compare_grid, csv_path, parse_config, CompareSummary, RunSettings,
    RunSpec, RunSummary, DEFAULT_THRESHOLD,
};

pub use run::{parse_csv, records_to_csv, run_task, run_task_detailed, write_csv, RunOutcome, RunRecord, CSV_HEADER};
pub use task::{
    build_problem, KronQuadratic, MlpRegression, Problem, Softmax, TaskKind, TaskSpec,
    Tensor3Quadratic, MAX_TASK_DIM, SPECTRUM,
};
