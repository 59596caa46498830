//! A single harness run written as CSV, then read back.

use klshampoo::harness::{parse_csv, records_to_csv, run_task, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let task = TaskSpec::new(TaskKind::KronQuadratic, 0, 20).with_batch(0);
    let cfg = OptimizerConfig::new(Variant::KlShampoo).with_gamma(0.1);
    let csv = records_to_csv(&run_task(&task, &cfg)?, false);
    print!("{csv}");
    let back = parse_csv(&csv)?;
    assert_eq!(records_to_csv(&back, false), csv);
    Ok(())
}
