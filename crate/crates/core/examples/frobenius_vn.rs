//! The Frobenius (F-Shampoo) and von Neumann (VN-Shampoo) two-sided
//! variants, both scaling choices, on the MLP task.

use klshampoo::harness::{run_task, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let task = TaskSpec::new(TaskKind::MlpRegression, 2, 300).with_batch(16);
    for v in [
        Variant::FShampooV1,
        Variant::FShampooV2,
        Variant::VnShampooV1,
        Variant::VnShampooV2,
        Variant::KlShampoo,
    ] {
        let mut cfg = OptimizerConfig::new(v).with_gamma(1e-2);
        cfg.kappa = 1e-3;
        let r = run_task(&task, &cfg)?;
        let last = r.last().unwrap();
        println!(
            "{:<16} loss {:.5}{}",
            v.name(),
            last.loss,
            if last.diverged { "  (diverged)" } else { "" }
        );
    }
    Ok(())
}
