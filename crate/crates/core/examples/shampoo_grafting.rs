//! Shampoo with p = 1/4 and Adam grafting on the softmax task.

use klshampoo::harness::{run_task, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let task = TaskSpec::new(TaskKind::SoftmaxClassification, 3, 300).with_batch(0);
    for (power, grafting, gamma) in [(0.5, false, 0.01), (0.25, true, 0.05), (0.25, false, 0.05)] {
        let mut cfg = OptimizerConfig::new(Variant::Shampoo).with_gamma(gamma);
        cfg.power = power;
        cfg.grafting = grafting;
        cfg.refresh_interval = 10;
        let r = run_task(&task, &cfg)?;
        println!(
            "p={power:<4} grafting={grafting:<5} loss {:.4} -> {:.4}",
            r[0].loss,
            r.last().unwrap().loss
        );
    }
    Ok(())
}
