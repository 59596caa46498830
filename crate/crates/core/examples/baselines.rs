//! SGD and Adam with step decay, as reference points for the other examples.

use klshampoo::harness::{run_task, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let task = TaskSpec::new(TaskKind::SoftmaxClassification, 1, 200);
    let mut sgd = OptimizerConfig::new(Variant::Sgd).with_gamma(0.05);
    sgd.beta1 = 0.9;
    let mut adam = OptimizerConfig::new(Variant::Adam).with_gamma(0.05).with_beta2(0.001);
    adam.beta1 = 0.9;
    adam.bias_correction = true;
    adam.weight_decay = 1e-4;
    for cfg in [sgd, adam] {
        let r = run_task(&task, &cfg)?;
        println!("{:<5} {:.4} -> {:.4}", cfg.variant.name(), r[0].loss, r.last().unwrap().loss);
    }
    Ok(())
}
