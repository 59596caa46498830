//! SOAP: Adam-style second moments in the Shampoo eigenbasis, refreshed by
//! one QR step every 10 iterations.

use klshampoo::harness::{run_task, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let task = TaskSpec::new(TaskKind::MlpRegression, 0, 400).with_batch(8);
    let mut cfg = OptimizerConfig::new(Variant::Soap).with_gamma(3e-3);
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.05;
    cfg.refresh_interval = 10;
    let r = run_task(&task, &cfg)?;
    for rec in r.iter().step_by(50) {
        println!("step {:>4}  loss {:.5}  |grad| {:.4}", rec.step, rec.loss, rec.grad_norm);
    }
    Ok(())
}
