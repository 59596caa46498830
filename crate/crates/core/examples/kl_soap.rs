//! KL-SOAP next to SOAP. Both keep an augmented diagonal in a QR-refreshed
//! basis; KL-SOAP takes the basis from the KL factors.

use klshampoo::harness::{run_task, TaskKind, TaskSpec};
use klshampoo::optimizers::{init_state, OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let task = TaskSpec::new(TaskKind::KronQuadratic, 5, 300).with_batch(4);
    for v in [Variant::Soap, Variant::KlSoap] {
        let mut cfg = OptimizerConfig::new(v).with_gamma(0.02);
        cfg.refresh_interval = 10;
        let r = run_task(&task, &cfg)?;
        let mem = init_state(&task.dims, &cfg)?.memory();
        println!(
            "{:<8} final loss {:.3e}   state size {} floats",
            v.name(),
            r.last().unwrap().loss,
            mem.total()
        );
    }
    Ok(())
}
