//! Three-factor KL-Shampoo: the fixed point on a tensor population, and
//! training on the 2×3×4 tensor quadratic.

use klshampoo::harness::{run_task, tensor_kl_fixed_point, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};
use klshampoo::oracle::TensorPopulation;

fn main() -> klshampoo::Result<()> {
    let pop = TensorPopulation::anisotropic(0, [2, 3, 4], 300);
    let fs = tensor_kl_fixed_point(&pop, 1e-12, 10_000)?;
    for (k, f) in fs.iter().enumerate() {
        let v: Vec<String> = f.values()?.iter().map(|x| format!("{x:.3}")).collect();
        println!("mode {k} eigenvalues {}", v.join(" "));
    }

    let task = TaskSpec::new(TaskKind::Tensor3Quadratic, 0, 300).with_batch(4);
    let mut cfg = OptimizerConfig::new(Variant::KlShampoo).with_gamma(0.1);
    cfg.kappa = 0.3;
    let r = run_task(&task, &cfg)?;
    println!("tensor quadratic loss {:.3e} -> {:.3e}", r[0].loss, r.last().unwrap().loss);
    Ok(())
}
