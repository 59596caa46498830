//! SGD against KL-Shampoo on the Kronecker quadratic, each with its own
//! step size. Writes CSVs and summary.json to a directory (default: a
//! fresh directory under the system temp dir).

use klshampoo::harness::{compare, RunSpec, TaskKind, TaskSpec};
use klshampoo::optimizers::{OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("klshampoo-compare"));
    let task = TaskSpec::new(TaskKind::KronQuadratic, 0, 400).with_batch(0);
    let mut kl = OptimizerConfig::new(Variant::KlShampoo).with_gamma(0.3);
    kl.kappa = 0.3;
    let runs: Vec<RunSpec> = [
        OptimizerConfig::new(Variant::Sgd).with_gamma(0.3),
        OptimizerConfig::new(Variant::Sgd).with_gamma(0.1),
        kl,
    ]
    .into_iter()
    .map(|cfg| RunSpec { task: task.clone(), cfg, threshold: 1e-6 })
    .collect();
    let summary = compare(&runs, &out)?;
    for r in &summary.runs {
        println!(
            "{:<36} gamma {:<5} final {:.3e} steps to 1e-6 {:?}",
            r.file,
            r.gamma,
            r.final_loss.unwrap_or(f64::NAN),
            r.steps_to_threshold
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
