//! Optimizer state sizes per variant for a 1024×256 weight.

use klshampoo::harness::memory_formula;
use klshampoo::optimizers::{init_state, OptimizerConfig, Variant};

fn main() -> klshampoo::Result<()> {
    let (da, db) = (1024, 256);
    println!("{:<16} {:>10} {:>10} {:>10} {:>10}", "variant", "factors", "eig", "diag", "total");
    for v in Variant::ALL {
        let mut cfg = OptimizerConfig::new(v);
        cfg.grafting = v == Variant::Shampoo;
        let m = init_state(&[da, db], &cfg)?.memory();
        assert_eq!(m.total(), memory_formula(v, da, db, cfg.grafting));
        println!(
            "{:<16} {:>10} {:>10} {:>10} {:>10}",
            v.name(),
            m.factors + m.eigenbases,
            m.eigenvalues,
            m.augmented + m.second_moment,
            m.total()
        );
    }
    Ok(())
}
