//! The brute-force reference solvers on one population: the one-sided KL
//! minimizer against gradient descent, the two-sided flip-flop, and the
//! KL gap between the two.

use klshampoo::oracle::{flip_flop_kl, kl_gap, one_sided_kl_min, probe_one_sided, GradientPopulation, Side};

fn main() -> klshampoo::Result<()> {
    let pop = GradientPopulation::mixture(11, 4, 3, 500, 3);

    for side in [Side::A, Side::B] {
        let o = one_sided_kl_min(&pop, side)?;
        println!(
            "one-sided {side:?}: closed form vs descent gap {:.2e} after {} iterations, probe margin {:.2e}",
            o.rel_gap,
            o.iterations,
            probe_one_sided(&pop, side, 50, 3)?
        );
    }

    let ff = flip_flop_kl(&pop, 1e-12, 1000)?;
    println!("flip-flop: {} sweeps, residuals {:.1e} {:.1e}", ff.sweeps, ff.residuals.0, ff.residuals.1);
    for (k, obj) in ff.objective.iter().enumerate().take(6) {
        println!("  sweep {k}: {obj:.10}");
    }

    let (two, one) = kl_gap(&pop)?;
    println!("KL after optimal scaling: two-sided {two:.5}, one-sided {one:.5}");
    Ok(())
}
