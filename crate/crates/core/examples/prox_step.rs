//! One KL factor EMA step against the Newton solution of the proximal
//! subproblem it corresponds to.

use klshampoo::divergence::KronPrecond;
use klshampoo::estimators::{kl_factor_ema_batch, EmaConfig, SpdFactor};
use klshampoo::oracle::{prox_solve, GradientPopulation, ProxProblem};
use klshampoo::random::{random_spd, seeded_rng};

fn main() -> klshampoo::Result<()> {
    let mut rng = seeded_rng(4);
    let pop = GradientPopulation::mixture(4, 3, 4, 64, 2);
    let sa = random_spd(&mut rng, 3, 0.5, 2.0);
    let sb = random_spd(&mut rng, 4, 0.5, 2.0);
    for beta2 in [0.1, 0.3, 1.0] {
        let mut fa = SpdFactor::from_matrix(sa.clone())?;
        let mut fb = SpdFactor::from_matrix(sb.clone())?;
        kl_factor_ema_batch(&mut fa, &mut fb, &pop.samples, &EmaConfig::new(beta2))?;
        let prox = prox_solve(
            &ProxProblem { s_t: KronPrecond::new(sa.clone(), sb.clone()), beta2 },
            &pop,
        )?;
        println!(
            "beta2 {beta2}: relative differences {:.2e} {:.2e}",
            prox.factors[0].rel_diff(&fa.s),
            prox.factors[1].rel_diff(&fb.s)
        );
    }
    Ok(())
}
