//! KL-Shampoo on the stochastic Kronecker quadratic: tunes the step size on
//! a small grid, then compares the learned factors with the true Hessian
//! factors A and B.

use klshampoo::harness::{desk_experiment, DESK_GAMMAS};

fn main() -> klshampoo::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = desk_experiment(seed)?;
    println!("seed {seed}, gamma grid {DESK_GAMMAS:?}");
    println!("chosen gamma          {}", out.gamma);
    println!("steps to loss < 1e-6  {:?}", out.steps_to_threshold);
    println!("final loss            {:.3e}", out.final_loss);
    println!(
        "factor errors (A, B)  {:.3} {:.3}",
        out.factor_errors.0, out.factor_errors.1
    );
    Ok(())
}
