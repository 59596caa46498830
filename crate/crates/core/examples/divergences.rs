//! KL, Frobenius and von Neumann divergences between an empirical second
//! moment and a few Kronecker-factored candidates.

use klshampoo::divergence::{frob_obj, kl_div, vn_div, KronPrecond};
use klshampoo::linalg::DenseMatrix;
use klshampoo::oracle::{flip_flop_kl, nearest_kron_frobenius, vn_closed_form, GradientPopulation};

fn main() -> klshampoo::Result<()> {
    let pop = GradientPopulation::mixture(7, 3, 4, 200, 2);
    let m = pop.second_moment(0.0)?;

    let candidates = [
        ("identity", KronPrecond::new(DenseMatrix::identity(3), DenseMatrix::identity(4))),
        ("kl fixed point", flip_flop_kl(&pop, 1e-12, 1000)?.precond),
        ("frobenius optimum", nearest_kron_frobenius(&m)?),
        ("vn closed form", vn_closed_form(&pop)),
    ];
    println!("{:<18} {:>12} {:>12} {:>12}", "candidate", "kl", "frobenius", "vn");
    for (name, s) in &candidates {
        println!(
            "{name:<18} {:>12.5} {:>12.5} {:>12.5}",
            kl_div(&m, s)?,
            frob_obj(&m, s)?,
            vn_div(&m, s)?
        );
    }
    Ok(())
}
