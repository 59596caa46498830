//! Feeds one gradient stream to each factor EMA rule and prints the
//! trace-normalized left factors next to the covariance that generated
//! the stream.

use klshampoo::estimators::{
    f_shampoo_ema, kl_factor_ema, shampoo_factor_ema, vn_shampoo_ema, EmaConfig, ScaleVariant,
    SpdFactor,
};
use klshampoo::linalg::DenseMatrix;
use klshampoo::oracle::GradientPopulation;

fn normalized(m: &DenseMatrix) -> DenseMatrix {
    m.scale(m.rows() as f64 / m.trace())
}

fn main() -> klshampoo::Result<()> {
    let a = DenseMatrix::from_rows(&[&[3.0, 0.5, 0.0], &[0.5, 1.0, 0.2], &[0.0, 0.2, 0.5]]);
    let b = DenseMatrix::from_rows(&[&[2.0, -0.4], &[-0.4, 0.5]]);
    let pop = GradientPopulation::matrix_normal(1, &a, &b, 4000)?;
    let c = EmaConfig::new(0.02);

    let mut pairs = vec![(SpdFactor::identity(3), SpdFactor::identity(2)); 4];
    for g in &pop.samples {
        let [sh, kl, fr, vn] = &mut pairs[..] else { unreachable!() };
        shampoo_factor_ema(&mut sh.0, &mut sh.1, g, &c)?;
        kl_factor_ema(&mut kl.0, &mut kl.1, g, &c)?;
        f_shampoo_ema(&mut fr.0, &mut fr.1, g, &c, ScaleVariant::V1)?;
        vn_shampoo_ema(&mut vn.0, &mut vn.1, g, &c, ScaleVariant::V1)?;
        // the KL rule reads S_b^{-1} from the eigen cache
        kl.0.refresh_eigen()?;
        kl.1.refresh_eigen()?;
    }
    let truth = normalized(&a);
    for (name, (fa, _)) in ["shampoo", "kl", "frobenius", "von neumann"].iter().zip(&pairs) {
        println!("{name:<12} relative error of S_a: {:.3}", normalized(&fa.s).rel_diff(&truth));
    }
    Ok(())
}
