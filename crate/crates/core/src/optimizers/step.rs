use super::config::{BasisRefresh, OptimizerConfig, Variant};
use super::state::ParamState;
use crate::error::{Error, Result};
use crate::estimators::{
    apply_eigenvalue_ema, augmented_eigen_ema, eigenbasis_qr_refresh, f_shampoo_deltas,
    kl_deltas, mode_product, rotate_gradient, shampoo_factor_ema, tensor_kl_deltas, vn_shampoo_deltas,
    vn_tau, SpdFactor,
};
use crate::linalg::{spectral_apply, DenseMatrix, Mode, Tensor3};

/// One optimizer step on a row-major parameter buffer.
///
/// Equivalent to [`update_statistics`], then [`precondition`], then
/// [`apply_update`]. Returns [`Error::Diverged`] if the parameter leaves the
/// finite range.
pub fn step(
    st: &mut ParamState,
    theta: &mut [f64],
    grad: &[f64],
    cfg: &OptimizerConfig,
) -> Result<()> {
    update_statistics(st, grad, cfg)?;
    let u = precondition(st, grad, cfg)?;
    apply_update(st, theta, &u, cfg)
}

/// Matrix convenience wrapper around [`step`].
pub fn step_matrix(
    st: &mut ParamState,
    theta: &mut DenseMatrix,
    g: &DenseMatrix,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_matrix(st, theta.shape())?;
    check_matrix(st, g.shape())?;
    step(st, theta.as_mut_slice(), g.as_slice(), cfg)
}

/// Tensor convenience wrapper around [`step`].
pub fn step_tensor(
    st: &mut ParamState,
    theta: &mut [f64],
    g: &Tensor3,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if st.shape != g.dims().to_vec() {
        return Err(Error::ShapeError(format!(
            "tensor gradient {:?} for a state of shape {:?}",
            g.dims(),
            st.shape
        )));
    }
    step(st, theta, g.as_slice(), cfg)
}

fn check_matrix(st: &ParamState, shape: (usize, usize)) -> Result<()> {
    if st.shape != [shape.0, shape.1] {
        return Err(Error::ShapeError(format!(
            "matrix of shape {:?} for a state of shape {:?}",
            shape, st.shape
        )));
    }
    Ok(())
}

macro_rules! named_step {
    ($(#[$doc:meta])* $name:ident, $variant:expr) => {
        $(#[$doc])*
        pub fn $name(
            st: &mut ParamState,
            theta: &mut DenseMatrix,
            g: &DenseMatrix,
            cfg: &OptimizerConfig,
        ) -> Result<()> {
            st.expect($variant)?;
            if cfg.variant != $variant {
                return Err(Error::StateError(format!(
                    "config is for {}, not {}",
                    cfg.variant, $variant
                )));
            }
            step_matrix(st, theta, g, cfg)
        }
    };
}

named_step!(
    /// Shampoo: factor EMA, eigendecomposition (or QR) every `T` steps,
    /// `u = S_a^{-p} G S_b^{-p}` with optional Adam-norm grafting.
    step_shampoo,
    Variant::Shampoo
);
named_step!(
    /// SOAP: Shampoo factors, QR basis refresh, RMSProp in the eigenbasis.
    step_soap,
    Variant::Soap
);
named_step!(
    /// KL-Shampoo: KL factor EMA, eigenvalue EMA, QR basis refresh.
    step_kl_shampoo,
    Variant::KlShampoo
);
named_step!(
    /// KL-SOAP: KL-Shampoo's factors and bases with SOAP's preconditioning.
    step_kl_soap,
    Variant::KlSoap
);
named_step!(step_f_shampoo_v1, Variant::FShampooV1);
named_step!(step_f_shampoo_v2, Variant::FShampooV2);
named_step!(step_vn_shampoo_v1, Variant::VnShampooV1);
named_step!(step_vn_shampoo_v2, Variant::VnShampooV2);
named_step!(step_adam, Variant::Adam);
named_step!(step_sgd, Variant::Sgd);

fn as_matrix(st: &ParamState, grad: &[f64]) -> Result<DenseMatrix> {
    DenseMatrix::from_vec(st.shape[0], st.shape[1], grad.to_vec())
}

fn as_tensor(st: &ParamState, grad: &[f64]) -> Result<Tensor3> {
    Tensor3::from_vec([st.shape[0], st.shape[1], st.shape[2]], grad.to_vec())
}

fn pair(factors: &mut [SpdFactor]) -> (&mut SpdFactor, &mut SpdFactor) {
    let (a, b) = factors.split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Advances the step counter and every second-moment estimate with `grad`.
pub fn update_statistics(st: &mut ParamState, grad: &[f64], cfg: &OptimizerConfig) -> Result<()> {
    cfg.validate()?;
    st.expect(cfg.variant)?;
    if grad.len() != st.numel() {
        return Err(Error::ShapeError(format!(
            "gradient of length {} for a state of shape {:?}",
            grad.len(),
            st.shape
        )));
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(st.step as usize + 1));
    }
    st.step += 1;
    let refresh = st.step % cfg.refresh_interval as u64 == 0;
    let c = cfg.ema();
    let b2 = cfg.beta2;

    if let Some(v) = st.second_moment.as_mut() {
        for (x, g) in v.iter_mut().zip(grad) {
            *x = (1.0 - b2) * *x + b2 * g * g;
        }
    }
    if st.variant == Variant::Adam {
        for (m, g) in st.momentum.iter_mut().zip(grad) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        return Ok(());
    }
    if st.variant == Variant::Sgd {
        return Ok(());
    }
    if st.shape.len() == 3 {
        let t = as_tensor(st, grad)?;
        return tensor_kl_statistics(st, &t, cfg, refresh);
    }

    let g = as_matrix(st, grad)?;
    let variant = st.variant;
    let (fa, fb) = pair(&mut st.factors);
    match variant {
        Variant::Shampoo | Variant::Soap => {
            shampoo_factor_ema(fa, fb, &g, &c)?;
            if refresh {
                if variant == Variant::Shampoo && cfg.basis_refresh == BasisRefresh::Eigen {
                    fa.refresh_eigen()?;
                    fb.refresh_eigen()?;
                } else {
                    eigenbasis_qr_refresh(fa)?;
                    eigenbasis_qr_refresh(fb)?;
                    if variant == Variant::Shampoo {
                        // the QR path has no separate eigenvalue estimate for
                        // Shampoo; read it off the refreshed basis
                        for f in [&mut *fa, &mut *fb] {
                            let diag = f.basis.t_matmul(&f.s.matmul(&f.basis)).diag();
                            f.values = Some(diag.iter().map(|v| v.max(c.eig_floor)).collect());
                        }
                    }
                }
            }
        }
        _ => {
            let (da, db) = match variant {
                Variant::KlShampoo | Variant::KlSoap => kl_deltas(fa, fb, std::slice::from_ref(&g), &c)?,
                Variant::FShampooV1 | Variant::FShampooV2 => f_shampoo_deltas(
                    fa,
                    fb,
                    std::slice::from_ref(&g),
                    variant.scale_variant().expect("scaled variant"),
                )?,
                Variant::VnShampooV1 | Variant::VnShampooV2 => vn_shampoo_deltas(
                    fa,
                    fb,
                    std::slice::from_ref(&g),
                    variant.scale_variant().expect("scaled variant"),
                )?,
                _ => unreachable!("handled above"),
            };
            fa.s.axpby_mut(1.0 - b2, b2, &da);
            fb.s.axpby_mut(1.0 - b2, b2, &db);
            fa.stale = true;
            fb.stale = true;
            match cfg.basis_refresh {
                BasisRefresh::Qr => {
                    apply_eigenvalue_ema(fa, &da, &c)?;
                    apply_eigenvalue_ema(fb, &db, &c)?;
                    if refresh {
                        eigenbasis_qr_refresh(fa)?;
                        eigenbasis_qr_refresh(fb)?;
                    }
                }
                BasisRefresh::Eigen => {
                    if refresh {
                        fa.refresh_eigen()?;
                        fb.refresh_eigen()?;
                    }
                }
            }
            if let Some(sv) = variant.scale_variant() {
                if matches!(variant, Variant::VnShampooV1 | Variant::VnShampooV2) {
                    st.tau = vn_tau(&st.factors[0], &st.factors[1], sv)?;
                }
            }
        }
    }
    if let Some(d) = st.augmented.as_mut() {
        augmented_eigen_ema(d, &st.factors[0], &st.factors[1], &g, &c)?;
    }
    Ok(())
}

fn tensor_kl_statistics(
    st: &mut ParamState,
    t: &Tensor3,
    cfg: &OptimizerConfig,
    refresh: bool,
) -> Result<()> {
    let c = cfg.ema();
    let deltas = {
        let f = &st.factors;
        tensor_kl_deltas([&f[0], &f[1], &f[2]], std::slice::from_ref(t), &c)?
    };
    for (f, d) in st.factors.iter_mut().zip(&deltas) {
        f.s.axpby_mut(1.0 - c.beta2, c.beta2, d);
        f.stale = true;
        match cfg.basis_refresh {
            BasisRefresh::Qr => {
                apply_eigenvalue_ema(f, d, &c)?;
                if refresh {
                    eigenbasis_qr_refresh(f)?;
                }
            }
            BasisRefresh::Eigen => {
                if refresh {
                    f.refresh_eigen()?;
                }
            }
        }
    }
    Ok(())
}

/// `Q Diag(max(λ + κ, floor)^{-p}) Qᵀ`.
fn damped_root(f: &SpdFactor, p: f64, kappa: f64, floor: f64) -> Result<DenseMatrix> {
    let values: Vec<f64> = f
        .values()?
        .iter()
        .map(|v| (v + kappa).max(floor).powf(-p))
        .collect();
    Ok(spectral_apply(&f.basis, &values))
}

/// The update direction `u` for the current state, before momentum,
/// weight decay and step size. Does not modify the state.
pub fn precondition(st: &ParamState, grad: &[f64], cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    st.expect(cfg.variant)?;
    let floor = cfg.eig_floor;
    match st.variant {
        Variant::Sgd => Ok(grad.to_vec()),
        Variant::Adam => Ok(adam_direction(st, &st.momentum, cfg)),
        _ if st.shape.len() == 3 => tensor_direction(st, &as_tensor(st, grad)?, cfg),
        Variant::Shampoo => {
            let g = as_matrix(st, grad)?;
            let ua = damped_root(&st.factors[0], cfg.power, cfg.kappa, floor)?;
            let ub = damped_root(&st.factors[1], cfg.power, cfg.kappa, floor)?;
            let mut u = ua.matmul(&g).matmul(&ub).into_vec();
            if cfg.grafting {
                let reference = adam_direction(st, grad, cfg);
                graft(&mut u, &reference);
            }
            Ok(u)
        }
        Variant::Soap | Variant::KlSoap => {
            let g = as_matrix(st, grad)?;
            let (fa, fb) = (&st.factors[0], &st.factors[1]);
            let d = &st.augmented.as_ref().expect("allocated by init_state").d;
            let mut hat = rotate_gradient(fa, fb, &g);
            for (h, dv) in hat.as_mut_slice().iter_mut().zip(d) {
                let den = (dv + cfg.epsilon).sqrt();
                *h = if den > 0.0 { *h / den } else { 0.0 };
            }
            Ok(fa.basis.matmul(&hat).matmul_t(&fb.basis).into_vec())
        }
        _ => {
            let g = as_matrix(st, grad)?;
            let (fa, fb) = (&st.factors[0], &st.factors[1]);
            let scale_a = inv_sqrt(fa.values()?, cfg.kappa, floor);
            let scale_b = inv_sqrt(fb.values()?, cfg.kappa, floor);
            // Diag(τ λ_a ⊗ λ_b)^{-1/2}
            let tau = st.tau.powf(-0.5);
            let mut hat = rotate_gradient(fa, fb, &g);
            for i in 0..scale_a.len() {
                for j in 0..scale_b.len() {
                    hat[(i, j)] *= tau * scale_a[i] * scale_b[j];
                }
            }
            Ok(fa.basis.matmul(&hat).matmul_t(&fb.basis).into_vec())
        }
    }
}

fn inv_sqrt(values: &[f64], kappa: f64, floor: f64) -> Vec<f64> {
    values
        .iter()
        .map(|v| 1.0 / (v + kappa).max(floor).sqrt())
        .collect()
}

fn tensor_direction(st: &ParamState, t: &Tensor3, cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    let mut hat = t.clone();
    for mode in Mode::ALL {
        hat = mode_product(&hat, mode, &st.factors[mode.index()].basis.transpose());
    }
    let scales: Vec<Vec<f64>> = st
        .factors
        .iter()
        .map(|f| Ok(inv_sqrt(f.values()?, cfg.kappa, cfg.eig_floor)))
        .collect::<Result<_>>()?;
    let scaled = Tensor3::from_fn(hat.dims(), |a, b, c| {
        hat.get(a, b, c) * scales[0][a] * scales[1][b] * scales[2][c]
    });
    let mut out = scaled;
    for mode in Mode::ALL {
        out = mode_product(&out, mode, &st.factors[mode.index()].basis);
    }
    Ok(out.as_slice().to_vec())
}

/// `m / (√v + ε)` with optional bias correction; `m` is the first moment
/// (or the raw gradient when grafting).
fn adam_direction(st: &ParamState, m: &[f64], cfg: &OptimizerConfig) -> Vec<f64> {
    let v = st.second_moment.as_ref().expect("allocated by init_state");
    let t = st.step.max(1) as i32;
    let (c1, c2) = if cfg.bias_correction {
        let c1 = if st.variant == Variant::Adam {
            1.0 - cfg.beta1.powi(t)
        } else {
            1.0
        };
        (c1, 1.0 - (1.0 - cfg.beta2).powi(t))
    } else {
        (1.0, 1.0)
    };
    m.iter()
        .zip(v)
        .map(|(mi, vi)| {
            let den = (vi / c2).sqrt() + cfg.epsilon;
            if den > 0.0 {
                mi / c1 / den
            } else {
                0.0
            }
        })
        .collect()
}

/// Rescales `u` to the Frobenius norm of `reference`.
fn graft(u: &mut [f64], reference: &[f64]) {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nr = reference.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu > 0.0 {
        let s = nr / nu;
        u.iter_mut().for_each(|x| *x *= s);
    }
}

/// Decoupled weight decay, heavy-ball momentum on `u` (Adam keeps its own
/// first moment), then `θ ← θ − γ m`.
pub fn apply_update(
    st: &mut ParamState,
    theta: &mut [f64],
    u: &[f64],
    cfg: &OptimizerConfig,
) -> Result<()> {
    if theta.len() != u.len() || u.len() != st.momentum.len() {
        return Err(Error::ShapeError(format!(
            "parameter of length {} for a state of shape {:?}",
            theta.len(),
            st.shape
        )));
    }
    if cfg.weight_decay > 0.0 {
        let keep = 1.0 - cfg.gamma * cfg.weight_decay;
        theta.iter_mut().for_each(|x| *x *= keep);
    }
    if st.variant == Variant::Adam {
        for (x, ui) in theta.iter_mut().zip(u) {
            *x -= cfg.gamma * ui;
        }
    } else {
        for ((x, m), ui) in theta.iter_mut().zip(st.momentum.iter_mut()).zip(u) {
            *m = cfg.beta1 * *m + ui;
            *x -= cfg.gamma * *m;
        }
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged(st.step as usize));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::init_state;

    fn g() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[0.5, -1.0, 2.0], &[1.5, 0.25, -0.75]])
    }

    #[test]
    fn fresh_kronecker_variants_take_gradient_steps() {
        for v in [Variant::KlShampoo, Variant::FShampooV1, Variant::FShampooV2, Variant::VnShampooV2] {
            let cfg = OptimizerConfig::new(v).with_gamma(0.1).with_beta2(1e-12);
            let st = init_state(&[2, 3], &cfg).unwrap();
            let u = precondition(&st, g().as_slice(), &cfg).unwrap();
            let diff: f64 = u.iter().zip(g().as_slice()).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff < 1e-14, "{v}");
        }
    }

    #[test]
    fn sgd_step() {
        let cfg = OptimizerConfig::new(Variant::Sgd).with_gamma(0.5);
        let mut st = init_state(&[2, 3], &cfg).unwrap();
        let mut theta = DenseMatrix::zeros(2, 3);
        step_sgd(&mut st, &mut theta, &g(), &cfg).unwrap();
        assert_eq!(theta, g().scale(-0.5));
    }

    #[test]
    fn vn_v1_identity_scale() {
        let cfg = OptimizerConfig::new(Variant::VnShampooV1);
        let mut st = init_state(&[2, 3], &cfg).unwrap();
        st.tau = vn_tau(&st.factors[0], &st.factors[1], crate::estimators::ScaleVariant::V1).unwrap();
        let u = precondition(&st, g().as_slice(), &cfg).unwrap();
        let expected = g().scale(6f64.powf(0.25));
        assert!(DenseMatrix::from_vec(2, 3, u).unwrap().rel_diff(&expected) < 1e-14);
    }

    #[test]
    fn shampoo_power_changes_scale() {
        let mut cfg = OptimizerConfig::new(Variant::Shampoo);
        let mut st = init_state(&[2, 2], &cfg).unwrap();
        for f in st.factors.iter_mut() {
            *f = SpdFactor::from_matrix(DenseMatrix::from_diag(&[4.0, 4.0])).unwrap();
        }
        let g = DenseMatrix::identity(2);
        let half = precondition(&st, g.as_slice(), &cfg).unwrap();
        cfg.power = 0.25;
        let quarter = precondition(&st, g.as_slice(), &cfg).unwrap();
        assert!((half[0] - 0.25).abs() < 1e-15);
        assert!((quarter[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wrong_variant_is_a_state_error() {
        let cfg = OptimizerConfig::new(Variant::Soap);
        let mut st = init_state(&[2, 3], &cfg).unwrap();
        let mut theta = DenseMatrix::zeros(2, 3);
        let err = step_kl_shampoo(&mut st, &mut theta, &g(), &OptimizerConfig::new(Variant::KlShampoo));
        assert!(matches!(err, Err(Error::StateError(_))));
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let cfg = OptimizerConfig::new(Variant::KlShampoo);
        let mut st = init_state(&[2, 3], &cfg).unwrap();
        let mut theta = DenseMatrix::zeros(2, 3);
        let mut bad = g();
        bad.as_mut_slice()[0] = f64::NAN;
        assert!(matches!(
            step_kl_shampoo(&mut st, &mut theta, &bad, &cfg),
            Err(Error::Diverged(1))
        ));
    }
}
