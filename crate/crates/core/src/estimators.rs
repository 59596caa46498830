//! Second-moment estimation rules.
//!
//! Every rule is an exponential moving average `X ← (1−β₂)X + β₂Δ` that
//! differs only in the increment `Δ`. Two-factor rules are Jacobi-style:
//! both increments are formed from the factors as they were before the call,
//! then both factors are updated.
//!
//! Inverses `P_k = S_k⁻¹` are never formed by inverting `S_k`. They come
//! from the factor's cached (possibly stale) eigenpair,
//! `P_k = Q_k Diag(max(λ_k, floor)⁻¹) Q_kᵀ`.
//!
//! Each rule has a single-gradient form and a `_batch` form that uses the
//! mean increment over a slice of gradients.

use crate::error::{Error, Result};
use crate::linalg::{
    qr_orthonormalize, spectral_apply, sym_eigen, DenseMatrix, EigenPair, Mode, Tensor3,
};

pub const DEFAULT_EIG_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmaConfig {
    pub beta2: f64,
    pub kappa: f64,
    pub eig_floor: f64,
}

impl EmaConfig {
    pub fn new(beta2: f64) -> Self {
        Self {
            beta2,
            kappa: 0.0,
            eig_floor: DEFAULT_EIG_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput(format!(
                "beta2 = {} outside [0, 1]",
                self.beta2
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidInput(format!("kappa = {} < 0", self.kappa)));
        }
        if !(self.eig_floor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eig_floor = {} must be > 0",
                self.eig_floor
            )));
        }
        Ok(())
    }
}

/// One Kronecker factor with its eigen cache.
///
/// `values` is `None` for variants that never track factor eigenvalues
/// (SOAP keeps only the basis).
#[derive(Clone, Debug, PartialEq)]
pub struct SpdFactor {
    pub s: DenseMatrix,
    pub basis: DenseMatrix,
    pub values: Option<Vec<f64>>,
    /// `s` has changed since the eigen cache was last refreshed.
    pub stale: bool,
}

impl SpdFactor {
    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `S = cI`, `Q = I`, `λ = c·1`.
    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut s = DenseMatrix::identity(n);
        s.scale_mut(c);
        Self {
            s,
            basis: DenseMatrix::identity(n),
            values: Some(vec![c; n]),
            stale: false,
        }
    }

    /// Factor without an eigenvalue cache.
    pub fn basis_only(n: usize, c: f64) -> Self {
        Self {
            values: None,
            ..Self::scaled_identity(n, c)
        }
    }

    /// Factor with a fresh exact eigen cache of `s`.
    pub fn from_matrix(s: DenseMatrix) -> Result<Self> {
        let e = sym_eigen(&s)?;
        Ok(Self {
            s,
            basis: e.basis,
            values: Some(e.values),
            stale: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    pub fn eigen(&self) -> Result<EigenPair> {
        Ok(EigenPair {
            basis: self.basis.clone(),
            values: self.values()?.to_vec(),
        })
    }

    pub fn values(&self) -> Result<&[f64]> {
        self.values
            .as_deref()
            .ok_or_else(|| Error::StateError("factor has no eigenvalue cache".to_string()))
    }

    /// Replaces the eigen cache by a full eigendecomposition of `s`.
    pub fn refresh_eigen(&mut self) -> Result<()> {
        let e = sym_eigen(&self.s)?;
        self.basis = e.basis;
        self.values = Some(e.values);
        self.stale = false;
        Ok(())
    }

    /// `Q Diag(max(λ, floor)^p) Qᵀ` from the cache.
    pub fn cached_power(&self, p: f64, floor: f64) -> Result<DenseMatrix> {
        let values = self.values()?;
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::NotPositiveDefinite(*v));
        }
        let powered: Vec<f64> = values.iter().map(|v| v.max(floor).powf(p)).collect();
        Ok(spectral_apply(&self.basis, &powered))
    }

    /// `P = S⁻¹` approximated from the cache.
    pub fn precision(&self, floor: f64) -> Result<DenseMatrix> {
        self.cached_power(-1.0, floor)
    }

    /// `S` reconstructed from the cache.
    pub fn reconstructed(&self) -> Result<DenseMatrix> {
        Ok(spectral_apply(&self.basis, self.values()?))
    }

    fn ema(&mut self, delta: &DenseMatrix, beta2: f64) {
        self.s.axpby_mut(1.0 - beta2, beta2, delta);
        self.s = self.s.symmetrize();
        self.stale = true;
    }
}

/// Augmented eigenvalues: one second-moment entry per coordinate of the
/// rotated gradient `vec(Q_aᵀ G Q_b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDiag {
    pub d: Vec<f64>,
}

impl AugmentedDiag {
    pub fn zeros(n: usize) -> Self {
        Self { d: vec![0.0; n] }
    }
}

fn check_pair(fa: &SpdFactor, fb: &SpdFactor, gs: &[DenseMatrix]) -> Result<()> {
    if gs.is_empty() {
        return Err(Error::InvalidInput("no gradients given".to_string()));
    }
    for g in gs {
        if g.shape() != (fa.dim(), fb.dim()) {
            return Err(Error::ShapeError(format!(
                "gradient {:?} does not match factors {}x{}",
                g.shape(),
                fa.dim(),
                fb.dim()
            )));
        }
    }
    Ok(())
}

/// `(mean G M_b Gᵀ, mean Gᵀ M_a G)`.
fn sandwich_means(
    gs: &[DenseMatrix],
    ma: &DenseMatrix,
    mb: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix) {
    let (da, db) = gs[0].shape();
    let mut left = DenseMatrix::zeros(da, da);
    let mut right = DenseMatrix::zeros(db, db);
    for g in gs {
        left.axpby_mut(1.0, 1.0, &g.matmul(mb).matmul_t(g));
        right.axpby_mut(1.0, 1.0, &g.t_matmul(&ma.matmul(g)));
    }
    let inv_n = 1.0 / gs.len() as f64;
    left.scale_mut(inv_n);
    right.scale_mut(inv_n);
    (left.symmetrize(), right.symmetrize())
}

/// `(mean G Gᵀ, mean Gᵀ G)`.
pub fn gram_means(gs: &[DenseMatrix]) -> (DenseMatrix, DenseMatrix) {
    let (da, db) = gs[0].shape();
    sandwich_means(gs, &DenseMatrix::identity(da), &DenseMatrix::identity(db))
}

/// Shampoo: `S_a ← (1−β₂)S_a + β₂ G Gᵀ`, `S_b ← (1−β₂)S_b + β₂ Gᵀ G`.
pub fn shampoo_factor_ema(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    g: &DenseMatrix,
    c: &EmaConfig,
) -> Result<()> {
    shampoo_factor_ema_batch(fa, fb, std::slice::from_ref(g), c)
}

pub fn shampoo_factor_ema_batch(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
) -> Result<()> {
    c.validate()?;
    check_pair(fa, fb, gs)?;
    let (da, db) = gram_means(gs);
    fa.ema(&da, c.beta2);
    fb.ema(&db, c.beta2);
    Ok(())
}

/// KL increments `Δ_a = mean G P_b Gᵀ / d_b`, `Δ_b = mean Gᵀ P_a G / d_a`
/// with `P_k` taken from the eigen caches.
pub fn kl_deltas(
    fa: &SpdFactor,
    fb: &SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_pair(fa, fb, gs)?;
    let pa = fa.precision(c.eig_floor)?;
    let pb = fb.precision(c.eig_floor)?;
    let (mut da, mut db) = sandwich_means(gs, &pa, &pb);
    da.scale_mut(1.0 / fb.dim() as f64);
    db.scale_mut(1.0 / fa.dim() as f64);
    Ok((da, db))
}

/// KL-Shampoo factor EMA with Jacobi-style increments from [`kl_deltas`].
pub fn kl_factor_ema(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    g: &DenseMatrix,
    c: &EmaConfig,
) -> Result<()> {
    kl_factor_ema_batch(fa, fb, std::slice::from_ref(g), c)
}

pub fn kl_factor_ema_batch(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
) -> Result<()> {
    c.validate()?;
    let (da, db) = kl_deltas(fa, fb, gs, c)?;
    fa.ema(&da, c.beta2);
    fb.ema(&db, c.beta2);
    Ok(())
}

/// `λ ← (1−β₂)λ + β₂ diag(Qᵀ Δ Q)`, floored.
pub fn apply_eigenvalue_ema(f: &mut SpdFactor, delta: &DenseMatrix, c: &EmaConfig) -> Result<()> {
    let projected = f.basis.t_matmul(&delta.matmul(&f.basis)).diag();
    let values = f
        .values
        .as_mut()
        .ok_or_else(|| Error::StateError("factor has no eigenvalue cache".to_string()))?;
    for (l, p) in values.iter_mut().zip(projected) {
        *l = ((1.0 - c.beta2) * *l + c.beta2 * p).max(c.eig_floor);
    }
    Ok(())
}

/// Eigenvalue EMA in the stale eigenbasis using KL increments. Factors'
/// `s` are left untouched; returns the new eigenvalue vectors.
pub fn eigenvalue_ema_kl(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    g: &DenseMatrix,
    c: &EmaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    eigenvalue_ema_kl_batch(fa, fb, std::slice::from_ref(g), c)
}

pub fn eigenvalue_ema_kl_batch(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    c.validate()?;
    let (da, db) = kl_deltas(fa, fb, gs, c)?;
    apply_eigenvalue_ema(fa, &da, c)?;
    apply_eigenvalue_ema(fb, &db, c)?;
    Ok((fa.values()?.to_vec(), fb.values()?.to_vec()))
}

/// One step of orthogonal iteration: `Q ← qr(S Q)`. Eigenvalues are left
/// as they are.
pub fn eigenbasis_qr_refresh(f: &mut SpdFactor) -> Result<()> {
    if !f.s.is_finite() {
        return Err(Error::InvalidInput("factor has non-finite entries".to_string()));
    }
    f.basis = qr_orthonormalize(&f.s.matmul(&f.basis))?;
    Ok(())
}

/// `vec(Q_aᵀ G Q_b)`.
pub fn rotate_gradient(fa: &SpdFactor, fb: &SpdFactor, g: &DenseMatrix) -> DenseMatrix {
    fa.basis.t_matmul(&g.matmul(&fb.basis))
}

/// `d ← (1−β₂)d + β₂ mean ĝ^⊙2` with `ĝ = vec(Q_aᵀ G Q_b)`.
pub fn augmented_eigen_ema(
    d: &mut AugmentedDiag,
    fa: &SpdFactor,
    fb: &SpdFactor,
    g: &DenseMatrix,
    c: &EmaConfig,
) -> Result<()> {
    augmented_eigen_ema_batch(d, fa, fb, std::slice::from_ref(g), c)
}

pub fn augmented_eigen_ema_batch(
    d: &mut AugmentedDiag,
    fa: &SpdFactor,
    fb: &SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
) -> Result<()> {
    c.validate()?;
    check_pair(fa, fb, gs)?;
    if d.d.len() != fa.dim() * fb.dim() {
        return Err(Error::ShapeError(format!(
            "augmented diagonal of length {} for a {}x{} parameter",
            d.d.len(),
            fa.dim(),
            fb.dim()
        )));
    }
    let mut mean_sq = vec![0.0; d.d.len()];
    for g in gs {
        let hat = rotate_gradient(fa, fb, g);
        for (m, v) in mean_sq.iter_mut().zip(hat.as_slice()) {
            *m += v * v;
        }
    }
    let inv_n = 1.0 / gs.len() as f64;
    for (x, m) in d.d.iter_mut().zip(mean_sq) {
        *x = (1.0 - c.beta2) * *x + c.beta2 * m * inv_n;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleVariant {
    V1,
    V2,
}

/// Frobenius increments. v1: `G S_b Gᵀ / Tr(S_b²)`; v2 uses the cached
/// eigenpair, `G Q_b Diag(λ_b) Q_bᵀ Gᵀ / Σλ_b²`.
pub fn f_shampoo_deltas(
    fa: &SpdFactor,
    fb: &SpdFactor,
    gs: &[DenseMatrix],
    variant: ScaleVariant,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_pair(fa, fb, gs)?;
    let (ma, mb, na, nb) = match variant {
        ScaleVariant::V1 => (
            fa.s.clone(),
            fb.s.clone(),
            fa.s.frobenius_dot(&fa.s),
            fb.s.frobenius_dot(&fb.s),
        ),
        ScaleVariant::V2 => {
            let sq = |f: &SpdFactor| -> Result<f64> {
                Ok(f.values()?.iter().map(|v| v * v).sum())
            };
            (fa.reconstructed()?, fb.reconstructed()?, sq(fa)?, sq(fb)?)
        }
    };
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::DegenerateScale(format!(
            "squared factor norms {na:.3e}, {nb:.3e}"
        )));
    }
    let (mut da, mut db) = sandwich_means(gs, &ma, &mb);
    da.scale_mut(1.0 / nb);
    db.scale_mut(1.0 / na);
    Ok((da, db))
}

pub fn f_shampoo_ema(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    g: &DenseMatrix,
    c: &EmaConfig,
    variant: ScaleVariant,
) -> Result<()> {
    f_shampoo_ema_batch(fa, fb, std::slice::from_ref(g), c, variant)
}

pub fn f_shampoo_ema_batch(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
    variant: ScaleVariant,
) -> Result<()> {
    c.validate()?;
    let (da, db) = f_shampoo_deltas(fa, fb, gs, variant)?;
    fa.ema(&da, c.beta2);
    fb.ema(&db, c.beta2);
    Ok(())
}

/// von Neumann increments. v1: `G Gᵀ`, `Gᵀ G`; v2 divides by `Σλ_b`
/// (resp. `Σλ_a`) from the caches.
pub fn vn_shampoo_deltas(
    fa: &SpdFactor,
    fb: &SpdFactor,
    gs: &[DenseMatrix],
    variant: ScaleVariant,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_pair(fa, fb, gs)?;
    let (mut da, mut db) = gram_means(gs);
    if variant == ScaleVariant::V2 {
        let sa: f64 = fa.values()?.iter().sum();
        let sb: f64 = fb.values()?.iter().sum();
        if !(sa > 0.0) || !(sb > 0.0) {
            return Err(Error::DegenerateScale(format!(
                "eigenvalue sums {sa:.3e}, {sb:.3e}"
            )));
        }
        da.scale_mut(1.0 / sb);
        db.scale_mut(1.0 / sa);
    }
    Ok((da, db))
}

/// Trace scale `τ`: `1/√(Tr S_a Tr S_b)` for v1, `1` for v2.
pub fn vn_tau(fa: &SpdFactor, fb: &SpdFactor, variant: ScaleVariant) -> Result<f64> {
    match variant {
        ScaleVariant::V2 => Ok(1.0),
        ScaleVariant::V1 => {
            let t = fa.s.trace() * fb.s.trace();
            if !(t > 0.0) {
                return Err(Error::DegenerateScale(format!("trace product {t:.3e}")));
            }
            Ok(1.0 / t.sqrt())
        }
    }
}

/// VN-Shampoo factor EMA. Returns `τ` evaluated on the updated factors.
pub fn vn_shampoo_ema(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    g: &DenseMatrix,
    c: &EmaConfig,
    variant: ScaleVariant,
) -> Result<f64> {
    vn_shampoo_ema_batch(fa, fb, std::slice::from_ref(g), c, variant)
}

pub fn vn_shampoo_ema_batch(
    fa: &mut SpdFactor,
    fb: &mut SpdFactor,
    gs: &[DenseMatrix],
    c: &EmaConfig,
    variant: ScaleVariant,
) -> Result<f64> {
    c.validate()?;
    let (da, db) = vn_shampoo_deltas(fa, fb, gs, variant)?;
    fa.ema(&da, c.beta2);
    fb.ema(&db, c.beta2);
    vn_tau(fa, fb, variant)
}

/// Adafactor's diagonal factors: `r_a` tracks row sums of `G^⊙2`, `r_b`
/// tracks column sums divided by the total sum (zero when `G = 0`).
pub fn adafactor_diag_ema(
    ra: &mut [f64],
    rb: &mut [f64],
    g: &DenseMatrix,
    c: &EmaConfig,
) -> Result<()> {
    c.validate()?;
    let (da, db) = g.shape();
    if ra.len() != da || rb.len() != db {
        return Err(Error::ShapeError(format!(
            "factor lengths ({}, {}) for a {}x{} gradient",
            ra.len(),
            rb.len(),
            da,
            db
        )));
    }
    let sq = g.hadamard(g);
    let rows: Vec<f64> = (0..da).map(|i| sq.row(i).iter().sum()).collect();
    let cols: Vec<f64> = (0..db).map(|j| (0..da).map(|i| sq[(i, j)]).sum()).collect();
    let total: f64 = rows.iter().sum();
    for (r, v) in ra.iter_mut().zip(&rows) {
        *r = (1.0 - c.beta2) * *r + c.beta2 * v;
    }
    for (r, v) in rb.iter_mut().zip(&cols) {
        let x = if total > 0.0 { v / total } else { 0.0 };
        *r = (1.0 - c.beta2) * *r + c.beta2 * x;
    }
    Ok(())
}

/// Multiplies mode `mode` of `t` by `m`: the mode index `j` is replaced by
/// `Σ_j m[i, j] t[.., j, ..]`.
pub fn mode_product(t: &Tensor3, mode: Mode, m: &DenseMatrix) -> Tensor3 {
    let unfolded = t.mode_unfold(mode);
    let mut dims = t.dims();
    dims[mode.index()] = m.rows();
    Tensor3::fold(&m.matmul(&unfolded), mode, dims).expect("dims are consistent")
}

/// Three-factor KL increments: for mode `a`,
/// `mean G_(a) (P_b ⊗ P_c) G_(a)ᵀ / (d_b d_c)`, and analogously for `b`, `c`.
pub fn tensor_kl_deltas(
    factors: [&SpdFactor; 3],
    ts: &[Tensor3],
    c: &EmaConfig,
) -> Result<[DenseMatrix; 3]> {
    let dims = [factors[0].dim(), factors[1].dim(), factors[2].dim()];
    if ts.is_empty() {
        return Err(Error::InvalidInput("no gradients given".to_string()));
    }
    if let Some(t) = ts.iter().find(|t| t.dims() != dims) {
        return Err(Error::ShapeError(format!(
            "tensor gradient {:?} does not match factor dims {:?}",
            t.dims(),
            dims
        )));
    }
    let precisions = [
        factors[0].precision(c.eig_floor)?,
        factors[1].precision(c.eig_floor)?,
        factors[2].precision(c.eig_floor)?,
    ];
    let total: usize = dims.iter().product();
    let mut out = dims.map(|d| DenseMatrix::zeros(d, d));
    for t in ts {
        for mode in Mode::ALL {
            let mut y = t.clone();
            for other in Mode::ALL {
                if other != mode {
                    y = mode_product(&y, other, &precisions[other.index()]);
                }
            }
            let k = mode.index();
            out[k].axpby_mut(1.0, 1.0, &t.mode_unfold(mode).matmul_t(&y.mode_unfold(mode)));
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        let rest = (total / dims[k]) as f64;
        o.scale_mut(1.0 / (rest * ts.len() as f64));
        *o = o.symmetrize();
    }
    Ok(out)
}

pub fn tensor_kl_factor_ema(
    factors: [&mut SpdFactor; 3],
    t: &Tensor3,
    c: &EmaConfig,
) -> Result<()> {
    tensor_kl_factor_ema_batch(factors, std::slice::from_ref(t), c)
}

pub fn tensor_kl_factor_ema_batch(
    factors: [&mut SpdFactor; 3],
    ts: &[Tensor3],
    c: &EmaConfig,
) -> Result<()> {
    c.validate()?;
    let [fa, fb, fc] = factors;
    let deltas = tensor_kl_deltas([&*fa, &*fb, &*fc], ts, c)?;
    for (f, d) in [fa, fb, fc].into_iter().zip(&deltas) {
        f.ema(d, c.beta2);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g2() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]])
    }

    #[test]
    fn shampoo_full_replacement_and_freeze() {
        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        shampoo_factor_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(1.0)).unwrap();
        assert_eq!(fa.s, DenseMatrix::from_diag(&[1.0, 4.0]));
        assert_eq!(fb.s, DenseMatrix::from_diag(&[1.0, 4.0]));
        assert!(fa.stale);

        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        shampoo_factor_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(0.0)).unwrap();
        assert_eq!(fa.s, DenseMatrix::identity(2));
    }

    #[test]
    fn shampoo_partial_step() {
        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        let g = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        shampoo_factor_ema(&mut fa, &mut fb, &g, &EmaConfig::new(0.1)).unwrap();
        assert!(fa.s.rel_diff(&DenseMatrix::from_diag(&[1.0, 0.9])) < 1e-15);
    }

    #[test]
    fn kl_full_step_with_identity_partner() {
        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        kl_factor_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(1.0)).unwrap();
        assert_eq!(fa.s, DenseMatrix::from_diag(&[0.5, 2.0]));
    }

    #[test]
    fn kl_rejects_missing_cache() {
        let (mut fa, mut fb) = (SpdFactor::basis_only(2, 1.0), SpdFactor::identity(2));
        assert!(matches!(
            kl_factor_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(0.5)),
            Err(Error::StateError(_))
        ));
    }

    #[test]
    fn eigenvalue_ema_diagonal_case() {
        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        let g = DenseMatrix::from_rows(&[&[3.0, 0.0], &[0.0, -1.5]]);
        let (la, _) = eigenvalue_ema_kl(&mut fa, &mut fb, &g, &EmaConfig::new(1.0)).unwrap();
        assert_eq!(la, vec![4.5, 1.125]);
        assert_eq!(fa.s, DenseMatrix::identity(2));

        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        let (la, lb) = eigenvalue_ema_kl(&mut fa, &mut fb, &g, &EmaConfig::new(0.0)).unwrap();
        assert_eq!((la, lb), (vec![1.0, 1.0], vec![1.0, 1.0]));
    }

    #[test]
    fn qr_refresh_of_identity_factor_is_fixed() {
        let mut f = SpdFactor::identity(3);
        eigenbasis_qr_refresh(&mut f).unwrap();
        assert_eq!(f.basis, DenseMatrix::identity(3));
        assert_eq!(f.values, Some(vec![1.0; 3]));
    }

    #[test]
    fn augmented_ema_in_canonical_basis_is_rmsprop() {
        let (fa, fb) = (SpdFactor::identity(2), SpdFactor::identity(3));
        let g = DenseMatrix::from_rows(&[&[1.0, -2.0, 0.5], &[0.0, 3.0, 1.0]]);
        let mut d = AugmentedDiag::zeros(6);
        augmented_eigen_ema(&mut d, &fa, &fb, &g, &EmaConfig::new(1.0)).unwrap();
        assert_eq!(d.d, vec![1.0, 4.0, 0.25, 0.0, 9.0, 1.0]);
        let before = d.clone();
        augmented_eigen_ema(&mut d, &fa, &fb, &g.scale(7.0), &EmaConfig::new(0.0)).unwrap();
        assert_eq!(d, before);
    }

    #[test]
    fn f_shampoo_v1_full_step() {
        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        f_shampoo_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(1.0), ScaleVariant::V1).unwrap();
        assert_eq!(fa.s, DenseMatrix::from_diag(&[0.5, 2.0]));
    }

    #[test]
    fn vn_variants() {
        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        let tau =
            vn_shampoo_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(1.0), ScaleVariant::V2).unwrap();
        assert_eq!(fa.s, DenseMatrix::from_diag(&[0.5, 2.0]));
        assert_eq!(tau, 1.0);

        let (mut fa, mut fb) = (SpdFactor::identity(2), SpdFactor::identity(2));
        let tau =
            vn_shampoo_ema(&mut fa, &mut fb, &g2(), &EmaConfig::new(1.0), ScaleVariant::V1).unwrap();
        assert_eq!(fa.s, DenseMatrix::from_diag(&[1.0, 4.0]));
        assert_eq!(tau, 1.0 / 5.0);
    }

    #[test]
    fn adafactor_hand_values() {
        let g = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let (mut ra, mut rb) = (vec![0.0; 2], vec![0.0; 2]);
        adafactor_diag_ema(&mut ra, &mut rb, &g, &EmaConfig::new(1.0)).unwrap();
        assert_eq!(ra, vec![5.0, 25.0]);
        assert_eq!(rb, vec![10.0 / 30.0, 20.0 / 30.0]);

        let (mut ra, mut rb) = (vec![1.0; 2], vec![1.0; 2]);
        adafactor_diag_ema(&mut ra, &mut rb, &DenseMatrix::zeros(2, 2), &EmaConfig::new(0.5))
            .unwrap();
        assert_eq!((ra, rb), (vec![0.5; 2], vec![0.5; 2]));
    }

    #[test]
    fn tensor_identity_factors_full_step() {
        let t = Tensor3::from_fn([2, 3, 2], |a, b, c| (a + 2 * b) as f64 - c as f64 * 0.5);
        let mut f = [SpdFactor::identity(2), SpdFactor::identity(3), SpdFactor::identity(2)];
        let [fa, fb, fc] = &mut f;
        tensor_kl_factor_ema([fa, fb, fc], &t, &EmaConfig::new(1.0)).unwrap();
        let ua = t.mode_unfold(Mode::A);
        let expected = ua.matmul_t(&ua).scale(1.0 / 6.0);
        assert!(f[0].s.rel_diff(&expected) < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(EmaConfig::new(1.5).validate().is_err());
        let mut c = EmaConfig::new(0.5);
        c.eig_floor = 0.0;
        assert!(c.validate().is_err());
    }
}
