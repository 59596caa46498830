//! Divergences between a target second moment `X = H + κI` and a
//! Kronecker-structured preconditioner `S = S_a ⊗ S_b (⊗ S_c)`.
//!
//! * KL (log-determinant): `½(logdet S − logdet X + Tr(X S⁻¹) − n)`
//! * Frobenius: `‖X − S‖_F`
//! * von Neumann: `Tr(X (log X − log S)) − Tr X + Tr S`
//!
//! Kronecker-factored arguments are never expanded for the log-determinant
//! or matrix logarithm; the dense variants exist so both routes can be
//! compared.

use crate::error::{Error, Result};
use crate::linalg::{
    kron, matrix_log, spd_logdet, spectral_apply, sym_eigen, vec_rowmajor, DenseMatrix, Tensor3,
};

/// Empirical second moment `H = E[ggᵀ]` of flattened gradients together with
/// a damping weight `κ`. `dims` lists the Kronecker factor sizes, so
/// `H` is `n×n` with `n = Π dims`.
#[derive(Clone, Debug)]
pub struct SecondMoment {
    h: DenseMatrix,
    kappa: f64,
    dims: Vec<usize>,
    logdet_target: Option<f64>,
}

impl SecondMoment {
    pub fn new(h: DenseMatrix, kappa: f64, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if h.shape() != (n, n) {
            return Err(Error::ShapeError(format!(
                "second moment of shape {:?} does not match factor dims {:?}",
                h.shape(),
                dims
            )));
        }
        if !(kappa >= 0.0) {
            return Err(Error::InvalidInput(format!("damping {kappa} must be >= 0")));
        }
        let mut x = h.clone();
        x.add_diag_mut(kappa);
        let eig = sym_eigen(&x)?;
        let logdet_target = if eig.values.iter().all(|v| *v > 0.0) {
            Some(eig.values.iter().map(|v| v.ln()).sum())
        } else {
            None
        };
        Ok(Self {
            h,
            kappa,
            dims: dims.to_vec(),
            logdet_target,
        })
    }

    /// Mean outer product of row-major flattened matrix samples.
    pub fn from_matrix_samples(samples: &[DenseMatrix], kappa: f64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("empty sample set".to_string()))?;
        let (da, db) = first.shape();
        let flat: Vec<Vec<f64>> = samples.iter().map(vec_rowmajor).collect();
        Self::new(mean_outer(&flat)?, kappa, &[da, db])
    }

    pub fn from_tensor_samples(samples: &[Tensor3], kappa: f64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("empty sample set".to_string()))?;
        let dims = first.dims();
        let flat: Vec<Vec<f64>> = samples.iter().map(|t| t.as_slice().to_vec()).collect();
        Self::new(mean_outer(&flat)?, kappa, &dims)
    }

    /// Like [`SecondMoment::new`] with `κ = 1e-12·Tr(H)/n` when `H` is
    /// singular and `κ = 0` otherwise.
    pub fn with_auto_damping(h: DenseMatrix, dims: &[usize]) -> Result<Self> {
        let plain = Self::new(h, 0.0, dims)?;
        if plain.logdet_target.is_some() {
            return Ok(plain);
        }
        let n = plain.dim() as f64;
        let kappa = 1e-12 * plain.h.trace() / n;
        Self::new(plain.h, kappa, dims)
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    /// `H + κI` as a dense matrix.
    pub fn target(&self) -> DenseMatrix {
        let mut x = self.h.clone();
        x.add_diag_mut(self.kappa);
        x
    }

    /// Contracts `X = H + κI` against the Kronecker product of every factor
    /// except `mode`, leaving a `d_mode × d_mode` matrix:
    /// `C[i, j] = Σ X[(…i…), (…j…)] Π_{m≠mode} F_m[i_m, j_m]`.
    ///
    /// For two factors and `mode = 0` this is `E[G F_b Gᵀ]`.
    pub fn contract(&self, mode: usize, others: &[&DenseMatrix]) -> DenseMatrix {
        assert_eq!(others.len(), self.dims.len() - 1, "one matrix per other mode");
        let k = self.dims.len();
        let n = self.dim();
        let d = self.dims[mode];
        let mut out = DenseMatrix::zeros(d, d);
        let mut ri = vec![0usize; k];
        let mut ci = vec![0usize; k];
        for row in 0..n {
            decode(row, &self.dims, &mut ri);
            for col in 0..n {
                let x = self.h[(row, col)];
                if x == 0.0 {
                    continue;
                }
                decode(col, &self.dims, &mut ci);
                let mut w = x;
                let mut slot = 0;
                for m in 0..k {
                    if m == mode {
                        continue;
                    }
                    w *= others[slot][(ri[m], ci[m])];
                    slot += 1;
                }
                out[(ri[mode], ci[mode])] += w;
            }
        }
        if self.kappa != 0.0 {
            let tr: f64 = others.iter().map(|f| f.trace()).product();
            out.add_diag_mut(self.kappa * tr);
        }
        out
    }
}

fn decode(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for m in (0..dims.len()).rev() {
        out[m] = idx % dims[m];
        idx /= dims[m];
    }
}

fn mean_outer(flat: &[Vec<f64>]) -> Result<DenseMatrix> {
    let n = flat[0].len();
    if flat.iter().any(|v| v.len() != n) {
        return Err(Error::ShapeError("samples differ in shape".to_string()));
    }
    let mut h = DenseMatrix::zeros(n, n);
    for v in flat {
        for i in 0..n {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                h[(i, j)] += v[i] * v[j];
            }
        }
    }
    h.scale_mut(1.0 / flat.len() as f64);
    Ok(h)
}

/// Kronecker-factored preconditioner `S = S_a ⊗ S_b` (optionally `⊗ S_c`).
#[derive(Clone, Debug, PartialEq)]
pub struct KronPrecond {
    pub factors: Vec<DenseMatrix>,
}

impl KronPrecond {
    pub fn new(sa: DenseMatrix, sb: DenseMatrix) -> Self {
        Self {
            factors: vec![sa, sb],
        }
    }

    pub fn tensor(sa: DenseMatrix, sb: DenseMatrix, sc: DenseMatrix) -> Self {
        Self {
            factors: vec![sa, sb, sc],
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    /// Dense `S_a ⊗ S_b (⊗ S_c)`.
    pub fn expand(&self) -> DenseMatrix {
        let mut it = self.factors.iter();
        let first = it.next().expect("at least one factor").clone();
        it.fold(first, |acc, f| kron(&acc, f))
    }

    /// Rescales factors so `Tr(S_k) = d_k` for all but the last factor,
    /// which absorbs the compensating scale. The product is unchanged.
    pub fn trace_normalized(&self) -> Self {
        let mut factors = self.factors.clone();
        let last = factors.len() - 1;
        let mut carry = 1.0;
        for f in factors.iter_mut().take(last) {
            let c = f.rows() as f64 / f.trace();
            f.scale_mut(c);
            carry /= c;
        }
        factors[last].scale_mut(carry);
        Self { factors }
    }

    /// Inverse factors `P_k = S_k⁻¹`, failing unless every factor is SPD.
    pub fn precisions(&self) -> Result<Vec<DenseMatrix>> {
        self.factors.iter().map(spd_inverse).collect()
    }

    fn check_dims(&self, m: &SecondMoment) -> Result<()> {
        if self.dims() != m.dims() {
            return Err(Error::ShapeError(format!(
                "preconditioner dims {:?} do not match second moment dims {:?}",
                self.dims(),
                m.dims()
            )));
        }
        Ok(())
    }
}

fn spd_inverse(s: &DenseMatrix) -> Result<DenseMatrix> {
    let e = sym_eigen(s)?;
    let min = e.values.last().copied().unwrap_or(1.0);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(min));
    }
    let inv: Vec<f64> = e.values.iter().map(|v| 1.0 / v).collect();
    Ok(spectral_apply(&e.basis, &inv))
}

/// Gaussian KL `KL(N(0, H + κI) ‖ N(0, S))` for a Kronecker-factored `S`.
///
/// Returns `+∞` when the target is singular.
pub fn kl_div(m: &SecondMoment, s: &KronPrecond) -> Result<f64> {
    s.check_dims(m)?;
    let n = m.dim() as f64;
    let mut logdet_s = 0.0;
    for f in &s.factors {
        logdet_s += (n / f.rows() as f64) * spd_logdet_checked(f)?;
    }
    let precisions = s.precisions()?;
    let mut p = precisions[0].clone();
    for q in &precisions[1..] {
        p = kron(&p, q);
    }
    let tr = m.h.frobenius_dot(&p) + m.kappa * precisions.iter().map(|q| q.trace()).product::<f64>();
    Ok(finish_kl(m, logdet_s, tr))
}

/// Gaussian KL against an explicit dense SPD matrix.
pub fn kl_div_dense(m: &SecondMoment, s: &DenseMatrix) -> Result<f64> {
    if s.shape() != (m.dim(), m.dim()) {
        return Err(Error::ShapeError(format!(
            "preconditioner of shape {:?} for a {}-dim second moment",
            s.shape(),
            m.dim()
        )));
    }
    let logdet_s = spd_logdet_checked(s)?;
    let p = spd_inverse(s)?;
    let tr = m.h.frobenius_dot(&p) + m.kappa * p.trace();
    Ok(finish_kl(m, logdet_s, tr))
}

fn spd_logdet_checked(s: &DenseMatrix) -> Result<f64> {
    spd_logdet(s)
}

fn finish_kl(m: &SecondMoment, logdet_s: f64, tr: f64) -> f64 {
    match m.logdet_target {
        Some(ld) => 0.5 * (logdet_s - ld + tr - m.dim() as f64),
        None => f64::INFINITY,
    }
}

/// Gradients of [`kl_div`] with respect to the precision factors
/// `P_k = S_k⁻¹`: `½(−(n/d_k)·S_k + C_k)` where `C_k` contracts the target
/// against the other precisions (`E[G P_b Gᵀ]` for `k = a`).
///
/// Both gradients vanish exactly at the two-sided fixed point.
pub fn kl_grad_precision(m: &SecondMoment, s: &KronPrecond) -> Result<Vec<DenseMatrix>> {
    s.check_dims(m)?;
    let n = m.dim() as f64;
    let precisions = s.precisions()?;
    let mut grads = Vec::with_capacity(s.factors.len());
    for (k, sk) in s.factors.iter().enumerate() {
        let others: Vec<&DenseMatrix> = precisions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, p)| p)
            .collect();
        let c = m.contract(k, &others);
        let mut g = sk.scale(-(n / sk.rows() as f64));
        g.axpby_mut(0.5, 0.5, &c);
        grads.push(g);
    }
    Ok(grads)
}

/// `‖(H + κI) − S_a ⊗ S_b‖_F`. Factors need not be SPD.
pub fn frob_obj(m: &SecondMoment, s: &KronPrecond) -> Result<f64> {
    s.check_dims(m)?;
    Ok(m.target().sub(&s.expand()).frobenius_norm())
}

/// von Neumann divergence `Tr(X (log X − log S)) − Tr X + Tr S`, using
/// `log(S_a ⊗ S_b) = log S_a ⊗ I + I ⊗ log S_b`.
pub fn vn_div(m: &SecondMoment, s: &KronPrecond) -> Result<f64> {
    s.check_dims(m)?;
    let x = m.target();
    let x_log_x = target_entropy_term(&x)?;
    let mut cross = 0.0;
    for (k, sk) in s.factors.iter().enumerate() {
        let log_k = matrix_log(sk)?;
        let identities: Vec<DenseMatrix> = s
            .factors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, f)| DenseMatrix::identity(f.rows()))
            .collect();
        let refs: Vec<&DenseMatrix> = identities.iter().collect();
        // partial trace of X onto mode k; κ enters through `contract`
        let partial = m.contract(k, &refs);
        cross += partial.frobenius_dot(&log_k);
    }
    let tr_s: f64 = s.factors.iter().map(|f| f.trace()).product();
    Ok(x_log_x - cross - x.trace() + tr_s)
}

/// von Neumann divergence against an explicit dense SPD matrix.
pub fn vn_div_dense(m: &SecondMoment, s: &DenseMatrix) -> Result<f64> {
    let x = m.target();
    let x_log_x = target_entropy_term(&x)?;
    let log_s = matrix_log(s)?;
    Ok(x_log_x - x.frobenius_dot(&log_s) - x.trace() + s.trace())
}

/// `Tr(X log X)` with the convention `0·log 0 = 0`.
fn target_entropy_term(x: &DenseMatrix) -> Result<f64> {
    let e = sym_eigen(x)?;
    let min = e.values.last().copied().unwrap_or(0.0);
    if min < -1e-12 * e.values.first().copied().unwrap_or(1.0).abs() {
        return Err(Error::NotPositiveDefinite(min));
    }
    Ok(e
        .values
        .iter()
        .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment(h: DenseMatrix, dims: &[usize]) -> SecondMoment {
        SecondMoment::new(h, 0.0, dims).unwrap()
    }

    #[test]
    fn kl_is_zero_at_equality() {
        let sa = DenseMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let sb = DenseMatrix::from_rows(&[&[1.5, -0.2], &[-0.2, 0.7]]);
        let s = KronPrecond::new(sa, sb);
        let m = moment(s.expand(), &[2, 2]);
        assert!(kl_div(&m, &s).unwrap().abs() < 1e-13);
    }

    #[test]
    fn scalar_kl() {
        let m = moment(DenseMatrix::from_diag(&[2.0]), &[1, 1]);
        let s = KronPrecond::new(DenseMatrix::identity(1), DenseMatrix::identity(1));
        let expected = 0.5 * (1.0 - 2f64.ln());
        assert!((kl_div(&m, &s).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.153426).abs() < 1e-6);
    }

    #[test]
    fn two_dim_kl_against_scaled_identity() {
        let m = moment(DenseMatrix::identity(2), &[2, 1]);
        let s = KronPrecond::new(DenseMatrix::from_diag(&[2.0, 2.0]), DenseMatrix::identity(1));
        let expected = 2f64.ln() - 0.5;
        assert!((kl_div(&m, &s).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.193147).abs() < 1e-6);
    }

    #[test]
    fn kl_rejects_indefinite_factor() {
        let m = moment(DenseMatrix::identity(4), &[2, 2]);
        let s = KronPrecond::new(DenseMatrix::from_diag(&[1.0, -1.0]), DenseMatrix::identity(2));
        assert!(matches!(kl_div(&m, &s), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn singular_target_gives_infinite_kl() {
        let m = moment(DenseMatrix::from_diag(&[1.0, 0.0]), &[2, 1]);
        let s = KronPrecond::new(DenseMatrix::identity(2), DenseMatrix::identity(1));
        assert_eq!(kl_div(&m, &s).unwrap(), f64::INFINITY);
        let damped = SecondMoment::with_auto_damping(m.h().clone(), &[2, 1]).unwrap();
        assert!((damped.kappa() - 0.5e-12).abs() < 1e-24);
        assert!(kl_div(&damped, &s).unwrap().is_finite());
    }

    #[test]
    fn precision_gradient_plug_in() {
        let g = DenseMatrix::identity(2);
        let m = SecondMoment::from_matrix_samples(&[g], 0.0).unwrap();
        let s = KronPrecond::new(DenseMatrix::identity(2), DenseMatrix::identity(2));
        let grads = kl_grad_precision(&m, &s).unwrap();
        let expected = DenseMatrix::identity(2).scale(-0.5);
        assert!(grads[0].rel_diff(&expected) < 1e-15);
        assert!(grads[1].rel_diff(&expected) < 1e-15);
    }

    #[test]
    fn frobenius_examples() {
        let m = moment(DenseMatrix::zeros(4, 4), &[2, 2]);
        let s = KronPrecond::new(DenseMatrix::identity(2), DenseMatrix::identity(2));
        assert!((frob_obj(&m, &s).unwrap() - 2.0).abs() < 1e-15);
        let m2 = moment(s.expand(), &[2, 2]);
        assert_eq!(frob_obj(&m2, &s).unwrap(), 0.0);
    }

    #[test]
    fn scalar_vn() {
        let m = moment(DenseMatrix::from_diag(&[2.0]), &[1, 1]);
        let s = KronPrecond::new(DenseMatrix::identity(1), DenseMatrix::identity(1));
        let expected = 2.0 * 2f64.ln() - 1.0;
        assert!((vn_div(&m, &s).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.386294).abs() < 1e-6);
    }

    #[test]
    fn contract_matches_sample_mean() {
        let g1 = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.5, -1.0, 3.0]]);
        let g2 = DenseMatrix::from_rows(&[&[0.0, 1.0, 1.0], &[2.0, 0.0, -1.0]]);
        let m = SecondMoment::from_matrix_samples(&[g1.clone(), g2.clone()], 0.0).unwrap();
        let pb = DenseMatrix::from_rows(&[&[2.0, 0.1, 0.0], &[0.1, 1.0, 0.3], &[0.0, 0.3, 1.5]]);
        let pa = DenseMatrix::from_rows(&[&[1.0, 0.2], &[0.2, 3.0]]);
        let ca = m.contract(0, &[&pb]);
        let expected_a = g1
            .matmul(&pb)
            .matmul_t(&g1)
            .add(&g2.matmul(&pb).matmul_t(&g2))
            .scale(0.5);
        assert!(ca.rel_diff(&expected_a) < 1e-14);
        let cb = m.contract(1, &[&pa]);
        let expected_b = g1
            .t_matmul(&pa.matmul(&g1))
            .add(&g2.t_matmul(&pa.matmul(&g2)))
            .scale(0.5);
        assert!(cb.rel_diff(&expected_b) < 1e-14);
    }
}
