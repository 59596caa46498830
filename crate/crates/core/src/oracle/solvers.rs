use rand::Rng;
use rand_distr::StandardNormal;

use super::dense::{cholesky, gauss_jordan_inverse, kl_objective, solve, spd_inverse};
use super::population::GradientPopulation;
use crate::divergence::{KronPrecond, SecondMoment};
use crate::error::{Error, Result};
use crate::estimators::AugmentedDiag;
use crate::linalg::{from_nalgebra, kron, to_nalgebra, DenseMatrix};
use crate::random::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    Kl,
    Frob,
    Vn,
}

/// Output of [`flip_flop_kl`].
#[derive(Clone, Debug)]
pub struct FlipFlop {
    /// Factors normalized so that `Tr(S_a) = d_a`.
    pub precond: KronPrecond,
    pub sweeps: usize,
    /// `½(logdet S + Tr(X S⁻¹))` after every sweep.
    pub objective: Vec<f64>,
    pub residuals: (f64, f64),
}

impl FlipFlop {
    /// `true` if no sweep increased the objective by more than
    /// `slack·|objective|`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objective
            .windows(2)
            .all(|w| w[1] <= w[0] + slack * w[0].abs().max(1.0))
    }
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// `(1/d_b)·(mean G P_b Gᵀ + κ Tr(P_b) I)` and its mirror for side `b`.
fn kl_rhs(pop: &GradientPopulation, kappa: f64, pa: &DenseMatrix, pb: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (da, db) = pop.shape();
    let mut ra = pop.left_mean(pb);
    ra.add_diag_mut(kappa * pb.trace());
    ra.scale_mut(1.0 / db as f64);
    let mut rb = pop.right_mean(pa);
    rb.add_diag_mut(kappa * pa.trace());
    rb.scale_mut(1.0 / da as f64);
    (ra, rb)
}

/// `½(d_b logdet S_a + d_a logdet S_b + Tr(X (P_a ⊗ P_b)))` evaluated
/// sample by sample.
fn kron_kl_objective(pop: &GradientPopulation, kappa: f64, sa: &DenseMatrix, sb: &DenseMatrix) -> Result<f64> {
    let (da, db) = pop.shape();
    let la = cholesky(sa)?;
    let lb = cholesky(sb)?;
    let logdet = |l: &DenseMatrix| 2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>();
    let pa = spd_inverse(sa)?;
    let pb = spd_inverse(sb)?;
    let mut tr = 0.0;
    for g in &pop.samples {
        tr += pa.frobenius_dot(&g.matmul(&pb).matmul_t(g));
    }
    tr /= pop.len() as f64;
    tr += kappa * pa.trace() * pb.trace();
    Ok(0.5 * (db as f64 * logdet(&la) + da as f64 * logdet(&lb) + tr))
}

/// Alternating closed-form updates for the two-sided KL minimizer
/// (matrix-normal maximum likelihood):
/// `S_a ← (1/d_b) mean G S_b⁻¹ Gᵀ`, then `S_b ← (1/d_a) mean Gᵀ S_a⁻¹ G`,
/// until both fixed-point residuals are at most `tol`.
pub fn flip_flop_kl(pop: &GradientPopulation, tol: f64, max_iter: usize) -> Result<FlipFlop> {
    flip_flop_kl_damped(pop, 0.0, tol, max_iter)
}

/// [`flip_flop_kl`] against the damped target `H + κI`.
pub fn flip_flop_kl_damped(
    pop: &GradientPopulation,
    kappa: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FlipFlop> {
    let (da, db) = pop.shape();
    let mut sa = DenseMatrix::identity(da);
    let mut sb = DenseMatrix::identity(db);
    let mut objective = vec![kron_kl_objective(pop, kappa, &sa, &sb)?];
    let mut residuals = (f64::INFINITY, f64::INFINITY);
    for sweep in 1..=max_iter {
        let pb = spd_inverse(&sb)?;
        sa = kl_rhs(pop, kappa, &DenseMatrix::identity(da), &pb).0;
        let pa = spd_inverse(&sa)?;
        sb = kl_rhs(pop, kappa, &pa, &DenseMatrix::identity(db)).1;
        let c = da as f64 / sa.trace();
        sa.scale_mut(c);
        sb.scale_mut(1.0 / c);

        objective.push(kron_kl_objective(pop, kappa, &sa, &sb)?);
        let pa = spd_inverse(&sa)?;
        let pb = spd_inverse(&sb)?;
        let (ra, rb) = kl_rhs(pop, kappa, &pa, &pb);
        residuals = (rel(&sa, &ra), rel(&sb, &rb));
        if residuals.0 <= tol && residuals.1 <= tol {
            return Ok(FlipFlop {
                precond: KronPrecond::new(sa, sb),
                sweeps: sweep,
                objective,
                residuals,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: residuals.0.max(residuals.1),
    })
}

/// Output of [`one_sided_kl_min`].
#[derive(Clone, Debug)]
pub struct OneSided {
    /// `mean G Gᵀ` (side `a`) or `mean Gᵀ G` (side `b`).
    pub closed_form: DenseMatrix,
    /// Minimizer found by gradient descent on a triangular factor.
    pub numeric: DenseMatrix,
    pub iterations: usize,
    /// `‖numeric − closed_form‖_F / ‖closed_form‖_F`.
    pub rel_gap: f64,
}

/// Partial trace of `H` over the other mode.
fn partial_trace(m: &SecondMoment, side: Side) -> DenseMatrix {
    let (da, db) = (m.dims()[0], m.dims()[1]);
    let h = m.h();
    match side {
        Side::A => DenseMatrix::from_fn(da, da, |i, j| {
            (0..db).map(|k| h[(i * db + k, j * db + k)]).sum()
        }),
        Side::B => DenseMatrix::from_fn(db, db, |k, l| {
            (0..da).map(|i| h[(i * db + k, i * db + l)]).sum()
        }),
    }
}

/// `f(L) = logdet(LLᵀ) + Tr(M (LLᵀ)⁻¹)` and its gradient restricted to the
/// lower triangle.
fn triangular_objective(l: &DenseMatrix, m: &DenseMatrix) -> Option<(f64, DenseMatrix)> {
    let n = l.rows();
    let diag = l.diag();
    if diag.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return None;
    }
    let linv = gauss_jordan_inverse(l).ok()?;
    let p = linv.t_matmul(&linv);
    let f = 2.0 * diag.iter().map(|v| v.abs().ln()).sum::<f64>() + m.frobenius_dot(&p);
    // df/dS = P − P M P, df/dL = 2 (df/dS) L
    let ds = p.sub(&p.matmul(m).matmul(&p));
    let mut gl = ds.matmul(l).scale(2.0);
    for i in 0..n {
        for j in (i + 1)..n {
            gl[(i, j)] = 0.0;
        }
    }
    Some((f, gl))
}

/// Minimizes `KL(H, (S/d_b) ⊗ I)` (side `a`) or `KL(H, I ⊗ (S/d_a))`
/// (side `b`) in closed form and, independently, by Barzilai–Borwein
/// gradient descent over `S = LLᵀ` with `L` lower triangular.
pub fn one_sided_kl_min(pop: &GradientPopulation, side: Side) -> Result<OneSided> {
    let closed_form = match side {
        Side::A => pop.left_mean(&DenseMatrix::identity(pop.shape().1)),
        Side::B => pop.right_mean(&DenseMatrix::identity(pop.shape().0)),
    };
    let m = partial_trace(&pop.second_moment(0.0)?, side);
    let n = m.rows();
    let scale = (m.trace() / n as f64).max(f64::MIN_POSITIVE);
    // work on M / scale so the tolerance is scale free
    let ms = m.scale(1.0 / scale);
    let mut l = DenseMatrix::identity(n);
    let (mut f, mut g) = triangular_objective(&l, &ms)
        .ok_or_else(|| Error::InvalidInput("degenerate start".to_string()))?;
    let mut alpha = 0.1;
    let max_iter = 10_000;
    let mut iterations = 0;
    // nonmonotone Armijo reference: the worst of the last few objectives
    let mut recent = vec![f];
    while g.frobenius_norm() > 1e-10 {
        if iterations == max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: g.frobenius_norm(),
            });
        }
        iterations += 1;
        let gg = g.frobenius_dot(&g);
        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut step = alpha;
        let (l_new, f_new, g_new) = loop {
            let cand = l.sub(&g.scale(step));
            if let Some((fc, gc)) = triangular_objective(&cand, &ms) {
                if fc <= reference - 1e-4 * step * gg {
                    break (cand, fc, gc);
                }
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: g.frobenius_norm(),
                });
            }
        };
        let s = l_new.sub(&l);
        let y = g_new.sub(&g);
        let sy = s.frobenius_dot(&y);
        alpha = if sy > 0.0 { s.frobenius_dot(&s) / sy } else { 0.1 };
        l = l_new;
        f = f_new;
        g = g_new;
        recent.push(f);
        if recent.len() > 10 {
            recent.remove(0);
        }
    }
    let numeric = l.matmul_t(&l).scale(scale);
    let rel_gap = rel(&closed_form, &numeric);
    Ok(OneSided {
        closed_form,
        numeric,
        iterations,
        rel_gap,
    })
}

fn one_sided_dense(s: &DenseMatrix, side: Side, other: usize) -> DenseMatrix {
    let scaled = s.scale(1.0 / other as f64);
    match side {
        Side::A => kron(&scaled, &DenseMatrix::identity(other)),
        Side::B => kron(&DenseMatrix::identity(other), &scaled),
    }
}

/// Smallest `KL(candidate) − KL(closed form)` over `probes` random SPD
/// perturbations of the one-sided closed form. Nonnegative when the closed
/// form is optimal.
pub fn probe_one_sided(pop: &GradientPopulation, side: Side, probes: usize, seed: u64) -> Result<f64> {
    let (da, db) = pop.shape();
    let other = if side == Side::A { db } else { da };
    let x = pop.second_moment(0.0)?.target();
    let best = one_sided_kl_min(pop, side)?.closed_form;
    let base = kl_objective(&x, &one_sided_dense(&best, side, other))?;
    let mut rng = seeded_rng(seed);
    let mut margin = f64::INFINITY;
    for _ in 0..probes {
        let cand = perturb_spd(&mut rng, &best);
        margin = margin.min(kl_objective(&x, &one_sided_dense(&cand, side, other))? - base);
    }
    Ok(margin)
}

/// `L (I + εZ)(I + εZ)ᵀ Lᵀ` with `S = LLᵀ`, `Z` Gaussian and `ε` random in
/// `(0, 0.3)`.
fn perturb_spd(rng: &mut impl Rng, s: &DenseMatrix) -> DenseMatrix {
    let n = s.rows();
    let l = cholesky(s).expect("closed form is SPD");
    let eps: f64 = 0.3 * rng.random::<f64>();
    let e = DenseMatrix::from_fn(n, n, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        (if i == j { 1.0 } else { 0.0 }) + eps * z
    });
    let m = l.matmul(&e);
    m.matmul_t(&m).symmetrize()
}

/// Frobenius-optimal `S_a ⊗ S_b` by the Van Loan–Pitsianis rearrangement:
/// `R[(i,j),(k,l)] = X[(i,k),(j,l)]`, whose best rank-one approximation
/// `σ u vᵀ` gives `S_a = √σ Mat(u)`, `S_b = √σ Mat(v)`.
pub fn nearest_kron_frobenius(m: &SecondMoment) -> Result<KronPrecond> {
    if m.dims().len() != 2 {
        return Err(Error::ShapeError("nearest Kronecker needs two factors".to_string()));
    }
    let (da, db) = (m.dims()[0], m.dims()[1]);
    let x = m.target();
    let r = DenseMatrix::from_fn(da * da, db * db, |row, col| {
        let (i, j) = (row / da, row % da);
        let (k, l) = (col / db, col % db);
        x[(i * db + k, j * db + l)]
    });
    let svd = to_nalgebra(&r).svd(true, true);
    let u = from_nalgebra(&svd.u.expect("requested"));
    let vt = from_nalgebra(&svd.v_t.expect("requested"));
    let (top, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if *s > acc.1 { (i, *s) } else { acc });
    let root = sigma.max(0.0).sqrt();
    let mut sa = DenseMatrix::from_fn(da, da, |i, j| u[(i * da + j, top)] * root);
    let mut sb = DenseMatrix::from_fn(db, db, |k, l| vt[(top, k * db + l)] * root);
    if sa.trace() < 0.0 {
        sa.scale_mut(-1.0);
        sb.scale_mut(-1.0);
    }
    let c = da as f64 / sa.trace();
    Ok(KronPrecond::new(
        sa.symmetrize().scale(c),
        sb.symmetrize().scale(1.0 / c),
    ))
}

/// Output of [`diag_kl_min`].
#[derive(Clone, Debug)]
pub struct DiagKlMin {
    pub d: AugmentedDiag,
    /// Smallest `KL(probe) − KL(d*)` over the random probes.
    pub probe_margin: f64,
}

/// `d* = mean (Qᵀ vec G)^⊙2` with `Q = Q_a ⊗ Q_b` formed densely, checked
/// against `probes` random positive rescalings of `d*`.
pub fn diag_kl_min(
    pop: &GradientPopulation,
    qa: &DenseMatrix,
    qb: &DenseMatrix,
    probes: usize,
) -> Result<DiagKlMin> {
    let q = kron(qa, qb);
    let n = q.rows();
    if pop.shape().0 * pop.shape().1 != n {
        return Err(Error::ShapeError("bases do not match the population".to_string()));
    }
    let mut d = vec![0.0; n];
    for g in &pop.samples {
        let hat = q.transpose().matvec(g.as_slice());
        for (x, h) in d.iter_mut().zip(hat) {
            *x += h * h;
        }
    }
    d.iter_mut().for_each(|x| *x /= pop.len() as f64);

    let x = pop.second_moment(0.0)?.target();
    let precond = |diag: &[f64]| {
        let scaled = DenseMatrix::from_fn(n, n, |i, j| q[(i, j)] * diag[j]);
        scaled.matmul_t(&q).symmetrize()
    };
    let base = kl_objective(&x, &precond(&d))?;
    let mut rng = seeded_rng(pop.seed ^ 0x5eed);
    let mut margin = f64::INFINITY;
    for _ in 0..probes {
        let cand: Vec<f64> = d
            .iter()
            .map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v * (0.2 * z).exp()
            })
            .collect();
        margin = margin.min(kl_objective(&x, &precond(&cand))? - base);
    }
    Ok(DiagKlMin {
        d: AugmentedDiag { d },
        probe_margin: margin,
    })
}

/// Proximal subproblem of one KL factor step.
#[derive(Clone, Debug)]
pub struct ProxProblem {
    pub s_t: KronPrecond,
    pub beta2: f64,
}

/// `∂KL/∂S_a = ½(d_b P_a − P_a C_a P_a)` with `C_a = mean G P_b Gᵀ`, and the
/// mirror for `b`.
fn kl_grad_factors(pop: &GradientPopulation, pa: &DenseMatrix, pb: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (da, db) = pop.shape();
    let ca = pop.left_mean(pb);
    let cb = pop.right_mean(pa);
    let ga = pa.scale(db as f64).sub(&pa.matmul(&ca).matmul(pa)).scale(0.5);
    let gb = pb.scale(da as f64).sub(&pb.matmul(&cb).matmul(pb)).scale(0.5);
    (ga, gb)
}

/// Minimizes `⟨∇_{S_a}L, X_a⟩ + ⟨∇_{S_b}L, X_b⟩ + (1/2β₂)‖X − S⁽ᵗ⁾‖²_W`
/// with `W` block diagonal, `W_a = (d_b/2) P_a ⊗ P_a`, by Newton steps on
/// each block.
pub fn prox_solve(pb: &ProxProblem, pop: &GradientPopulation) -> Result<KronPrecond> {
    if !(pb.beta2 > 0.0) {
        return Ok(pb.s_t.clone());
    }
    let (da, db) = pop.shape();
    let sa = &pb.s_t.factors[0];
    let sb = &pb.s_t.factors[1];
    let pa = spd_inverse(sa)?;
    let pbm = spd_inverse(sb)?;
    let (ga, gb) = kl_grad_factors(pop, &pa, &pbm);
    let xa = newton_block(sa, &ga, &pa, db as f64 / 2.0, pb.beta2)?;
    let xb = newton_block(sb, &gb, &pbm, da as f64 / 2.0, pb.beta2)?;
    Ok(KronPrecond::new(xa, xb))
}

fn newton_block(
    s: &DenseMatrix,
    grad: &DenseMatrix,
    p: &DenseMatrix,
    weight: f64,
    beta2: f64,
) -> Result<DenseMatrix> {
    let n = s.rows();
    // Hessian of the block objective on row-major vec(X): (w/β₂) P ⊗ P
    let hess = kron(p, p).scale(weight / beta2);
    let objective_grad = |x: &DenseMatrix| -> Vec<f64> {
        let diff = x.sub(s);
        let w = hess.matvec(diff.as_slice());
        grad.as_slice().iter().zip(w).map(|(g, v)| g + v).collect()
    };
    // residual floor set by the larger of the two gradient terms
    let scale = grad.frobenius_norm().max(hess.max_abs() * s.frobenius_norm());
    let mut x = s.clone();
    for _ in 0..50 {
        let r = objective_grad(&x);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale {
            return Ok(x.symmetrize());
        }
        let delta = solve(&hess, &r)?;
        x = x.sub(&DenseMatrix::from_vec(n, n, delta)?);
    }
    let r = objective_grad(&x);
    Err(Error::NoConvergence {
        iterations: 50,
        residual: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Normalized residuals of the stationarity conditions of a two-sided
/// Kronecker fit:
///
/// * KL: `S_a = (1/d_b) mean G S_b⁻¹ Gᵀ`
/// * Frobenius: `S_a = mean G S_b Gᵀ / Tr(S_b²)`
/// * von Neumann: `S_a = mean G Gᵀ / Tr(S_b)`
///
/// and the mirrored condition for `S_b`, each as `‖S − rhs‖_F / ‖S‖_F`.
pub fn stationarity_residuals(
    pop: &GradientPopulation,
    s: &KronPrecond,
    divergence: Divergence,
) -> Result<(f64, f64)> {
    let (da, db) = pop.shape();
    let sa = &s.factors[0];
    let sb = &s.factors[1];
    let (ra, rb) = match divergence {
        Divergence::Kl => {
            let pa = spd_inverse(sa)?;
            let pb = spd_inverse(sb)?;
            (
                pop.left_mean(&pb).scale(1.0 / db as f64),
                pop.right_mean(&pa).scale(1.0 / da as f64),
            )
        }
        Divergence::Frob => (
            pop.left_mean(sb).scale(1.0 / sb.frobenius_dot(sb)),
            pop.right_mean(sa).scale(1.0 / sa.frobenius_dot(sa)),
        ),
        Divergence::Vn => (
            pop.left_mean(&DenseMatrix::identity(db)).scale(1.0 / sb.trace()),
            pop.right_mean(&DenseMatrix::identity(da)).scale(1.0 / sa.trace()),
        ),
    };
    Ok((rel(sa, &ra), rel(sb, &rb)))
}

/// Von Neumann closed form `(mean G Gᵀ, mean Gᵀ G / Tr(mean G Gᵀ))`.
pub fn vn_closed_form(pop: &GradientPopulation) -> KronPrecond {
    let (da, db) = pop.shape();
    let sa = pop.left_mean(&DenseMatrix::identity(db));
    let sb = pop.right_mean(&DenseMatrix::identity(da)).scale(1.0 / sa.trace());
    KronPrecond::new(sa, sb)
}

/// Optimal scalar for `KL(X, cS)`: `c = Tr(X S⁻¹) / n`.
pub fn optimal_scale(x: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    let p = spd_inverse(s)?;
    Ok(x.frobenius_dot(&p) / x.rows() as f64)
}

/// KL of the optimally scaled two-sided fixed point and of the optimally
/// scaled Shampoo product `mean G Gᵀ ⊗ mean Gᵀ G`.
pub fn kl_gap(pop: &GradientPopulation) -> Result<(f64, f64)> {
    let (da, db) = pop.shape();
    let x = pop.second_moment(0.0)?.target();
    let two = flip_flop_kl(pop, 1e-10, 10_000)?.precond.expand();
    let one = kron(
        &pop.left_mean(&DenseMatrix::identity(db)),
        &pop.right_mean(&DenseMatrix::identity(da)),
    );
    let eval = |s: &DenseMatrix| -> Result<f64> {
        let c = optimal_scale(&x, s)?;
        super::dense::kl_dense(&x, &s.scale(c))
    };
    Ok((eval(&two)?, eval(&one)?))
}

/// Central differences of `f` at a symmetric `x`, returned as the gradient
/// with respect to a symmetric argument: off-diagonal pairs are perturbed
/// together and the difference is split between them.
pub fn symmetric_fd_gradient(
    mut f: impl FnMut(&DenseMatrix) -> Result<f64>,
    x: &DenseMatrix,
    h: f64,
) -> Result<DenseMatrix> {
    let n = x.rows();
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            if i != j {
                plus[(j, i)] += h;
                minus[(j, i)] -= h;
            }
            let d = (f(&plus)? - f(&minus)?) / (2.0 * h);
            if i == j {
                g[(i, i)] = d;
            } else {
                g[(i, j)] = d / 2.0;
                g[(j, i)] = d / 2.0;
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_flip_flop_converges_in_one_sweep() {
        let pop = GradientPopulation::new(vec![DenseMatrix::identity(3).scale(2.0)], 0).unwrap();
        let ff = flip_flop_kl(&pop, 1e-12, 10).unwrap();
        assert_eq!(ff.sweeps, 1);
        let expected = DenseMatrix::identity(9).scale(4.0 / 3.0);
        assert!(ff.precond.expand().rel_diff(&expected) < 1e-14);
        assert_eq!(ff.precond.factors[0].trace(), 3.0);
    }

    #[test]
    fn one_sided_matches_descent() {
        let pop = GradientPopulation::gaussian(1, 3, 2, 40);
        for side in [Side::A, Side::B] {
            let o = one_sided_kl_min(&pop, side).unwrap();
            assert!(o.rel_gap < 1e-8, "{}", o.rel_gap);
        }
        assert!(probe_one_sided(&pop, Side::A, 20, 9).unwrap() >= 0.0);
    }

    #[test]
    fn nearest_kron_of_identity_and_products() {
        let m = SecondMoment::new(DenseMatrix::identity(6), 0.0, &[2, 3]).unwrap();
        let k = nearest_kron_frobenius(&m).unwrap();
        assert!(k.factors[0].rel_diff(&DenseMatrix::identity(2)) < 1e-12);
        assert!(k.factors[1].rel_diff(&DenseMatrix::identity(3)) < 1e-12);

        let sa = DenseMatrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let sb = DenseMatrix::from_rows(&[&[1.0, -0.2, 0.0], &[-0.2, 3.0, 0.5], &[0.0, 0.5, 2.0]]);
        let target = kron(&sa, &sb);
        let m = SecondMoment::new(target.clone(), 0.0, &[2, 3]).unwrap();
        let k = nearest_kron_frobenius(&m).unwrap();
        assert!(k.expand().rel_diff(&target) < 1e-10);
    }

    #[test]
    fn diag_min_in_canonical_basis_is_mean_square() {
        let pop = GradientPopulation::gaussian(3, 2, 2, 30);
        let r = diag_kl_min(&pop, &DenseMatrix::identity(2), &DenseMatrix::identity(2), 20).unwrap();
        for k in 0..4 {
            let m: f64 = pop.samples.iter().map(|g| g.as_slice()[k].powi(2)).sum::<f64>() / 30.0;
            assert!((r.d.d[k] - m).abs() < 1e-14);
        }
        assert!(r.probe_margin >= 0.0);
    }

    #[test]
    fn prox_limits() {
        let pop = GradientPopulation::gaussian(5, 3, 2, 20);
        let s_t = KronPrecond::new(DenseMatrix::identity(3).scale(1.5), DenseMatrix::identity(2));
        let tiny = prox_solve(&ProxProblem { s_t: s_t.clone(), beta2: 1e-9 }, &pop).unwrap();
        assert!(tiny.factors[0].rel_diff(&s_t.factors[0]) < 1e-7);
        let full = prox_solve(&ProxProblem { s_t: s_t.clone(), beta2: 1.0 }, &pop).unwrap();
        let pb = spd_inverse(&s_t.factors[1]).unwrap();
        let expected = pop.left_mean(&pb).scale(0.5);
        assert!(full.factors[0].rel_diff(&expected) < 1e-10);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, -1.0]]);
        // f(X) = Tr(A X) has symmetric gradient A
        let g = symmetric_fd_gradient(|x| Ok(a.frobenius_dot(x)), &DenseMatrix::identity(2), 1e-3)
            .unwrap();
        assert!(g.rel_diff(&a) < 1e-12);
    }
}
