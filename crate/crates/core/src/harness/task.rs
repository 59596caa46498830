use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::mode_product;
use crate::linalg::{matrix_power_from_eigen, sym_eigen, DenseMatrix, Mode, Tensor3};
use crate::random::{normal_matrix, normal_tensor, random_spd, seeded_rng, Rng64};

/// Largest dimension any task accepts.
pub const MAX_TASK_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `½ vec(Θ)ᵀ (A ⊗ B) vec(Θ)` with seeded SPD `A`, `B`.
    KronQuadratic,
    /// Two-layer tanh network fitted to a seeded teacher network.
    MlpRegression,
    /// Linear softmax classifier on a seeded Gaussian mixture.
    SoftmaxClassification,
    /// `½ ⟨Θ, Θ ×₁ A ×₂ B ×₃ C⟩` over a three-way parameter.
    Tensor3Quadratic,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::KronQuadratic,
        TaskKind::MlpRegression,
        TaskKind::SoftmaxClassification,
        TaskKind::Tensor3Quadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::KronQuadratic => "kron_quadratic",
            TaskKind::MlpRegression => "mlp_regression",
            TaskKind::SoftmaxClassification => "softmax_classification",
            TaskKind::Tensor3Quadratic => "tensor3_quadratic",
        }
    }

    /// `[d_a, d_b]`, `[inputs, hidden, outputs]`, `[features, classes]` and
    /// `[d_a, d_b, d_c]` respectively.
    pub fn default_dims(self) -> Vec<usize> {
        match self {
            TaskKind::KronQuadratic => vec![8, 6],
            TaskKind::MlpRegression => vec![8, 16, 4],
            TaskKind::SoftmaxClassification => vec![8, 5],
            TaskKind::Tensor3Quadratic => vec![2, 3, 4],
        }
    }

    fn arity(self) -> usize {
        match self {
            TaskKind::KronQuadratic | TaskKind::SoftmaxClassification => 2,
            TaskKind::MlpRegression | TaskKind::Tensor3Quadratic => 3,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub steps: usize,
    /// Gradient samples averaged per step; `0` means the exact gradient.
    pub batch: usize,
    /// Linear learning-rate warmup length; `0` keeps `γ` constant.
    pub warmup: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, seed: u64, steps: usize) -> Self {
        Self {
            kind,
            dims: kind.default_dims(),
            seed,
            steps,
            batch: 1,
            warmup: 0,
        }
    }

    pub fn with_dims(mut self, dims: &[usize]) -> Self {
        self.dims = dims.to_vec();
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() != self.kind.arity() {
            return Err(Error::Config(format!(
                "{} takes {} dims, got {:?}",
                self.kind,
                self.kind.arity(),
                self.dims
            )));
        }
        if self.dims.iter().any(|d| *d == 0 || *d > MAX_TASK_DIM) {
            return Err(Error::Config(format!(
                "dims {:?} outside 1..={MAX_TASK_DIM}",
                self.dims
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Learning-rate multiplier for 1-based step `t`.
    pub fn warmup_factor(&self, t: usize) -> f64 {
        if self.warmup == 0 {
            1.0
        } else {
            (t as f64 / self.warmup as f64).min(1.0)
        }
    }
}

/// A differentiable objective over a list of parameter blocks.
pub trait Problem {
    fn shapes(&self) -> Vec<Vec<usize>>;
    fn init(&self) -> Vec<Vec<f64>>;
    fn loss(&self, params: &[Vec<f64>]) -> f64;
    /// Exact gradient when `noise` is `None`, otherwise the mean of `batch`
    /// stochastic gradients.
    fn gradient(&self, params: &[Vec<f64>], noise: Option<(&mut Rng64, usize)>) -> Vec<Vec<f64>>;
}

/// Builds the seeded problem instance for `spec`.
pub fn build_problem(spec: &TaskSpec) -> Result<Box<dyn Problem + Send + Sync>> {
    spec.validate()?;
    let d = &spec.dims;
    Ok(match spec.kind {
        TaskKind::KronQuadratic => Box::new(KronQuadratic::new(spec.seed, d[0], d[1])),
        TaskKind::Tensor3Quadratic => Box::new(Tensor3Quadratic::new(spec.seed, [d[0], d[1], d[2]])),
        TaskKind::MlpRegression => Box::new(MlpRegression::new(spec.seed, d[0], d[1], d[2])),
        TaskKind::SoftmaxClassification => Box::new(Softmax::new(spec.seed, d[0], d[1])),
    })
}

fn sqrt_spd(a: &DenseMatrix) -> DenseMatrix {
    let e = sym_eigen(a).expect("SPD by construction");
    matrix_power_from_eigen(&e, 0.5).expect("SPD by construction")
}

/// Eigenvalue range of the seeded SPD factors of the quadratic tasks.
pub const SPECTRUM: (f64, f64) = (0.5, 2.0);

/// Quadratic with Hessian `A ⊗ B`. A stochastic gradient is
/// `AΘB + √(2 L(Θ)) A^{1/2} Z B^{1/2}`: the noise is matrix normal with
/// covariance `2L·(A ⊗ B)`, so it vanishes at the optimum and its Kronecker
/// factors are `A` and `B`.
///
/// With exact gradients (`batch = 0`) the smoothed loss is non-increasing
/// for SGD when `γ < 2/(λ_max(A) λ_max(B))` (at least `0.5` given
/// [`SPECTRUM`]), for the Frobenius and von Neumann variants when
/// `γ ≤ 1e-3`, and for every other variant when `γ ≤ 1e-2`.
#[derive(Clone, Debug)]
pub struct KronQuadratic {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    a_half: DenseMatrix,
    b_half: DenseMatrix,
    theta0: DenseMatrix,
}

impl KronQuadratic {
    pub fn new(seed: u64, da: usize, db: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let a = random_spd(&mut rng, da, SPECTRUM.0, SPECTRUM.1);
        let b = random_spd(&mut rng, db, SPECTRUM.0, SPECTRUM.1);
        let theta0 = normal_matrix(&mut rng, da, db);
        Self {
            a_half: sqrt_spd(&a),
            b_half: sqrt_spd(&b),
            a,
            b,
            theta0,
        }
    }

    fn theta(&self, params: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_vec(self.a.rows(), self.b.rows(), params[0].clone()).expect("shape")
    }
}

impl Problem for KronQuadratic {
    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.a.rows(), self.b.rows()]]
    }

    fn init(&self) -> Vec<Vec<f64>> {
        vec![self.theta0.as_slice().to_vec()]
    }

    fn loss(&self, params: &[Vec<f64>]) -> f64 {
        let t = self.theta(params);
        0.5 * t.frobenius_dot(&self.a.matmul(&t).matmul(&self.b))
    }

    fn gradient(&self, params: &[Vec<f64>], noise: Option<(&mut Rng64, usize)>) -> Vec<Vec<f64>> {
        let t = self.theta(params);
        let mut g = self.a.matmul(&t).matmul(&self.b);
        if let Some((rng, batch)) = noise.filter(|(_, b)| *b > 0) {
            let amp = (2.0 * self.loss(params)).max(0.0).sqrt() / batch as f64;
            for _ in 0..batch {
                let z = normal_matrix(rng, t.rows(), t.cols());
                g.axpby_mut(1.0, amp, &self.a_half.matmul(&z).matmul(&self.b_half));
            }
        }
        vec![g.into_vec()]
    }
}

/// Three-way analogue of [`KronQuadratic`].
#[derive(Clone, Debug)]
pub struct Tensor3Quadratic {
    pub factors: [DenseMatrix; 3],
    halves: [DenseMatrix; 3],
    theta0: Tensor3,
}

impl Tensor3Quadratic {
    pub fn new(seed: u64, dims: [usize; 3]) -> Self {
        let mut rng = seeded_rng(seed);
        let factors = dims.map(|d| random_spd(&mut rng, d, SPECTRUM.0, SPECTRUM.1));
        let theta0 = normal_tensor(&mut rng, dims);
        let halves = [sqrt_spd(&factors[0]), sqrt_spd(&factors[1]), sqrt_spd(&factors[2])];
        Self {
            factors,
            halves,
            theta0,
        }
    }

    fn apply(ms: &[DenseMatrix; 3], t: &Tensor3) -> Tensor3 {
        Mode::ALL
            .into_iter()
            .fold(t.clone(), |acc, m| mode_product(&acc, m, &ms[m.index()]))
    }

    fn theta(&self, params: &[Vec<f64>]) -> Tensor3 {
        Tensor3::from_vec(self.theta0.dims(), params[0].clone()).expect("shape")
    }
}

impl Problem for Tensor3Quadratic {
    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![self.theta0.dims().to_vec()]
    }

    fn init(&self) -> Vec<Vec<f64>> {
        vec![self.theta0.as_slice().to_vec()]
    }

    fn loss(&self, params: &[Vec<f64>]) -> f64 {
        let t = self.theta(params);
        let h = Self::apply(&self.factors, &t);
        0.5 * t.as_slice().iter().zip(h.as_slice()).map(|(x, y)| x * y).sum::<f64>()
    }

    fn gradient(&self, params: &[Vec<f64>], noise: Option<(&mut Rng64, usize)>) -> Vec<Vec<f64>> {
        let t = self.theta(params);
        let mut g = Self::apply(&self.factors, &t).as_slice().to_vec();
        if let Some((rng, batch)) = noise.filter(|(_, b)| *b > 0) {
            let amp = (2.0 * self.loss(params)).max(0.0).sqrt() / batch as f64;
            for _ in 0..batch {
                let z = Self::apply(&self.halves, &normal_tensor(rng, t.dims()));
                for (x, n) in g.iter_mut().zip(z.as_slice()) {
                    *x += amp * n;
                }
            }
        }
        vec![g]
    }
}

const DATASET_SIZE: usize = 256;

fn sample_indices(rng: &mut Rng64, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..DATASET_SIZE)).collect()
}

/// `y = W₂ tanh(W₁ x)` fitted by mean squared error to a teacher of the
/// same architecture. Parameters are `W₁` (hidden × inputs) and `W₂`
/// (outputs × hidden).
#[derive(Clone, Debug)]
pub struct MlpRegression {
    x: DenseMatrix,
    y: DenseMatrix,
    w1: DenseMatrix,
    w2: DenseMatrix,
}

impl MlpRegression {
    pub fn new(seed: u64, inputs: usize, hidden: usize, outputs: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let x = normal_matrix(&mut rng, DATASET_SIZE, inputs);
        let t1 = normal_matrix(&mut rng, hidden, inputs).scale(1.0 / (inputs as f64).sqrt());
        let t2 = normal_matrix(&mut rng, outputs, hidden).scale(1.0 / (hidden as f64).sqrt());
        let y = x.matmul_t(&t1).map(f64::tanh).matmul_t(&t2);
        let w1 = normal_matrix(&mut rng, hidden, inputs).scale(1.0 / (inputs as f64).sqrt());
        let w2 = normal_matrix(&mut rng, outputs, hidden).scale(1.0 / (hidden as f64).sqrt());
        Self { x, y, w1, w2 }
    }

    fn weights(&self, params: &[Vec<f64>]) -> (DenseMatrix, DenseMatrix) {
        let w1 = DenseMatrix::from_vec(self.w1.rows(), self.w1.cols(), params[0].clone());
        let w2 = DenseMatrix::from_vec(self.w2.rows(), self.w2.cols(), params[1].clone());
        (w1.expect("shape"), w2.expect("shape"))
    }

    fn loss_and_grad(&self, params: &[Vec<f64>], rows: &[usize]) -> (f64, Vec<Vec<f64>>) {
        let (w1, w2) = self.weights(params);
        let mut g1 = DenseMatrix::zeros(w1.rows(), w1.cols());
        let mut g2 = DenseMatrix::zeros(w2.rows(), w2.cols());
        let mut loss = 0.0;
        let inv = 1.0 / rows.len() as f64;
        for &i in rows {
            let x = self.x.row(i);
            let pre = w1.matvec(&x);
            let h: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
            let out = w2.matvec(&h);
            let r: Vec<f64> = out.iter().zip(self.y.row(i)).map(|(o, t)| o - t).collect();
            loss += 0.5 * r.iter().map(|v| v * v).sum::<f64>() * inv;
            let dh = w2.t_matmul(&DenseMatrix::from_vec(r.len(), 1, r.clone()).expect("shape"));
            for (p, rv) in r.iter().enumerate() {
                for (q, hv) in h.iter().enumerate() {
                    g2[(p, q)] += inv * rv * hv;
                }
            }
            for q in 0..h.len() {
                let back = dh[(q, 0)] * (1.0 - h[q] * h[q]);
                for (k, xv) in x.iter().enumerate() {
                    g1[(q, k)] += inv * back * xv;
                }
            }
        }
        (loss, vec![g1.into_vec(), g2.into_vec()])
    }
}

impl Problem for MlpRegression {
    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            vec![self.w1.rows(), self.w1.cols()],
            vec![self.w2.rows(), self.w2.cols()],
        ]
    }

    fn init(&self) -> Vec<Vec<f64>> {
        vec![self.w1.as_slice().to_vec(), self.w2.as_slice().to_vec()]
    }

    fn loss(&self, params: &[Vec<f64>]) -> f64 {
        let all: Vec<usize> = (0..DATASET_SIZE).collect();
        self.loss_and_grad(params, &all).0
    }

    fn gradient(&self, params: &[Vec<f64>], noise: Option<(&mut Rng64, usize)>) -> Vec<Vec<f64>> {
        let rows = match noise.filter(|(_, b)| *b > 0) {
            Some((rng, batch)) => sample_indices(rng, batch),
            None => (0..DATASET_SIZE).collect(),
        };
        self.loss_and_grad(params, &rows).1
    }
}

/// Multinomial logistic regression, `W` is classes × features.
#[derive(Clone, Debug)]
pub struct Softmax {
    x: DenseMatrix,
    labels: Vec<usize>,
    w0: DenseMatrix,
}

impl Softmax {
    pub fn new(seed: u64, features: usize, classes: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let means = normal_matrix(&mut rng, classes, features).scale(1.5);
        let mut x = DenseMatrix::zeros(DATASET_SIZE, features);
        let mut labels = Vec::with_capacity(DATASET_SIZE);
        for i in 0..DATASET_SIZE {
            let c = i % classes;
            labels.push(c);
            for j in 0..features {
                let z: f64 = rng.sample(StandardNormal);
                x[(i, j)] = means[(c, j)] + z;
            }
        }
        let w0 = normal_matrix(&mut rng, classes, features).scale(0.01);
        Self { x, labels, w0 }
    }

    fn loss_and_grad(&self, params: &[Vec<f64>], rows: &[usize]) -> (f64, Vec<f64>) {
        let w = DenseMatrix::from_vec(self.w0.rows(), self.w0.cols(), params[0].clone())
            .expect("shape");
        let mut g = DenseMatrix::zeros(w.rows(), w.cols());
        let mut loss = 0.0;
        let inv = 1.0 / rows.len() as f64;
        for &i in rows {
            let x = self.x.row(i);
            let logits = w.matvec(&x);
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += inv * (z.ln() + top - logits[self.labels[i]]);
            for (c, e) in exps.iter().enumerate() {
                let p = e / z - if c == self.labels[i] { 1.0 } else { 0.0 };
                for (j, xv) in x.iter().enumerate() {
                    g[(c, j)] += inv * p * xv;
                }
            }
        }
        (loss, g.into_vec())
    }
}

impl Problem for Softmax {
    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.w0.rows(), self.w0.cols()]]
    }

    fn init(&self) -> Vec<Vec<f64>> {
        vec![self.w0.as_slice().to_vec()]
    }

    fn loss(&self, params: &[Vec<f64>]) -> f64 {
        let all: Vec<usize> = (0..DATASET_SIZE).collect();
        self.loss_and_grad(params, &all).0
    }

    fn gradient(&self, params: &[Vec<f64>], noise: Option<(&mut Rng64, usize)>) -> Vec<Vec<f64>> {
        let rows = match noise.filter(|(_, b)| *b > 0) {
            Some((rng, batch)) => sample_indices(rng, batch),
            None => (0..DATASET_SIZE).collect(),
        };
        vec![self.loss_and_grad(params, &rows).1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(p: &dyn Problem) {
        let params = p.init();
        let g = p.gradient(&params, None);
        let h = 1e-6;
        for (b, block) in params.iter().enumerate() {
            for k in (0..block.len()).step_by(3) {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[b][k] += h;
                minus[b][k] -= h;
                let fd = (p.loss(&plus) - p.loss(&minus)) / (2.0 * h);
                assert!((fd - g[b][k]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", g[b][k]);
            }
        }
    }

    #[test]
    fn exact_gradients_match_differences() {
        for kind in TaskKind::ALL {
            let spec = TaskSpec::new(kind, 3, 1);
            fd_check(build_problem(&spec).unwrap().as_ref());
        }
    }

    #[test]
    fn kron_loss_is_half_quadratic_form() {
        let p = KronQuadratic::new(1, 3, 2);
        let theta = p.init();
        let h = crate::linalg::kron(&p.a, &p.b);
        let v = &theta[0];
        let q: f64 = h.matvec(v).iter().zip(v).map(|(x, y)| x * y).sum();
        assert!((p.loss(&theta) - 0.5 * q).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(TaskSpec::new(TaskKind::KronQuadratic, 0, 0).validate().is_err());
        assert!(TaskSpec::new(TaskKind::KronQuadratic, 0, 1).with_dims(&[2]).validate().is_err());
        assert!(TaskSpec::new(TaskKind::KronQuadratic, 0, 1).with_dims(&[65, 2]).validate().is_err());
        assert_eq!("tensor3-quadratic".parse::<TaskKind>().unwrap(), TaskKind::Tensor3Quadratic);
    }
}
