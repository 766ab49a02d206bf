//! Builders for the three reference problems.
//!
//! All builders take a [`Dataset`] `(B, b)` with `m` samples and `n` features.
//!
//! * [`build_logistic`]: sigmoid least squares written as
//!   `min_x max_y ⟨b, x⟩ + ⟨Mx, y⟩ - g₂(y)` with `x ∈ Rᵐ`, `y = (μ, ν) ∈ Rⁿ⁺ᵐ`,
//!   `M = -[B, -I]ᵀ` and `g₂(y) = Σ (σ(νᵢ) - ½)²`.
//! * [`build_perceptron`]: one ReLU neuron fitted in squared loss, with the
//!   activation constraint lifted to the graph of ReLU.
//! * [`build_least_squares`]: `½‖Bw - b‖²` split as `½‖u - b‖²` subject to
//!   `Bw = u`.

use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{norm_sq, solve, BlockPartition, DenseMatrix, LinalgError};
use crate::problem::{BlockKind, PrimalDualPoint, SaddleProblem};
use crate::prox::{self, ProxStep};
use crate::rng::XorShift64Star;

/// Spectral radius bound of `∇²g₂` for the logistic problem.
pub const LOGISTIC_LIP_G2: f64 = 0.125;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset needs at least one sample and one feature")]
    Empty,
    #[error("{labels} labels for {samples} samples")]
    LabelCount { labels: usize, samples: usize },
    #[error("non-finite label at sample {0}")]
    NonFiniteLabel(usize),
    #[error("expected {expected_m}x{expected_n} data, found {m}x{n}")]
    Shape {
        expected_m: usize,
        expected_n: usize,
        m: usize,
        n: usize,
    },
}

/// Samples `(B_i, b_i)`: rows of `features` and entries of `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<f64>) -> Result<Self, DatasetError> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(DatasetError::Empty);
        }
        if labels.len() != features.rows() {
            return Err(DatasetError::LabelCount {
                labels: labels.len(),
                samples: features.rows(),
            });
        }
        if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteLabel(i));
        }
        Ok(Self { features, labels })
    }

    /// Deterministic stand-in with `m` samples and `n` features in `[-1, 1]`.
    ///
    /// Every feature sits near one end of the range with its own sign, so the
    /// matrix is dominated by one direction (at 74x27, `‖B‖ ≈ 37`). Labels in
    /// `[0, 1]` come from a noisy sigmoid teacher.
    pub fn synthetic(m: usize, n: usize, seed: u64) -> Self {
        assert!(m > 0 && n > 0);
        let mut rng = XorShift64Star::new(seed);
        let offsets: Vec<f64> = (0..n)
            .map(|_| {
                let o = rng.uniform(0.6, 1.0);
                if rng.next_f64() < 0.5 { -o } else { o }
            })
            .collect();
        let mut values = Vec::with_capacity(m * n);
        for _ in 0..m {
            for off in &offsets {
                values.push((off + 0.35 * rng.normal()).clamp(-1.0, 1.0));
            }
        }
        let features = DenseMatrix::new(m, n, values).expect("finite by construction");
        let teacher: Vec<f64> = (0..n).map(|_| rng.normal() / (n as f64).sqrt()).collect();
        let labels = (0..m)
            .map(|i| {
                let s: f64 = features.row(i).iter().zip(&teacher).map(|(a, t)| a * t).sum();
                (sigmoid(2.0 * s) + 0.05 * rng.normal()).clamp(0.0, 1.0)
            })
            .collect();
        Self { features, labels }
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn samples(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn expect_shape(&self, m: usize, n: usize) -> Result<(), DatasetError> {
        if self.samples() != m || self.dim() != n {
            return Err(DatasetError::Shape {
                expected_m: m,
                expected_n: n,
                m: self.samples(),
                n: self.dim(),
            });
        }
        Ok(())
    }
}

/// Numerically stable `1/(1 + e^{-u})`.
#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(u: f64) -> f64 {
    u.max(0.0)
}

/// `g₂(y) = Σ (σ(νᵢ) - ½)²` where `ν` is the tail of `y` after `n` entries.
pub fn logistic_g2(y: &[f64], n: usize) -> f64 {
    y[n..].iter().map(|v| (sigmoid(*v) - 0.5).powi(2)).sum()
}

/// Second derivative of `t ↦ (σ(t) - ½)²` written in `s = σ(t)`:
/// `s(1 - s)(-6s² + 6s - 1)`. Its maximum modulus over `[0, 1]` is
/// [`LOGISTIC_LIP_G2`], attained at `s = ½`.
pub fn logistic_g2_curvature(s: f64) -> f64 {
    s * (1.0 - s) * (-6.0 * s * s + 6.0 * s - 1.0)
}

/// `[B, -I]`, the constraint matrix shared by the logistic and least-squares
/// problems.
pub fn lifted_constraint(b: &DenseMatrix) -> DenseMatrix {
    let (m, n) = (b.rows(), b.cols());
    let mut a = DenseMatrix::zeros(m, n + m);
    for i in 0..m {
        for j in 0..n {
            a.set(i, j, b.get(i, j));
        }
        a.set(i, n + i, -1.0);
    }
    a
}

fn dim_check(x: &[f64], y: &[f64], nx: usize, ny: usize) {
    assert_eq!(x.len(), nx, "primal length");
    assert_eq!(y.len(), ny, "dual length");
}

/// Sigmoid least-squares saddle problem.
///
/// Primal `x ∈ Rᵐ` with `m` singleton blocks and `f_i(t) = b_i t`; dual
/// `y = (μ, ν) ∈ Rⁿ⁺ᵐ`, `g = 0`, and coupling `M = -[B, -I]ᵀ`. The KKT error
/// is `‖Mx - ∇g₂(y)‖² + ‖b + Mᵀy‖²`.
pub fn build_logistic(d: &Dataset) -> SaddleProblem {
    let (m, n) = (d.samples(), d.dim());
    let coupling = lifted_constraint(d.features()).transpose().scaled(-1.0);
    let labels: Arc<[f64]> = d.labels().into();
    let grad = move |y: &[f64], out: &mut [f64]| {
        out[..n].iter_mut().for_each(|v| *v = 0.0);
        for (o, v) in out[n..].iter_mut().zip(&y[n..]) {
            let s = sigmoid(*v);
            *o = 2.0 * s * (s - 0.5) * (1.0 - s);
        }
    };
    let kkt_m = coupling.clone();
    let kkt_b = labels.clone();
    let kkt = move |x: &[f64], y: &[f64]| {
        dim_check(x, y, m, n + m);
        let mut r = kkt_m.matvec(x).expect("length checked");
        let mut g = vec![0.0; n + m];
        grad(y, &mut g);
        for (ri, gi) in r.iter_mut().zip(&g) {
            *ri -= gi;
        }
        let mut s = kkt_m.matvec_transpose(y).expect("length checked");
        for (si, bi) in s.iter_mut().zip(kkt_b.iter()) {
            *si += bi;
        }
        norm_sq(&r) + norm_sq(&s)
    };
    let prox_b = labels.clone();
    SaddleProblem::builder(coupling, BlockPartition::singletons(m))
        .name("logistic")
        .prox_f(vec![BlockKind::Proximal; m], move |i, input, g, out| {
            out[0] = prox::prox_linear(input[0], ProxStep::new(g).expect("positive step"), prox_b[i]);
        })
        .grad_g2(LOGISTIC_LIP_G2, grad)
        .kkt(kkt)
        .build()
        .expect("consistent dimensions")
}

/// Index layout of the perceptron primal vector `x = (w, (u_j, l_j)_j, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerceptronLayout {
    pub n: usize,
    pub m: usize,
}

impl PerceptronLayout {
    pub fn w(&self, i: usize) -> usize {
        i
    }
    pub fn u(&self, j: usize) -> usize {
        self.n + 2 * j
    }
    pub fn l(&self, j: usize) -> usize {
        self.n + 2 * j + 1
    }
    pub fn lambda(&self, j: usize) -> usize {
        self.n + 2 * self.m + j
    }
    pub fn primal_dim(&self) -> usize {
        self.n + 3 * self.m
    }
    pub fn n_blocks(&self) -> usize {
        self.n + 2 * self.m
    }
    pub fn dual_dim(&self) -> usize {
        2 * self.m
    }
    /// Block sizes: `n` ones, `m` twos, `m` ones.
    pub fn partition(&self) -> BlockPartition {
        let mut sizes = vec![1; self.n];
        sizes.extend(std::iter::repeat_n(2, self.m));
        sizes.extend(std::iter::repeat_n(1, self.m));
        BlockPartition::new(&sizes).expect("positive sizes")
    }
}

/// Coupling of the perceptron problem: rows `0..m` hold `Bw - u`, rows
/// `m..2m` hold `l - λ`.
pub fn perceptron_coupling(b: &DenseMatrix) -> DenseMatrix {
    let lay = PerceptronLayout {
        n: b.cols(),
        m: b.rows(),
    };
    let mut a = DenseMatrix::zeros(lay.dual_dim(), lay.primal_dim());
    for j in 0..lay.m {
        for i in 0..lay.n {
            a.set(j, lay.w(i), b.get(j, i));
        }
        a.set(j, lay.u(j), -1.0);
        a.set(lay.m + j, lay.l(j), 1.0);
        a.set(lay.m + j, lay.lambda(j), -1.0);
    }
    a
}

/// Perceptron problem `min_x max_y ‖λ - b‖² + Σ ι_graph(u_j, l_j) + ⟨Ax, y⟩`.
///
/// `n + 2m` blocks: identity on each `w_i`, projection onto the ReLU graph on
/// each pair `(u_j, l_j)` and the prox of `(t - b_j)²` on each `λ_j`.
pub fn build_perceptron(d: &Dataset) -> SaddleProblem {
    let lay = PerceptronLayout {
        n: d.dim(),
        m: d.samples(),
    };
    let coupling = perceptron_coupling(d.features());
    let mut kinds = vec![BlockKind::Identity; lay.n];
    kinds.extend(std::iter::repeat_n(BlockKind::Proximal, 2 * lay.m));
    let labels: Arc<[f64]> = d.labels().into();
    let prox_b = labels.clone();
    let prox = move |blk: usize, input: &[f64], g: f64, out: &mut [f64]| {
        if blk < lay.n {
            out.copy_from_slice(input);
        } else if blk < lay.n + lay.m {
            let (u, l) = prox::proj_relu_graph(input[0], input[1]);
            out[0] = u;
            out[1] = l;
        } else {
            let j = blk - lay.n - lay.m;
            out[0] = prox::prox_quadratic_shift(input[0], ProxStep::new(g).expect("positive step"), prox_b[j]);
        }
    };
    let a = coupling.clone();
    let kkt = move |x: &[f64], y: &[f64]| perceptron_kkt(&a, lay, &labels, x, y);
    SaddleProblem::builder(coupling, lay.partition())
        .name("perceptron")
        .prox_f(kinds, prox)
        .kkt(kkt)
        .build()
        .expect("consistent dimensions")
}

/// `‖A_wᵀy‖² + Σ_j κ_j + ‖2(λ - b) + A_λᵀy‖² + ‖Ax‖²` where `κ_j` is the
/// squared distance from `-(A_{u_j}ᵀy, A_{l_j}ᵀy)` to the normal cone of the
/// ReLU graph at `(u_j, l_j)`: `⟨A_{u_j}, y⟩²` if `u_j < 0`, `0` if `u_j = 0`
/// and `½⟨A_{u_j} + A_{l_j}, y⟩²` if `u_j > 0`.
fn perceptron_kkt(a: &DenseMatrix, lay: PerceptronLayout, b: &[f64], x: &[f64], y: &[f64]) -> f64 {
    dim_check(x, y, lay.primal_dim(), lay.dual_dim());
    let aty = a.matvec_transpose(y).expect("length checked");
    let mut k: f64 = (0..lay.n).map(|i| aty[lay.w(i)].powi(2)).sum();
    for j in 0..lay.m {
        let u = x[lay.u(j)];
        let (au, al) = (aty[lay.u(j)], aty[lay.l(j)]);
        k += if u < 0.0 {
            au * au
        } else if u == 0.0 {
            0.0
        } else {
            0.5 * (au + al).powi(2)
        };
        let lam = x[lay.lambda(j)];
        k += (2.0 * (lam - b[j]) + aty[lay.lambda(j)]).powi(2);
    }
    k + norm_sq(&a.matvec(x).expect("length checked"))
}

/// Linear least squares `min_{w,u} max_y ½‖u - b‖² + ⟨Bw - u, y⟩` with `n + m`
/// singleton blocks. The KKT error `‖Bᵀ(Bw - b)‖²` reads only `w`.
pub fn build_least_squares(d: &Dataset) -> SaddleProblem {
    let (m, n) = (d.samples(), d.dim());
    let coupling = lifted_constraint(d.features());
    let mut kinds = vec![BlockKind::Identity; n];
    kinds.extend(std::iter::repeat_n(BlockKind::Proximal, m));
    let labels: Arc<[f64]> = d.labels().into();
    let prox_b = labels.clone();
    let prox = move |blk: usize, input: &[f64], g: f64, out: &mut [f64]| {
        if blk < n {
            out[0] = input[0];
        } else {
            out[0] = prox::prox_half_square(input[0], ProxStep::new(g).expect("positive step"), prox_b[blk - n]);
        }
    };
    let features = d.features().clone();
    let kkt = move |x: &[f64], y: &[f64]| {
        dim_check(x, y, n + m, m);
        least_squares_kkt(&features, &labels, &x[..n])
    };
    SaddleProblem::builder(coupling, BlockPartition::singletons(n + m))
        .name("least-squares")
        .prox_f(kinds, prox)
        .kkt(kkt)
        .build()
        .expect("consistent dimensions")
}

/// `‖Bᵀ(Bw - b)‖²`
pub fn least_squares_kkt(b: &DenseMatrix, labels: &[f64], w: &[f64]) -> f64 {
    let mut r = b.matvec(w).expect("feature length");
    for (ri, bi) in r.iter_mut().zip(labels) {
        *ri -= bi;
    }
    norm_sq(&b.matvec_transpose(&r).expect("sample length"))
}

/// Solution of the normal equations `BᵀBw = Bᵀb`.
pub fn normal_equations(d: &Dataset) -> Result<Vec<f64>, LinalgError> {
    let b = d.features();
    let bt = b.transpose();
    let n = b.cols();
    let mut gram = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = bt.row(i).iter().zip(bt.row(j)).map(|(p, q)| p * q).sum();
            gram.set(i, j, v);
        }
    }
    let rhs = b.matvec_transpose(d.labels())?;
    solve(&gram, &rhs)
}

/// Saddle point `(w*, Bw*, Bw* - b)` of [`build_least_squares`].
pub fn least_squares_saddle_point(d: &Dataset) -> Result<PrimalDualPoint, LinalgError> {
    let w = normal_equations(d)?;
    let u = d.features().matvec(&w)?;
    let y: Vec<f64> = u.iter().zip(d.labels()).map(|(p, q)| p - q).collect();
    let mut x = w;
    x.extend_from_slice(&u);
    Ok(PrimalDualPoint::new(x, y))
}

/// Which of the three problems to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Logistic,
    Perceptron,
    LeastSquares,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Logistic, Experiment::Perceptron, Experiment::LeastSquares];

    pub fn build(self, d: &Dataset) -> SaddleProblem {
        match self {
            Experiment::Logistic => build_logistic(d),
            Experiment::Perceptron => build_perceptron(d),
            Experiment::LeastSquares => build_least_squares(d),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Logistic => "logistic",
            Experiment::Perceptron => "perceptron",
            Experiment::LeastSquares => "least-squares",
        }
    }

    /// Default weak Minty estimate.
    pub fn default_rho(self) -> f64 {
        match self {
            Experiment::LeastSquares => 0.0,
            _ => -2e-3,
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Experiment::Logistic),
            "perceptron" => Ok(Experiment::Perceptron),
            "least-squares" | "least_squares" | "ls" => Ok(Experiment::LeastSquares),
            other => Err(format!("unknown experiment '{other}'")),
        }
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}
