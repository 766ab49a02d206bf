//! Iteration engines and the run loop.
//!
//! Every method is a small state machine implementing [`IterativeMethod`];
//! [`run`] drives it until the KKT error drops below `τ`, the iterate blows up,
//! or the iteration or prox-evaluation budget is spent.
//!
//! Prox evaluations are counted per application of a non-identity block prox
//! of `f` and per application of a nontrivial prox of `g`.

use std::time::Instant;

use thiserror::Error;

use crate::linalg::{norm_sq, DenseMatrix};
use crate::params::{AlmParams, CegParams, NcPdhgParams, NcSpdhgParams};
use crate::problem::{BlockKind, PrimalDualPoint, ResidualPoint, SaddleProblem, DIVERGENCE_THRESHOLD};
use crate::rng::XorShift64Star;

/// NC-SPDHG recomputes its cached `Ax` from scratch this often.
pub const AX_REFRESH_INTERVAL: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("theta = {theta} must equal the number of blocks {blocks}")]
    ThetaMismatch { theta: f64, blocks: usize },
    #[error("{0} requires f2 = 0")]
    SmoothPrimalUnsupported(&'static str),
    #[error("{algo} is not available for the {experiment} problem")]
    Incompatible { algo: String, experiment: String },
    #[error("bad run options: {0}")]
    BadOptions(String),
    #[error("point dimensions do not match the problem")]
    Dimension,
}

/// Iterate plus bookkeeping shared by the primal-dual methods.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub z: PrimalDualPoint,
    /// `A·x`, kept up to date incrementally by NC-SPDHG.
    pub cached_ax: Vec<f64>,
    pub iteration: u64,
    pub prox_evals: u64,
    pub rng: XorShift64Star,
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    gy: Vec<f64>,
    y_hat: Vec<f64>,
    y_bar: Vec<f64>,
    gy_bar: Vec<f64>,
    x_hat: Vec<f64>,
    x_bar: Vec<f64>,
    aty: Vec<f64>,
    ax_bar: Vec<f64>,
    gx: Vec<f64>,
    gx_bar: Vec<f64>,
    blk_in: Vec<f64>,
    blk_out: Vec<f64>,
}

impl SolverState {
    pub fn new(p: &SaddleProblem, z: PrimalDualPoint, seed: u64) -> Result<Self, SolverError> {
        if z.x.len() != p.primal_dim() || z.y.len() != p.dual_dim() {
            return Err(SolverError::Dimension);
        }
        let cached_ax = p.coupling().matvec(&z.x).map_err(|_| SolverError::Dimension)?;
        let (n, d) = (p.primal_dim(), p.dual_dim());
        let maxb = p.blocks().sizes().into_iter().max().unwrap_or(0);
        let scratch = Scratch {
            gy: vec![0.0; d],
            y_hat: vec![0.0; d],
            y_bar: vec![0.0; d],
            gy_bar: vec![0.0; d],
            x_hat: vec![0.0; n],
            x_bar: vec![0.0; n],
            aty: vec![0.0; n],
            ax_bar: vec![0.0; d],
            gx: vec![0.0; n],
            gx_bar: vec![0.0; n],
            blk_in: vec![0.0; maxb],
            blk_out: vec![0.0; maxb],
        };
        Ok(Self {
            z,
            cached_ax,
            iteration: 0,
            prox_evals: 0,
            rng: XorShift64Star::new(seed),
            scratch,
        })
    }

    /// Zero initial point.
    pub fn zeros(p: &SaddleProblem, seed: u64) -> Self {
        Self::new(p, PrimalDualPoint::zeros(p.primal_dim(), p.dual_dim()), seed)
            .expect("dimensions match by construction")
    }

    /// `‖cached_ax - A·x‖`
    pub fn cached_ax_error(&self, p: &SaddleProblem) -> f64 {
        let ax = p.coupling().matvec(&self.z.x).expect("primal length");
        norm_sq(
            &ax.iter()
                .zip(&self.cached_ax)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )
        .sqrt()
    }

    pub fn refresh_ax(&mut self, p: &SaddleProblem) {
        p.coupling().matvec_into(&self.z.x, &mut self.cached_ax);
    }
}

fn dual_prox_cost(p: &SaddleProblem) -> u64 {
    u64::from(p.has_prox_g())
}

/// One NC-PDHG iteration:
///
/// ```text
/// ŷ  = y + γy(Ax - ∇g₂(y))            ȳ = prox_{γy g}(ŷ)
/// x̂  = x - γx(∇f₂(x) + Aᵀȳ)           x̄ = prox_{γx f}(x̂)
/// x⁺ = x + α(x̄ - x̂ - γx(∇f₂(x̄) + Aᵀȳ))
/// y⁺ = y + α(ȳ - ŷ + γy(Ax̄ - ∇g₂(ȳ)))
/// ```
///
/// Returns the residual `(F̄, Ḡ)` at `(x̄, ȳ)`.
pub fn ncpdhg_step(p: &SaddleProblem, s: &mut SolverState, cfg: &NcPdhgParams) -> ResidualPoint {
    let (gx, gy, alpha) = (cfg.gamma_x, cfg.gamma_y, cfg.alpha);
    let a = p.coupling();
    let sc = &mut s.scratch;
    let (x, y) = (&mut s.z.x, &mut s.z.y);

    a.matvec_into(x, &mut s.cached_ax);
    p.grad_g2(y, &mut sc.gy);
    for i in 0..y.len() {
        sc.y_hat[i] = y[i] + gy * (s.cached_ax[i] - sc.gy[i]);
    }
    p.prox_g(&sc.y_hat, gy, &mut sc.y_bar);

    a.matvec_transpose_into(&sc.y_bar, &mut sc.aty);
    p.grad_f2(x, &mut sc.gx);
    for i in 0..x.len() {
        sc.x_hat[i] = x[i] - gx * (sc.gx[i] + sc.aty[i]);
    }
    p.prox_f(&sc.x_hat, gx, &mut sc.x_bar);
    p.grad_f2(&sc.x_bar, &mut sc.gx_bar);

    a.matvec_into(&sc.x_bar, &mut sc.ax_bar);
    p.grad_g2(&sc.y_bar, &mut sc.gy_bar);

    let mut f_bar = vec![0.0; x.len()];
    for i in 0..x.len() {
        f_bar[i] = (x[i] - sc.x_bar[i]) / gx + sc.gx_bar[i] - sc.gx[i];
        x[i] += alpha * (sc.x_bar[i] - sc.x_hat[i] - gx * (sc.gx_bar[i] + sc.aty[i]));
    }
    let mut g_bar = vec![0.0; y.len()];
    for i in 0..y.len() {
        g_bar[i] = (y[i] - sc.y_bar[i]) / gy + sc.gy_bar[i] - sc.gy[i] + s.cached_ax[i] - sc.ax_bar[i];
        y[i] += alpha * (sc.y_bar[i] - sc.y_hat[i] + gy * (sc.ax_bar[i] - sc.gy_bar[i]));
    }

    s.iteration += 1;
    s.prox_evals += p.proximal_block_count() as u64 + dual_prox_cost(p);
    ResidualPoint { f_bar, g_bar }
}

/// Dual extrapolation rule of the block-coordinate methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualRule {
    /// `y⁺ = (1-α)y + αȳ + γyθA(x⁺-x) + αγy(∇g₂(y) - ∇g₂(ȳ))`
    Spdhg,
    /// Same with `αγyθA(x⁺-x)`; does not converge in general.
    Failed,
}

fn check_block_config(p: &SaddleProblem, cfg: &NcSpdhgParams, name: &'static str) -> Result<(), SolverError> {
    if cfg.theta != p.blocks().len() as f64 {
        return Err(SolverError::ThetaMismatch {
            theta: cfg.theta,
            blocks: p.blocks().len(),
        });
    }
    if p.has_grad_f2() {
        return Err(SolverError::SmoothPrimalUnsupported(name));
    }
    Ok(())
}

/// `ȳ = prox_{γy g}(y + γy(Ax - ∇g₂(y)))` from the cached `Ax`; leaves `∇g₂(y)`
/// in `scratch.gy` and `ȳ` in `scratch.y_bar`.
fn dual_forward(p: &SaddleProblem, s: &mut SolverState, gy: f64) {
    let sc = &mut s.scratch;
    let y = &s.z.y;
    p.grad_g2(y, &mut sc.gy);
    for i in 0..y.len() {
        sc.y_hat[i] = y[i] + gy * (s.cached_ax[i] - sc.gy[i]);
    }
    p.prox_g(&sc.y_hat, gy, &mut sc.y_bar);
}

/// One NC-SPDHG (or failed-variant) iteration with a prescribed block.
///
/// Only block `block` of `x̂` and `x̄` is formed, through `A_blockᵀȳ`.
pub fn ncspdhg_step_on_block(
    p: &SaddleProblem,
    s: &mut SolverState,
    cfg: &NcSpdhgParams,
    block: usize,
    rule: DualRule,
) {
    let (gx, gy, alpha, theta) = (cfg.gamma_x, cfg.gamma_y, cfg.alpha, cfg.theta);
    dual_forward(p, s, gy);
    let at = p.coupling_t();
    let range = p.blocks().range(block);
    let bs = range.len();
    let sc = &mut s.scratch;
    for (k, j) in range.clone().enumerate() {
        let atyj: f64 = at.row(j).iter().zip(&sc.y_bar).map(|(a, b)| a * b).sum();
        sc.blk_in[k] = s.z.x[j] - gx * atyj;
    }
    p.prox_f_block(block, &sc.blk_in[..bs], gx, &mut sc.blk_out[..bs]);

    let y = &mut s.z.y;
    p.grad_g2(&sc.y_bar, &mut sc.gy_bar);
    for i in 0..y.len() {
        y[i] = (1.0 - alpha) * y[i] + alpha * sc.y_bar[i] + alpha * gy * (sc.gy[i] - sc.gy_bar[i]);
    }
    let coef = match rule {
        DualRule::Spdhg => gy * theta,
        DualRule::Failed => alpha * gy * theta,
    };
    for (k, j) in range.enumerate() {
        let xj = s.z.x[j];
        let new = (1.0 - alpha) * xj + alpha * sc.blk_out[k];
        let delta = new - xj;
        s.z.x[j] = new;
        if delta != 0.0 {
            for (i, aij) in at.row(j).iter().enumerate() {
                if *aij != 0.0 {
                    y[i] += coef * aij * delta;
                    s.cached_ax[i] += aij * delta;
                }
            }
        }
    }

    s.iteration += 1;
    s.prox_evals += u64::from(p.block_kind(block) == BlockKind::Proximal) + dual_prox_cost(p);
    if s.iteration.is_multiple_of(AX_REFRESH_INTERVAL) {
        s.refresh_ax(p);
    }
}

/// One NC-SPDHG iteration: draws a block uniformly, then updates it.
pub fn ncspdhg_step(p: &SaddleProblem, s: &mut SolverState, cfg: &NcSpdhgParams) -> usize {
    let i = s.rng.index(p.blocks().len());
    ncspdhg_step_on_block(p, s, cfg, i, DualRule::Spdhg);
    i
}

/// One iteration of the failed variant.
pub fn failed_spdhg_step(p: &SaddleProblem, s: &mut SolverState, cfg: &NcSpdhgParams) -> usize {
    let i = s.rng.index(p.blocks().len());
    ncspdhg_step_on_block(p, s, cfg, i, DualRule::Failed);
    i
}

/// Full intermediate point `(x̄, ȳ)` of the current NC-SPDHG state, without
/// advancing it. Used for diagnostics.
pub fn ncspdhg_intermediate(p: &SaddleProblem, s: &SolverState, cfg: &NcSpdhgParams) -> (Vec<f64>, Vec<f64>) {
    let mut t = s.clone();
    dual_forward(p, &mut t, cfg.gamma_y);
    let y_bar = t.scratch.y_bar.clone();
    let aty = p.coupling().matvec_transpose(&y_bar).expect("dual length");
    let x_hat: Vec<f64> = s.z.x.iter().zip(&aty).map(|(x, a)| x - cfg.gamma_x * a).collect();
    let mut x_bar = vec![0.0; x_hat.len()];
    p.prox_f(&x_hat, cfg.gamma_x, &mut x_bar);
    (x_bar, y_bar)
}

/// VI operator `F(z) = (∇f₂(x) + Aᵀy, ∇g₂(y) - Ax)`.
fn vi_operator(p: &SaddleProblem, x: &[f64], y: &[f64], fx: &mut [f64], fy: &mut [f64], tmp_x: &mut [f64]) {
    p.coupling().matvec_transpose_into(y, fx);
    if p.has_grad_f2() {
        p.grad_f2(x, tmp_x);
        for (a, b) in fx.iter_mut().zip(tmp_x.iter()) {
            *a += b;
        }
    }
    p.grad_g2(y, fy);
    let ax = p.coupling().matvec(x).expect("primal length");
    for (a, b) in fy.iter_mut().zip(&ax) {
        *a -= b;
    }
}

/// One CEG+ iteration:
///
/// ```text
/// z̄  = T_γ(z - γF(z))
/// z⁺ = T_αγ(z - αγF(z̄))
/// ```
///
/// where `T_s` applies the prox of `f` and `g` with step `s`.
pub fn ceg_plus_step(p: &SaddleProblem, s: &mut SolverState, cfg: &CegParams) {
    let (g, a) = (cfg.gamma, cfg.alpha);
    let sc = &mut s.scratch;
    let (x, y) = (&mut s.z.x, &mut s.z.y);

    vi_operator(p, x, y, &mut sc.aty, &mut sc.gy, &mut sc.gx);
    for i in 0..x.len() {
        sc.x_hat[i] = x[i] - g * sc.aty[i];
    }
    for i in 0..y.len() {
        sc.y_hat[i] = y[i] - g * sc.gy[i];
    }
    p.prox_f(&sc.x_hat, g, &mut sc.x_bar);
    p.prox_g(&sc.y_hat, g, &mut sc.y_bar);

    vi_operator(p, &sc.x_bar, &sc.y_bar, &mut sc.aty, &mut sc.gy, &mut sc.gx);
    for i in 0..x.len() {
        sc.x_hat[i] = x[i] - a * g * sc.aty[i];
    }
    for i in 0..y.len() {
        sc.y_hat[i] = y[i] - a * g * sc.gy[i];
    }
    p.prox_f(&sc.x_hat, a * g, x);
    p.prox_g(&sc.y_hat, a * g, y);

    s.iteration += 1;
    s.prox_evals += 2 * (p.proximal_block_count() as u64 + dual_prox_cost(p));
}

/// Which variable the ALM minimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlmLayout {
    /// Minimize over `y` for the constraint `-Aᵀy = b`, multiplier `x`.
    /// Needs `f(x) = ⟨b, x⟩` and `f₂ = 0`.
    InnerDual,
    /// Minimize over `x` for the constraint `Ax = 0`, multiplier `y`.
    /// Needs `g = g₂ = 0`.
    InnerPrimal,
}

/// Augmented Lagrangian `Λ_μ(v, p) = h(v) + r(v) + ⟨Cv - d, p⟩ + (μ/2)‖Cv - d‖²`
/// derived from a saddle problem.
#[derive(Debug, Clone)]
pub struct AlmProblem {
    pub saddle: SaddleProblem,
    pub layout: AlmLayout,
    /// Constraint matrix `C`.
    pub constraint: DenseMatrix,
    pub rhs: Vec<f64>,
    /// Prox evaluations charged per inner iteration.
    pub inner_charge: u64,
}

impl AlmProblem {
    /// Inner variable `y`, constraint `-Aᵀy = b`. Inner iterations are
    /// charged one evaluation per primal block, the cost of one pass over `x`.
    pub fn inner_dual(saddle: SaddleProblem, b: Vec<f64>) -> Self {
        let constraint = saddle.coupling_t().scaled(-1.0);
        let inner_charge = saddle.blocks().len() as u64 + dual_prox_cost(&saddle);
        Self {
            layout: AlmLayout::InnerDual,
            constraint,
            rhs: b,
            inner_charge,
            saddle,
        }
    }

    /// Inner variable `x`, constraint `Ax = 0`.
    pub fn inner_primal(saddle: SaddleProblem) -> Self {
        let constraint = saddle.coupling().clone();
        let rhs = vec![0.0; saddle.dual_dim()];
        let inner_charge = saddle.proximal_block_count() as u64;
        Self {
            layout: AlmLayout::InnerPrimal,
            constraint,
            rhs,
            inner_charge,
            saddle,
        }
    }

    fn split<'a>(&self, z: &'a mut PrimalDualPoint) -> (&'a mut Vec<f64>, &'a mut Vec<f64>) {
        match self.layout {
            AlmLayout::InnerDual => (&mut z.y, &mut z.x),
            AlmLayout::InnerPrimal => (&mut z.x, &mut z.y),
        }
    }

    fn smooth_grad(&self, v: &[f64], out: &mut [f64]) {
        match self.layout {
            AlmLayout::InnerDual => self.saddle.grad_g2(v, out),
            AlmLayout::InnerPrimal => self.saddle.grad_f2(v, out),
        }
    }

    fn prox(&self, v: &[f64], gamma: f64, out: &mut [f64]) {
        match self.layout {
            AlmLayout::InnerDual => self.saddle.prox_g(v, gamma, out),
            AlmLayout::InnerPrimal => self.saddle.prox_f(v, gamma, out),
        }
    }
}

/// Outcome of one ALM outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmOuter {
    pub inner_iterations: usize,
    pub gradient_mapping_norm: f64,
}

/// One ALM outer iteration: (proximal) gradient descent on `Λ_μ(·, p)` with
/// step `cfg.gamma` until the gradient-mapping norm drops to `cfg.inner_tol`
/// or `cfg.inner_max` steps, then `p ← p + μ(Cv - d)`.
pub fn alm_step(p: &AlmProblem, s: &mut SolverState, cfg: &AlmParams) -> AlmOuter {
    let c = &p.constraint;
    let (mu, g) = (cfg.mu, cfg.gamma);
    let (v, mult) = p.split(&mut s.z);
    let nv = v.len();
    let mut grad = vec![0.0; nv];
    let mut trial = vec![0.0; nv];
    let mut next = vec![0.0; nv];
    let mut r = vec![0.0; c.rows()];
    let mut inner = 0;
    let mut gm = f64::INFINITY;
    while inner < cfg.inner_max {
        c.matvec_into(v, &mut r);
        for i in 0..r.len() {
            r[i] = mult[i] + mu * (r[i] - p.rhs[i]);
        }
        c.matvec_transpose_into(&r, &mut grad);
        p.smooth_grad(v, &mut trial);
        for i in 0..nv {
            trial[i] = v[i] - g * (grad[i] + trial[i]);
        }
        p.prox(&trial, g, &mut next);
        inner += 1;
        s.prox_evals += p.inner_charge;
        gm = (norm_sq(
            &next
                .iter()
                .zip(v.iter())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        ))
        .sqrt()
            / g;
        v.copy_from_slice(&next);
        if gm <= cfg.inner_tol || !gm.is_finite() {
            break;
        }
    }
    c.matvec_into(v, &mut r);
    for i in 0..r.len() {
        mult[i] += mu * (r[i] - p.rhs[i]);
    }
    s.iteration += 1;
    AlmOuter {
        inner_iterations: inner,
        gradient_mapping_norm: gm,
    }
}

/// SAGA state for `min_w Σᵢ ½(⟨Bᵢ, w⟩ - bᵢ)²`.
#[derive(Debug, Clone)]
pub struct SagaState {
    pub w: Vec<f64>,
    /// Stored residual `⟨Bᵢ, wᵢ⟩ - bᵢ`; the table entry is `Bᵢ` times it.
    pub table: Vec<f64>,
    pub table_mean: Vec<f64>,
    pub iteration: u64,
    pub grad_evals: u64,
    pub rng: XorShift64Star,
}

impl SagaState {
    /// Table initialized with the per-sample gradients at `w0`.
    pub fn new(b: &DenseMatrix, labels: &[f64], w0: Vec<f64>, seed: u64) -> Self {
        let m = b.rows();
        let table: Vec<f64> = (0..m)
            .map(|i| b.row(i).iter().zip(&w0).map(|(p, q)| p * q).sum::<f64>() - labels[i])
            .collect();
        let mut table_mean = b.matvec_transpose(&table).expect("sample length");
        table_mean.iter_mut().for_each(|v| *v /= m as f64);
        Self {
            w: w0,
            table,
            table_mean,
            iteration: 0,
            grad_evals: m as u64,
            rng: XorShift64Star::new(seed),
        }
    }
}

/// One SAGA step on sample `j`:
/// `w ← w - γ(∇f_j(w) - table_j + mean(table))`.
pub fn saga_step_on(b: &DenseMatrix, labels: &[f64], s: &mut SagaState, gamma: f64, j: usize) {
    let bj = b.row(j);
    let m = b.rows() as f64;
    let r: f64 = bj.iter().zip(&s.w).map(|(p, q)| p * q).sum::<f64>() - labels[j];
    let diff = r - s.table[j];
    for k in 0..s.w.len() {
        s.w[k] -= gamma * (bj[k] * diff + s.table_mean[k]);
        s.table_mean[k] += bj[k] * diff / m;
    }
    s.table[j] = r;
    s.iteration += 1;
    s.grad_evals += 1;
}

/// One SAGA step on a uniformly drawn sample.
pub fn saga_step(b: &DenseMatrix, labels: &[f64], s: &mut SagaState, gamma: f64) -> usize {
    let j = s.rng.index(b.rows());
    saga_step_on(b, labels, s, gamma, j);
    j
}

/// A solver the run loop can drive.
pub trait IterativeMethod {
    fn name(&self) -> &'static str;
    fn step(&mut self);
    fn iteration(&self) -> u64;
    fn prox_evals(&self) -> u64;
    /// KKT error at the current iterate; `NaN` if the iterate is not finite.
    fn kkt(&self) -> f64;
    /// Iterations that make up one pass over the data. The run loop checks
    /// the KKT error every `kkt_every` passes.
    fn pass_length(&self) -> u64 {
        1
    }
    fn metadata(&self) -> Vec<(String, String)> {
        Vec::new()
    }
}

fn finite_kkt(p: &SaddleProblem, z: &PrimalDualPoint) -> f64 {
    if z.is_finite() {
        p.kkt_unchecked(&z.x, &z.y)
    } else {
        f64::NAN
    }
}

fn meta(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

pub struct NcPdhg {
    pub problem: SaddleProblem,
    pub state: SolverState,
    pub params: NcPdhgParams,
    pub last_residual: Option<ResidualPoint>,
}

impl NcPdhg {
    pub fn new(problem: SaddleProblem, params: NcPdhgParams) -> Self {
        let state = SolverState::zeros(&problem, 0);
        Self {
            problem,
            state,
            params,
            last_residual: None,
        }
    }
}

impl IterativeMethod for NcPdhg {
    fn name(&self) -> &'static str {
        "ncpdhg"
    }
    fn step(&mut self) {
        self.last_residual = Some(ncpdhg_step(&self.problem, &mut self.state, &self.params));
    }
    fn iteration(&self) -> u64 {
        self.state.iteration
    }
    fn prox_evals(&self) -> u64 {
        self.state.prox_evals
    }
    fn kkt(&self) -> f64 {
        finite_kkt(&self.problem, &self.state.z)
    }
    fn metadata(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            meta("gamma_x", format!("{:e}", p.gamma_x)),
            meta("gamma_y", format!("{:e}", p.gamma_y)),
            meta("alpha", format!("{:e}", p.alpha)),
            meta("c", p.c),
            meta("epsilon", format!("{:e}", p.epsilon)),
        ]
    }
}

pub struct NcSpdhg {
    pub problem: SaddleProblem,
    pub state: SolverState,
    pub params: NcSpdhgParams,
    pub rule: DualRule,
}

impl NcSpdhg {
    pub fn new(problem: SaddleProblem, params: NcSpdhgParams, seed: u64) -> Result<Self, SolverError> {
        check_block_config(&problem, &params, "ncspdhg")?;
        let state = SolverState::zeros(&problem, seed);
        Ok(Self {
            problem,
            state,
            params,
            rule: DualRule::Spdhg,
        })
    }

    /// The failed variant with the extra `α` in the dual extrapolation.
    pub fn failed(problem: SaddleProblem, params: NcSpdhgParams, seed: u64) -> Result<Self, SolverError> {
        let mut s = Self::new(problem, params, seed)?;
        s.rule = DualRule::Failed;
        Ok(s)
    }
}

impl IterativeMethod for NcSpdhg {
    fn name(&self) -> &'static str {
        match self.rule {
            DualRule::Spdhg => "ncspdhg",
            DualRule::Failed => "failed",
        }
    }
    fn step(&mut self) {
        let i = self.state.rng.index(self.problem.blocks().len());
        ncspdhg_step_on_block(&self.problem, &mut self.state, &self.params, i, self.rule);
    }
    fn iteration(&self) -> u64 {
        self.state.iteration
    }
    fn prox_evals(&self) -> u64 {
        self.state.prox_evals
    }
    fn kkt(&self) -> f64 {
        finite_kkt(&self.problem, &self.state.z)
    }
    fn pass_length(&self) -> u64 {
        self.problem.blocks().len() as u64
    }
    fn metadata(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            meta("gamma_x", format!("{:e}", p.gamma_x)),
            meta("gamma_y", format!("{:e}", p.gamma_y)),
            meta("alpha", format!("{:e}", p.alpha)),
            meta("theta", p.theta),
            meta("c", p.c),
            meta("epsilon", format!("{:e}", p.epsilon)),
            meta("ax_refresh_interval", AX_REFRESH_INTERVAL),
        ]
    }
}

pub struct CegPlus {
    pub problem: SaddleProblem,
    pub state: SolverState,
    pub params: CegParams,
}

impl CegPlus {
    pub fn new(problem: SaddleProblem, params: CegParams) -> Self {
        let state = SolverState::zeros(&problem, 0);
        Self { problem, state, params }
    }
}

impl IterativeMethod for CegPlus {
    fn name(&self) -> &'static str {
        "cegplus"
    }
    fn step(&mut self) {
        ceg_plus_step(&self.problem, &mut self.state, &self.params);
    }
    fn iteration(&self) -> u64 {
        self.state.iteration
    }
    fn prox_evals(&self) -> u64 {
        self.state.prox_evals
    }
    fn kkt(&self) -> f64 {
        finite_kkt(&self.problem, &self.state.z)
    }
    fn metadata(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            meta("gamma", format!("{:e}", p.gamma)),
            meta("delta", format!("{:e}", p.delta)),
            meta("alpha", format!("{:e}", p.alpha)),
            meta("eps_ceg", p.eps_ceg),
            meta("variant", "two-prox extragradient, second prox at alpha*gamma"),
        ]
    }
}

pub struct Alm {
    pub problem: AlmProblem,
    pub state: SolverState,
    pub params: AlmParams,
    pub last_outer: Option<AlmOuter>,
}

impl Alm {
    pub fn new(problem: AlmProblem, params: AlmParams) -> Self {
        let state = SolverState::zeros(&problem.saddle, 0);
        Self {
            problem,
            state,
            params,
            last_outer: None,
        }
    }
}

impl IterativeMethod for Alm {
    fn name(&self) -> &'static str {
        "alm"
    }
    fn step(&mut self) {
        self.last_outer = Some(alm_step(&self.problem, &mut self.state, &self.params));
    }
    fn iteration(&self) -> u64 {
        self.state.iteration
    }
    fn prox_evals(&self) -> u64 {
        self.state.prox_evals
    }
    fn kkt(&self) -> f64 {
        finite_kkt(&self.problem.saddle, &self.state.z)
    }
    fn metadata(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            meta("mu", p.mu),
            meta("gamma", format!("{:e}", p.gamma)),
            meta("inner_max", p.inner_max),
            meta("inner_tol", format!("{:e}", p.inner_tol)),
            meta("inner_charge", self.problem.inner_charge),
        ]
    }
}

/// SAGA on `Σᵢ ½(⟨Bᵢ, w⟩ - bᵢ)²`, with KKT error `‖Bᵀ(Bw - b)‖²`.
pub struct Saga {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
    pub state: SagaState,
    pub gamma: f64,
}

impl Saga {
    pub fn new(features: DenseMatrix, labels: Vec<f64>, gamma: f64, seed: u64) -> Self {
        let w0 = vec![0.0; features.cols()];
        let state = SagaState::new(&features, &labels, w0, seed);
        Self {
            features,
            labels,
            state,
            gamma,
        }
    }
}

impl IterativeMethod for Saga {
    fn name(&self) -> &'static str {
        "saga"
    }
    fn step(&mut self) {
        saga_step(&self.features, &self.labels, &mut self.state, self.gamma);
    }
    fn iteration(&self) -> u64 {
        self.state.iteration
    }
    /// Stochastic gradient evaluations, including the initial table.
    fn prox_evals(&self) -> u64 {
        self.state.grad_evals
    }
    fn kkt(&self) -> f64 {
        if self.state.w.iter().all(|v| v.is_finite()) {
            crate::experiments::least_squares_kkt(&self.features, &self.labels, &self.state.w)
        } else {
            f64::NAN
        }
    }
    fn pass_length(&self) -> u64 {
        self.features.rows() as u64
    }
    fn metadata(&self) -> Vec<(String, String)> {
        vec![meta("gamma", format!("{:e}", self.gamma)), meta("work_unit", "sample gradient")]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Diverged,
    MaxIterReached,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::Diverged => "Diverged",
            Status::MaxIterReached => "MaxIterReached",
        }
    }
}

impl std::str::FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Converged" => Ok(Status::Converged),
            "Diverged" => Ok(Status::Diverged),
            "MaxIterReached" => Ok(Status::MaxIterReached),
            other => Err(format!("unknown status '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub prox_evals: u64,
    pub kkt: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: Status,
    /// Resolved configuration, written as comments by the CSV writer.
    pub metadata: Vec<(String, String)>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_kkt(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.kkt)
    }

    pub fn final_prox_evals(&self) -> u64 {
        self.last().map_or(0, |r| r.prox_evals)
    }

    pub fn final_iteration(&self) -> u64 {
        self.last().map_or(0, |r| r.iteration)
    }

    /// Prox evaluations at the first record with `kkt ≤ tol`.
    pub fn evals_to_reach(&self, tol: f64) -> Option<u64> {
        self.records.iter().find(|r| r.kkt <= tol).map(|r| r.prox_evals)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tau: f64,
    pub max_iter: u64,
    /// Passes between KKT evaluations.
    pub kkt_every: u64,
    pub max_prox_evals: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tau: 1e-7,
            max_iter: u64::MAX,
            kkt_every: 10,
            max_prox_evals: 5_000_000,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tau > 0.0) {
            return Err(SolverError::BadOptions(format!("tau must be positive, got {}", self.tau)));
        }
        if self.kkt_every == 0 {
            return Err(SolverError::BadOptions("kkt_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Runs `method` until τ-stationarity, divergence, or a budget is spent.
///
/// The KKT error is evaluated before the first step and then every
/// `kkt_every · pass_length` iterations. A KKT value that is not finite or
/// exceeds [`DIVERGENCE_THRESHOLD`] ends the run as diverged. Running out of
/// iterations or prox evaluations ends it as `MaxIterReached`, with a final
/// record at the last iterate.
pub fn run<M: IterativeMethod + ?Sized>(method: &mut M, opts: &RunOptions) -> Trace {
    let start = Instant::now();
    let every = opts.kkt_every.max(1).saturating_mul(method.pass_length().max(1));
    let mut records = Vec::new();
    let mut metadata = vec![
        meta("algo", method.name()),
        meta("tau", format!("{:e}", opts.tau)),
        meta("kkt_every_iterations", every),
        meta("max_iter", opts.max_iter),
        meta("max_prox_evals", opts.max_prox_evals),
    ];
    metadata.extend(method.metadata());

    let record = |m: &M, records: &mut Vec<TraceRecord>| -> Option<Status> {
        let kkt = m.kkt();
        records.push(TraceRecord {
            iteration: m.iteration(),
            prox_evals: m.prox_evals(),
            kkt,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if !kkt.is_finite() || kkt > DIVERGENCE_THRESHOLD {
            Some(Status::Diverged)
        } else if kkt <= opts.tau {
            Some(Status::Converged)
        } else {
            None
        }
    };

    let first = method.iteration();
    if let Some(status) = record(method, &mut records) {
        return Trace { records, status, metadata };
    }
    loop {
        let done = method.iteration() - first;
        if done >= opts.max_iter || method.prox_evals() >= opts.max_prox_evals {
            let status = if records.last().map(|r| r.iteration) == Some(method.iteration()) {
                Status::MaxIterReached
            } else {
                record(method, &mut records).unwrap_or(Status::MaxIterReached)
            };
            return Trace { records, status, metadata };
        }
        method.step();
        if (method.iteration() - first).is_multiple_of(every) {
            if let Some(status) = record(method, &mut records) {
                return Trace { records, status, metadata };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockPartition;

    fn scalar_bilinear() -> SaddleProblem {
        SaddleProblem::builder(DenseMatrix::identity(1), BlockPartition::singletons(1))
            .build()
            .unwrap()
    }

    fn start(p: &SaddleProblem, x: f64, y: f64) -> SolverState {
        SolverState::new(p, PrimalDualPoint::new(vec![x], vec![y]), 0).unwrap()
    }

    #[test]
    fn ncpdhg_scalar_transcript() {
        let p = scalar_bilinear();
        let (gx, gy, a) = (0.3, 0.7, 0.8);
        let (x, y) = (1.25, -0.5);
        let mut s = start(&p, x, y);
        ncpdhg_step(&p, &mut s, &NcPdhgParams::manual(gx, gy, a));
        let y_hat = y + gy * x;
        let y_bar = y_hat;
        let x_hat = x - gx * y_bar;
        let x_bar = x_hat;
        let x1 = x + a * (x_bar - x_hat - gx * y_bar);
        let y1 = y + a * (y_bar - y_hat + gy * x_bar);
        assert!((s.z.x[0] - x1).abs() <= 1e-14);
        assert!((s.z.y[0] - y1).abs() <= 1e-14);
    }

    #[test]
    fn ncpdhg_alpha_zero_is_stationary() {
        let p = scalar_bilinear();
        let mut s = start(&p, 0.4, -2.0);
        let r = ncpdhg_step(&p, &mut s, &NcPdhgParams::manual(0.5, 0.5, 0.0));
        assert_eq!((s.z.x[0], s.z.y[0]), (0.4, -2.0));
        assert!(r.norm_sq() > 0.0);
    }

    #[test]
    fn ncpdhg_prox_count() {
        let p = scalar_bilinear();
        let mut s = start(&p, 1.0, 1.0);
        ncpdhg_step(&p, &mut s, &NcPdhgParams::manual(0.5, 0.5, 1.0));
        assert_eq!(s.prox_evals, 0);
        assert_eq!(s.iteration, 1);
    }

    #[test]
    fn ceg_scalar_extragradient_transcript() {
        let p = scalar_bilinear();
        let (x, y, g) = (1.0, 0.5, 0.5);
        let mut s = start(&p, x, y);
        ceg_plus_step(&p, &mut s, &CegParams { gamma: g, delta: 0.0, alpha: 1.0, eps_ceg: 0.0 });
        // F(x, y) = (y, -x)
        let (xb, yb) = (x - g * y, y + g * x);
        let (x1, y1) = (x - g * yb, y + g * xb);
        assert!((s.z.x[0] - x1).abs() <= 1e-14 && (s.z.y[0] - y1).abs() <= 1e-14);
    }

    #[test]
    fn ceg_zero_operator_fixed_point() {
        let p = SaddleProblem::builder(DenseMatrix::zeros(2, 2), BlockPartition::singletons(2))
            .build()
            .unwrap();
        let mut s = SolverState::new(&p, PrimalDualPoint::new(vec![1.0, 2.0], vec![3.0, 4.0]), 0).unwrap();
        ceg_plus_step(&p, &mut s, &CegParams { gamma: 0.1, delta: 0.0, alpha: 0.9, eps_ceg: 0.01 });
        assert_eq!(s.z, PrimalDualPoint::new(vec![1.0, 2.0], vec![3.0, 4.0]));
    }

    #[test]
    fn spdhg_alpha_zero_is_stationary() {
        let p = SaddleProblem::builder(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap(),
            BlockPartition::singletons(2),
        )
        .build()
        .unwrap();
        let z = PrimalDualPoint::new(vec![0.3, -0.2], vec![1.0, 0.7]);
        let mut s = SolverState::new(&p, z.clone(), 9).unwrap();
        let cfg = NcSpdhgParams::manual(0.2, 0.3, 0.0, 2.0);
        for _ in 0..10 {
            ncspdhg_step(&p, &mut s, &cfg);
            failed_spdhg_step(&p, &mut s, &cfg);
        }
        assert_eq!(s.z, z);
    }

    #[test]
    fn theta_must_match_blocks() {
        let p = scalar_bilinear();
        let cfg = NcSpdhgParams::manual(0.2, 0.3, 0.5, 3.0);
        assert!(matches!(NcSpdhg::new(p, cfg, 0), Err(SolverError::ThetaMismatch { .. })));
    }

    #[test]
    fn alm_scalar_transcript() {
        // min ½y² s.t. y = 1, written as the dual layout with A = [-1], b = 1
        let p = SaddleProblem::builder(DenseMatrix::new(1, 1, vec![-1.0]).unwrap(), BlockPartition::singletons(1))
            .grad_g2(1.0, |y, out| out.copy_from_slice(y))
            .build()
            .unwrap();
        let alm = AlmProblem::inner_dual(p.clone(), vec![1.0]);
        let mu = 0.5;
        let cfg = AlmParams { mu, gamma: 1.0 / (1.0 + mu), inner_max: 10_000, inner_tol: 1e-13 };
        let mut s = SolverState::zeros(&p, 0);
        let mut x = 0.0f64;
        for _ in 0..20 {
            alm_step(&alm, &mut s, &cfg);
            // argmin_y ½y² + x(y - 1) + (μ/2)(y - 1)²
            let y = (mu - x) / (1.0 + mu);
            x += mu * (y - 1.0);
            assert!((s.z.y[0] - y).abs() <= 1e-10, "{} vs {}", s.z.y[0], y);
            assert!((s.z.x[0] - x).abs() <= 1e-10);
        }
    }

    #[test]
    fn alm_feasible_stationary_keeps_multiplier() {
        let p = SaddleProblem::builder(DenseMatrix::new(1, 1, vec![-1.0]).unwrap(), BlockPartition::singletons(1))
            .build()
            .unwrap();
        let alm = AlmProblem::inner_dual(p.clone(), vec![0.0]);
        let mut s = SolverState::zeros(&p, 0);
        alm_step(&alm, &mut s, &AlmParams::new(0.5, 1.0));
        assert_eq!(s.z, PrimalDualPoint::zeros(1, 1));
    }

    #[test]
    fn saga_single_sample_is_gradient_descent() {
        let b = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let labels = vec![0.7];
        let g = 0.1;
        let mut s = SagaState::new(&b, &labels, vec![0.0; 3], 3);
        let mut w = [0.0f64; 3];
        for _ in 0..50 {
            saga_step(&b, &labels, &mut s, g);
            let r = w[0] - 2.0 * w[1] + 0.5 * w[2] - 0.7;
            let row = [1.0, -2.0, 0.5];
            for k in 0..3 {
                w[k] -= g * row[k] * r;
            }
            for k in 0..3 {
                assert!((s.w[k] - w[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn saga_fixed_at_minimizer_in_mean() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let labels = vec![1.0, 2.0, 3.0];
        let w_star = vec![1.0, 2.0];
        let base = SagaState::new(&b, &labels, w_star.clone(), 0);
        let mut mean_step = [0.0; 2];
        for j in 0..3 {
            let mut s = base.clone();
            saga_step_on(&b, &labels, &mut s, 0.1, j);
            for k in 0..2 {
                mean_step[k] += (s.w[k] - w_star[k]) / 3.0;
            }
        }
        assert!(mean_step.iter().all(|v| v.abs() <= 1e-15));
    }

    struct Countdown {
        k: f64,
        it: u64,
    }

    impl IterativeMethod for Countdown {
        fn name(&self) -> &'static str {
            "countdown"
        }
        fn step(&mut self) {
            self.k *= 0.5;
            self.it += 1;
        }
        fn iteration(&self) -> u64 {
            self.it
        }
        fn prox_evals(&self) -> u64 {
            2 * self.it
        }
        fn kkt(&self) -> f64 {
            self.k
        }
    }

    #[test]
    fn run_stops_at_tau() {
        let tau = 0.5f64.powi(10);
        let opts = RunOptions { tau, kkt_every: 1, ..RunOptions::default() };
        let t = run(&mut Countdown { k: tau / 2.0, it: 0 }, &opts);
        assert_eq!((t.records.len(), t.status), (1, Status::Converged));
        let t = run(&mut Countdown { k: 1.0, it: 0 }, &opts);
        assert_eq!(t.status, Status::Converged);
        assert_eq!(t.final_iteration(), 10);
        assert_eq!(t.final_kkt(), tau);
    }

    #[test]
    fn run_budgets_and_divergence() {
        let opts = RunOptions { max_iter: 0, ..RunOptions::default() };
        let t = run(&mut Countdown { k: 1.0, it: 0 }, &opts);
        assert_eq!((t.records.len(), t.status), (1, Status::MaxIterReached));

        let opts = RunOptions { max_iter: 25, kkt_every: 10, ..RunOptions::default() };
        let t = run(&mut Countdown { k: 1e30, it: 0 }, &opts);
        assert_eq!(t.status, Status::Diverged);

        let opts = RunOptions { max_iter: 25, kkt_every: 10, tau: 1e-300, ..RunOptions::default() };
        let t = run(&mut Countdown { k: 1.0, it: 0 }, &opts);
        assert_eq!(t.status, Status::MaxIterReached);
        let its: Vec<u64> = t.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 10, 20, 25]);

        let opts = RunOptions { max_prox_evals: 7, kkt_every: 100, tau: 1e-300, ..RunOptions::default() };
        let t = run(&mut Countdown { k: 1.0, it: 0 }, &opts);
        assert_eq!((t.final_iteration(), t.final_prox_evals()), (4, 8));

        let nan = run(&mut Countdown { k: f64::NAN, it: 0 }, &RunOptions::default());
        assert_eq!(nan.status, Status::Diverged);
        assert!(RunOptions { tau: 0.0, ..RunOptions::default() }.validate().is_err());
        assert!(RunOptions { kkt_every: 0, ..RunOptions::default() }.validate().is_err());
    }
}
