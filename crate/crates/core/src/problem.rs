//! Saddle point problems `min_x max_y f(x) + f₂(x) + ⟨Ax, y⟩ - g₂(y) - g(y)`.
//!
//! A [`SaddleProblem`] bundles the coupling operator with callbacks for the
//! proximal maps of `f` (per primal block) and `g`, the gradients of the
//! smooth parts, their Lipschitz constants and a closed-form KKT evaluator.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{dist_sq, BlockPartition, DenseMatrix, LinalgError};

/// KKT errors above this value are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{what} has length {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("point has a non-finite entry")]
    NonFinitePoint,
    #[error("step sizes must be positive, got ({0}, {1})")]
    BadSteps(f64, f64),
    #[error("Lipschitz constants must be nonnegative")]
    NegativeLipschitz,
    #[error("weights must be positive, got ({0}, {1})")]
    BadWeights(f64, f64),
}

/// Per-block proximal map of `f`: `(block, input, gamma, output)`.
pub type BlockProx = dyn Fn(usize, &[f64], f64, &mut [f64]) + Send + Sync;
/// Proximal map of `g`: `(input, gamma, output)`.
pub type DualProx = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;
/// Gradient callback: `(point, output)`.
pub type Gradient = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
/// Closed-form KKT error at `(x, y)`.
pub type KktFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Iterate `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PrimalDualPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(primal_dim: usize, dual_dim: usize) -> Self {
        Self {
            x: vec![0.0; primal_dim],
            y: vec![0.0; dual_dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Residual `D̄ = (F̄, Ḡ)`, an element of the subdifferential of the
/// Lagrangian at the intermediate point `(x̄, ȳ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPoint {
    pub f_bar: Vec<f64>,
    pub g_bar: Vec<f64>,
}

impl ResidualPoint {
    /// `‖F̄‖² + ‖Ḡ‖²`
    pub fn norm_sq(&self) -> f64 {
        crate::linalg::norm_sq(&self.f_bar) + crate::linalg::norm_sq(&self.g_bar)
    }
}

/// Estimate of the weak Minty constant `ρ`; may be negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WeakMviEstimate(pub f64);

impl WeakMviEstimate {
    #[inline]
    pub fn rho(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// The prox of `f_i` is the identity (`f_i = 0`).
    Identity,
    Proximal,
}

/// Immutable saddle problem description. Cheap to clone.
#[derive(Clone)]
pub struct SaddleProblem {
    coupling: Arc<DenseMatrix>,
    coupling_t: Arc<DenseMatrix>,
    blocks: BlockPartition,
    block_kinds: Vec<BlockKind>,
    prox_f: Arc<BlockProx>,
    prox_g: Option<Arc<DualProx>>,
    grad_g2: Option<Arc<Gradient>>,
    grad_f2: Option<Arc<Gradient>>,
    lip_g2: f64,
    lip_f2: f64,
    kkt: Arc<KktFn>,
    name: String,
}

impl fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("name", &self.name)
            .field("primal_dim", &self.primal_dim())
            .field("dual_dim", &self.dual_dim())
            .field("blocks", &self.blocks.len())
            .field("lip_g2", &self.lip_g2)
            .field("lip_f2", &self.lip_f2)
            .finish()
    }
}

/// Builder for [`SaddleProblem`]. Unset callbacks default to zero functions.
pub struct SaddleProblemBuilder {
    coupling: DenseMatrix,
    blocks: BlockPartition,
    block_kinds: Option<Vec<BlockKind>>,
    prox_f: Option<Arc<BlockProx>>,
    prox_g: Option<Arc<DualProx>>,
    grad_g2: Option<Arc<Gradient>>,
    grad_f2: Option<Arc<Gradient>>,
    lip_g2: f64,
    lip_f2: f64,
    kkt: Option<Arc<KktFn>>,
    name: String,
}

impl SaddleProblemBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Proximal map of each block of `f`, with the list of identity blocks.
    pub fn prox_f<F>(mut self, kinds: Vec<BlockKind>, prox: F) -> Self
    where
        F: Fn(usize, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        self.block_kinds = Some(kinds);
        self.prox_f = Some(Arc::new(prox));
        self
    }

    pub fn prox_g<F>(mut self, prox: F) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        self.prox_g = Some(Arc::new(prox));
        self
    }

    pub fn grad_g2<F>(mut self, lipschitz: f64, grad: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.lip_g2 = lipschitz;
        self.grad_g2 = Some(Arc::new(grad));
        self
    }

    pub fn grad_f2<F>(mut self, lipschitz: f64, grad: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.lip_f2 = lipschitz;
        self.grad_f2 = Some(Arc::new(grad));
        self
    }

    pub fn kkt<F>(mut self, kkt: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.kkt = Some(Arc::new(kkt));
        self
    }

    pub fn build(self) -> Result<SaddleProblem, ProblemError> {
        self.blocks.check_dim(self.coupling.cols())?;
        if !(self.lip_g2 >= 0.0 && self.lip_f2 >= 0.0) {
            return Err(ProblemError::NegativeLipschitz);
        }
        let nblocks = self.blocks.len();
        let block_kinds = self
            .block_kinds
            .unwrap_or_else(|| vec![BlockKind::Identity; nblocks]);
        if block_kinds.len() != nblocks {
            return Err(ProblemError::Dimension {
                what: "block kinds",
                expected: nblocks,
                found: block_kinds.len(),
            });
        }
        let prox_f = self.prox_f.unwrap_or_else(|| {
            Arc::new(|_: usize, input: &[f64], _: f64, out: &mut [f64]| out.copy_from_slice(input))
        });
        let kkt = self.kkt.unwrap_or_else(|| {
            default_kkt(
                &self.coupling,
                &self.blocks,
                &block_kinds,
                &prox_f,
                &self.prox_g,
                &self.grad_f2,
                &self.grad_g2,
            )
        });
        let coupling_t = Arc::new(self.coupling.transpose());
        Ok(SaddleProblem {
            coupling: Arc::new(self.coupling),
            coupling_t,
            blocks: self.blocks,
            block_kinds,
            prox_f,
            prox_g: self.prox_g,
            grad_g2: self.grad_g2,
            grad_f2: self.grad_f2,
            lip_g2: self.lip_g2,
            lip_f2: self.lip_f2,
            kkt,
            name: self.name,
        })
    }
}

/// Natural residual with unit steps,
/// `‖x - prox_f(x - ∇f₂(x) - Aᵀy)‖² + ‖y - prox_g(y + Ax - ∇g₂(y))‖²`.
/// It vanishes exactly at stationary points; for the bilinear problem it is
/// `‖Aᵀy‖² + ‖Ax‖²`.
fn default_kkt(
    a: &DenseMatrix,
    blocks: &BlockPartition,
    kinds: &[BlockKind],
    prox_f: &Arc<BlockProx>,
    prox_g: &Option<Arc<DualProx>>,
    grad_f2: &Option<Arc<Gradient>>,
    grad_g2: &Option<Arc<Gradient>>,
) -> Arc<KktFn> {
    let (a, blocks, kinds) = (a.clone(), blocks.clone(), kinds.to_vec());
    let (prox_f, prox_g, grad_f2, grad_g2) = (prox_f.clone(), prox_g.clone(), grad_f2.clone(), grad_g2.clone());
    Arc::new(move |x: &[f64], y: &[f64]| {
        let ax = a.matvec(x).expect("kkt: primal length");
        let aty = a.matvec_transpose(y).expect("kkt: dual length");
        let mut gx = vec![0.0; x.len()];
        if let Some(g) = &grad_f2 {
            g(x, &mut gx);
        }
        let xin: Vec<f64> = (0..x.len()).map(|j| x[j] - gx[j] - aty[j]).collect();
        let mut xp = xin.clone();
        for (b, r) in blocks.ranges().enumerate() {
            if kinds[b] == BlockKind::Proximal {
                prox_f(b, &xin[r.clone()], 1.0, &mut xp[r]);
            }
        }
        let mut gy = vec![0.0; y.len()];
        if let Some(g) = &grad_g2 {
            g(y, &mut gy);
        }
        let yin: Vec<f64> = (0..y.len()).map(|i| y[i] + ax[i] - gy[i]).collect();
        let mut yp = yin.clone();
        if let Some(p) = &prox_g {
            p(&yin, 1.0, &mut yp);
        }
        dist_sq(x, &xp) + dist_sq(y, &yp)
    })
}

impl SaddleProblem {
    /// Starts a builder. `coupling` maps primal to dual (rows = dual dim).
    pub fn builder(coupling: DenseMatrix, blocks: BlockPartition) -> SaddleProblemBuilder {
        SaddleProblemBuilder {
            coupling,
            blocks,
            block_kinds: None,
            prox_f: None,
            prox_g: None,
            grad_g2: None,
            grad_f2: None,
            lip_g2: 0.0,
            lip_f2: 0.0,
            kkt: None,
            name: String::from("custom"),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn primal_dim(&self) -> usize {
        self.coupling.cols()
    }

    pub fn dual_dim(&self) -> usize {
        self.coupling.rows()
    }

    pub fn coupling(&self) -> &DenseMatrix {
        &self.coupling
    }

    /// Transposed coupling, so that column `j` of `A` is a contiguous row.
    pub fn coupling_t(&self) -> &DenseMatrix {
        &self.coupling_t
    }

    pub fn blocks(&self) -> &BlockPartition {
        &self.blocks
    }

    pub fn block_kind(&self, block: usize) -> BlockKind {
        self.block_kinds[block]
    }

    pub fn block_kinds(&self) -> &[BlockKind] {
        &self.block_kinds
    }

    /// Number of blocks whose prox is not the identity.
    pub fn proximal_block_count(&self) -> usize {
        self.block_kinds
            .iter()
            .filter(|k| **k == BlockKind::Proximal)
            .count()
    }

    pub fn has_prox_g(&self) -> bool {
        self.prox_g.is_some()
    }

    pub fn has_grad_g2(&self) -> bool {
        self.grad_g2.is_some()
    }

    pub fn has_grad_f2(&self) -> bool {
        self.grad_f2.is_some()
    }

    pub fn lip_g2(&self) -> f64 {
        self.lip_g2
    }

    pub fn lip_f2(&self) -> f64 {
        self.lip_f2
    }

    /// Applies the prox of `f_block` with step `gamma`.
    #[inline]
    pub fn prox_f_block(&self, block: usize, input: &[f64], gamma: f64, out: &mut [f64]) {
        match self.block_kinds[block] {
            BlockKind::Identity => out.copy_from_slice(input),
            BlockKind::Proximal => (self.prox_f)(block, input, gamma, out),
        }
    }

    /// Applies the prox of `f` to the whole primal vector.
    pub fn prox_f(&self, input: &[f64], gamma: f64, out: &mut [f64]) {
        for (b, r) in self.blocks.ranges().enumerate() {
            self.prox_f_block(b, &input[r.clone()], gamma, &mut out[r]);
        }
    }

    pub fn prox_g(&self, input: &[f64], gamma: f64, out: &mut [f64]) {
        match &self.prox_g {
            Some(p) => p(input, gamma, out),
            None => out.copy_from_slice(input),
        }
    }

    /// Writes `∇g₂(y)` into `out` (zero when `g₂ = 0`).
    pub fn grad_g2(&self, y: &[f64], out: &mut [f64]) {
        match &self.grad_g2 {
            Some(g) => g(y, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// Writes `∇f₂(x)` into `out` (zero when `f₂ = 0`).
    pub fn grad_f2(&self, x: &[f64], out: &mut [f64]) {
        match &self.grad_f2 {
            Some(g) => g(x, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    pub fn check_point(&self, z: &PrimalDualPoint) -> Result<(), ProblemError> {
        check_len("x", self.primal_dim(), z.x.len())?;
        check_len("y", self.dual_dim(), z.y.len())?;
        if !z.is_finite() {
            return Err(ProblemError::NonFinitePoint);
        }
        Ok(())
    }

    /// Residual `(F̄, Ḡ)` of one forward-backward pass from `(x_prev, y_prev)`
    /// to `(x_bar, y_bar)`:
    ///
    /// ```text
    /// F̄ = (x_prev - x̄)/γx + ∇f₂(x̄) - ∇f₂(x_prev)
    /// Ḡ = (y_prev - ȳ)/γy + ∇g₂(ȳ) - ∇g₂(y_prev) + A(x_prev - x̄)
    /// ```
    pub fn residual(
        &self,
        x_prev: &[f64],
        y_prev: &[f64],
        x_bar: &[f64],
        y_bar: &[f64],
        gammas: (f64, f64),
    ) -> Result<ResidualPoint, ProblemError> {
        let (gx, gy) = gammas;
        if !(gx > 0.0 && gy > 0.0) {
            return Err(ProblemError::BadSteps(gx, gy));
        }
        let (n, d) = (self.primal_dim(), self.dual_dim());
        check_len("x_prev", n, x_prev.len())?;
        check_len("x_bar", n, x_bar.len())?;
        check_len("y_prev", d, y_prev.len())?;
        check_len("y_bar", d, y_bar.len())?;

        let mut f_bar: Vec<f64> = x_prev.iter().zip(x_bar).map(|(a, b)| (a - b) / gx).collect();
        if self.grad_f2.is_some() {
            let mut g1 = vec![0.0; n];
            let mut g0 = vec![0.0; n];
            self.grad_f2(x_bar, &mut g1);
            self.grad_f2(x_prev, &mut g0);
            for i in 0..n {
                f_bar[i] += g1[i] - g0[i];
            }
        }

        let dx: Vec<f64> = x_prev.iter().zip(x_bar).map(|(a, b)| a - b).collect();
        let adx = self.coupling.matvec(&dx)?;
        let mut g_bar: Vec<f64> = y_prev
            .iter()
            .zip(y_bar)
            .zip(&adx)
            .map(|((a, b), c)| (a - b) / gy + c)
            .collect();
        if self.grad_g2.is_some() {
            let mut g1 = vec![0.0; d];
            let mut g0 = vec![0.0; d];
            self.grad_g2(y_bar, &mut g1);
            self.grad_g2(y_prev, &mut g0);
            for i in 0..d {
                g_bar[i] += g1[i] - g0[i];
            }
        }
        Ok(ResidualPoint { f_bar, g_bar })
    }

    /// KKT error at `z`; rejects non-finite points.
    pub fn kkt_error(&self, z: &PrimalDualPoint) -> Result<f64, ProblemError> {
        self.check_point(z)?;
        Ok(self.kkt_unchecked(&z.x, &z.y))
    }

    /// KKT error without validation; used inside solver loops.
    #[inline]
    pub fn kkt_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.kkt)(x, y)
    }

    pub fn is_tau_stationary(&self, z: &PrimalDualPoint, tau: f64) -> bool {
        matches!(self.kkt_error(z), Ok(k) if k <= tau)
    }
}

/// `wx·‖x - x_ref‖² + wy·‖y - y_ref‖²`
pub fn weighted_distance_sq(
    z: &PrimalDualPoint,
    z_ref: &PrimalDualPoint,
    weights: (f64, f64),
) -> Result<f64, ProblemError> {
    let (wx, wy) = weights;
    if !(wx > 0.0 && wy > 0.0) {
        return Err(ProblemError::BadWeights(wx, wy));
    }
    check_len("x", z_ref.x.len(), z.x.len())?;
    check_len("y", z_ref.y.len(), z.y.len())?;
    Ok(wx * dist_sq(&z.x, &z_ref.x) + wy * dist_sq(&z.y, &z_ref.y))
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ProblemError> {
    if expected != found {
        Err(ProblemError::Dimension {
            what,
            expected,
            found,
        })
    } else {
        Ok(())
    }
}
