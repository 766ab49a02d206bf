//! Step-size rules.
//!
//! NC-PDHG and NC-SPDHG take a weak Minty estimate `ρ`, a scaling knob
//! `c ∈ (0, 1)` and the problem constants `‖A‖`, `sup_ℓ ‖A_ℓ‖` and `L_{∇g₂}`.
//! Both rules first check `ρ² < max(1/(8‖A‖²), 1/(8L²))`, then set
//!
//! ```text
//! ε  = c · min(1/‖A‖, (1 - 8‖A‖²ρ²)/(4‖A‖²|ρ|), 1/(√2 L) - 2|ρ|)
//! γy = 2|ρ| + ε
//! γx = 1/(2γy‖A‖²)
//! ```
//!
//! where a term with a vanishing denominator (`ρ = 0` or `L = 0`) is dropped.
//! They differ only in the extrapolation parameter `α`.

use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::linalg::{
    block_operator_norms, operator_norm, DenseMatrix, LinalgError, DEFAULT_NORM_MAX_ITER,
    DEFAULT_NORM_TOL,
};
use crate::problem::{SaddleProblem, WeakMviEstimate};

/// Default CEG+ safety margin subtracted from its extrapolation parameter.
pub const DEFAULT_EPS_CEG: f64 = 0.01;
/// Default ALM penalty.
pub const DEFAULT_ALM_MU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error(
        "infeasible rho: rho^2 = {rho_sq:e} must be < max(1/(8|A|^2), 1/(8 L^2)) = {bound:e} \
         (rho = {rho}, |A| = {op_norm}, L = {lip_g2})"
    )]
    InfeasibleRho {
        rho: f64,
        rho_sq: f64,
        bound: f64,
        op_norm: f64,
        lip_g2: f64,
    },
    #[error("c must lie in (0, 1), got {0}")]
    BadScale(f64),
    #[error("operator norm must be positive and finite, got {0}")]
    BadNorm(f64),
    #[error("Lipschitz constant must be nonnegative and finite, got {0}")]
    BadLipschitz(f64),
    #[error("number of blocks must be positive")]
    NoBlocks,
    #[error("epsilon = {0:e} is not positive; the constants defeat the rule")]
    NonPositiveEpsilon(f64),
    #[error("alpha = {0} is not positive; the constants defeat the rule")]
    NonPositiveAlpha(f64),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Constants of a [`SaddleProblem`] that enter the step-size rules.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    pub op_norm: f64,
    pub block_norms: Vec<f64>,
    pub sup_block_norm: f64,
    pub n_blocks: usize,
    pub lip_g2: f64,
    pub lip_f2: f64,
}

impl ProblemConstants {
    pub fn of(p: &SaddleProblem) -> Result<Self, ParamError> {
        let op_norm = operator_norm(p.coupling(), DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)?;
        let block_norms = block_operator_norms(p.coupling(), p.blocks())?;
        let sup_block_norm = block_norms.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            op_norm,
            block_norms,
            sup_block_norm,
            n_blocks: p.blocks().len(),
            lip_g2: p.lip_g2(),
            lip_f2: p.lip_f2(),
        })
    }

    pub fn gram_norm(&self) -> f64 {
        self.op_norm * self.op_norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcPdhgParams {
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub alpha: f64,
    pub c: f64,
    pub epsilon: f64,
    pub rho: f64,
    /// `max(1/(8‖A‖²), 1/(8L²)) - ρ²`
    pub feasibility_margin: f64,
}

impl NcPdhgParams {
    /// Parameters set by hand, e.g. for tests or transcripts.
    pub fn manual(gamma_x: f64, gamma_y: f64, alpha: f64) -> Self {
        Self {
            gamma_x,
            gamma_y,
            alpha,
            c: f64::NAN,
            epsilon: f64::NAN,
            rho: f64::NAN,
            feasibility_margin: f64::NAN,
        }
    }

    /// `2γxγy‖A‖² + γx²L²_{∇f₂}`, which the step rule keeps `≤ 1`.
    pub fn step_product(&self, op_norm: f64, lip_f2: f64) -> f64 {
        2.0 * self.gamma_x * self.gamma_y * op_norm * op_norm
            + self.gamma_x * self.gamma_x * lip_f2 * lip_f2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcSpdhgParams {
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub alpha: f64,
    pub theta: f64,
    pub c: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub feasibility_margin: f64,
}

impl NcSpdhgParams {
    pub fn manual(gamma_x: f64, gamma_y: f64, alpha: f64, theta: f64) -> Self {
        Self {
            gamma_x,
            gamma_y,
            alpha,
            theta,
            c: f64::NAN,
            epsilon: f64::NAN,
            rho: f64::NAN,
            feasibility_margin: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CegParams {
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub eps_ceg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmParams {
    pub mu: f64,
    pub gamma: f64,
    pub inner_max: usize,
    pub inner_tol: f64,
}

impl AlmParams {
    pub fn new(mu: f64, gamma: f64) -> Self {
        Self {
            mu,
            gamma,
            inner_max: 10_000,
            inner_tol: 1e-9,
        }
    }
}

/// Constants `(C_x, C_y, C)` of the NC-SPDHG descent inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub c_x: f64,
    pub c_y: f64,
    pub c: f64,
}

/// `max(1/(8‖A‖²), 1/(8L²)) - ρ²`; positive iff `ρ` is admissible.
pub fn feasibility_margin(rho: WeakMviEstimate, op_norm_a: f64, lip_g2: f64) -> f64 {
    let a_term = 1.0 / (8.0 * op_norm_a * op_norm_a);
    let l_term = if lip_g2 == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (8.0 * lip_g2 * lip_g2)
    };
    a_term.max(l_term) - rho.rho() * rho.rho()
}

pub fn check_rho_feasible(rho: WeakMviEstimate, op_norm_a: f64, lip_g2: f64) -> bool {
    feasibility_margin(rho, op_norm_a, lip_g2) > 0.0
}

fn validate(rho: WeakMviEstimate, op_norm_a: f64, lip_g2: f64, c: f64) -> Result<f64, ParamError> {
    if !(op_norm_a > 0.0 && op_norm_a.is_finite()) {
        return Err(ParamError::BadNorm(op_norm_a));
    }
    if !(lip_g2 >= 0.0 && lip_g2.is_finite()) {
        return Err(ParamError::BadLipschitz(lip_g2));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(ParamError::BadScale(c));
    }
    let margin = feasibility_margin(rho, op_norm_a, lip_g2);
    if !(margin > 0.0) || !rho.rho().is_finite() {
        let bound = margin + rho.rho() * rho.rho();
        return Err(ParamError::InfeasibleRho {
            rho: rho.rho(),
            rho_sq: rho.rho() * rho.rho(),
            bound,
            op_norm: op_norm_a,
            lip_g2,
        });
    }
    Ok(margin)
}

/// `ε` of both rules; see the module docs.
pub fn epsilon(rho: WeakMviEstimate, op_norm_a: f64, lip_g2: f64, c: f64) -> f64 {
    let r = rho.rho().abs();
    let a2 = op_norm_a * op_norm_a;
    let t1 = 1.0 / op_norm_a;
    let t2 = if r == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - 8.0 * a2 * r * r) / (4.0 * a2 * r)
    };
    let t3 = if lip_g2 == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (SQRT_2 * lip_g2) - 2.0 * r
    };
    c * t1.min(t2).min(t3)
}

/// NC-PDHG rule: `α = 1 + 2ρ/min(γx, γy)`, capped at 1. Assumes `f₂ = 0`.
pub fn ncpdhg_params(
    rho: WeakMviEstimate,
    op_norm_a: f64,
    lip_g2: f64,
    c: f64,
) -> Result<NcPdhgParams, ParamError> {
    let margin = validate(rho, op_norm_a, lip_g2, c)?;
    let eps = epsilon(rho, op_norm_a, lip_g2, c);
    if !(eps > 0.0) {
        return Err(ParamError::NonPositiveEpsilon(eps));
    }
    let gamma_y = 2.0 * rho.rho().abs() + eps;
    let gamma_x = 1.0 / (2.0 * gamma_y * op_norm_a * op_norm_a);
    let alpha = (1.0 + 2.0 * rho.rho() / gamma_x.min(gamma_y)).min(1.0);
    if !(alpha > 0.0) {
        return Err(ParamError::NonPositiveAlpha(alpha));
    }
    Ok(NcPdhgParams {
        gamma_x,
        gamma_y,
        alpha,
        c,
        epsilon: eps,
        rho: rho.rho(),
        feasibility_margin: margin,
    })
}

/// NC-SPDHG rule with `θ = m` blocks and `s = sup_ℓ ‖A_ℓ‖`:
///
/// ```text
/// α = min(1 - 2|ρ|/γy, 2(γx - γx²γy‖A‖² - |ρ|) / (γx + γx²γy(m s² - ‖A‖²)))
/// ```
pub fn ncspdhg_params(
    rho: WeakMviEstimate,
    op_norm_a: f64,
    sup_block_norm: f64,
    n_blocks: usize,
    lip_g2: f64,
    c: f64,
) -> Result<NcSpdhgParams, ParamError> {
    if n_blocks == 0 {
        return Err(ParamError::NoBlocks);
    }
    let margin = validate(rho, op_norm_a, lip_g2, c)?;
    let eps = epsilon(rho, op_norm_a, lip_g2, c);
    if !(eps > 0.0) {
        return Err(ParamError::NonPositiveEpsilon(eps));
    }
    let r = rho.rho().abs();
    let a2 = op_norm_a * op_norm_a;
    let m = n_blocks as f64;
    let s2 = sup_block_norm * sup_block_norm;
    let gamma_y = 2.0 * r + eps;
    let gamma_x = 1.0 / (2.0 * gamma_y * a2);
    let gx2gy = gamma_x * gamma_x * gamma_y;
    let first = 1.0 - 2.0 * r / gamma_y;
    let second = 2.0 * (gamma_x - gx2gy * a2 - r) / (gamma_x + gx2gy * (m * s2 - a2));
    let alpha = first.min(second);
    if !(alpha > 0.0) {
        return Err(ParamError::NonPositiveAlpha(alpha));
    }
    Ok(NcSpdhgParams {
        gamma_x,
        gamma_y,
        alpha,
        theta: m,
        c,
        epsilon: eps,
        rho: rho.rho(),
        feasibility_margin: margin,
    })
}

/// CEG+ with `γ = 1/(√2(L + ‖A‖))`, `δ = ρ` and `α = 1 + 2δ/γ - ε_ceg`.
pub fn ceg_params(
    rho: WeakMviEstimate,
    op_norm_a: f64,
    lip_g2: f64,
    eps_ceg: f64,
) -> Result<CegParams, ParamError> {
    if !(eps_ceg > 0.0) {
        return Err(ParamError::NonPositive {
            what: "eps_ceg",
            value: eps_ceg,
        });
    }
    if !(op_norm_a > 0.0 && op_norm_a.is_finite()) {
        return Err(ParamError::BadNorm(op_norm_a));
    }
    if !(lip_g2 >= 0.0 && lip_g2.is_finite()) {
        return Err(ParamError::BadLipschitz(lip_g2));
    }
    let gamma = 1.0 / (SQRT_2 * (lip_g2 + op_norm_a));
    let delta = rho.rho();
    let alpha = 1.0 + 2.0 * delta / gamma - eps_ceg;
    if !(alpha > 0.0) {
        return Err(ParamError::NonPositiveAlpha(alpha));
    }
    Ok(CegParams {
        gamma,
        delta,
        alpha,
        eps_ceg,
    })
}

/// `1/(L + μ‖AᵀA‖)`
pub fn alm_step_size(lip_g2: f64, mu: f64, gram_norm_a: f64) -> Result<f64, ParamError> {
    if !(mu > 0.0) {
        return Err(ParamError::NonPositive {
            what: "mu",
            value: mu,
        });
    }
    let denom = lip_g2 + mu * gram_norm_a;
    if !(denom > 0.0) {
        return Err(ParamError::NonPositive {
            what: "L + mu |A^T A|",
            value: denom,
        });
    }
    Ok(1.0 / denom)
}

/// `1/max_i ‖B_i‖²` over the rows of `b`.
pub fn saga_step_size(b: &DenseMatrix) -> Result<f64, ParamError> {
    let l = b.row_norms_sq().into_iter().fold(0.0, f64::max);
    if l == 0.0 {
        return Err(ParamError::Linalg(LinalgError::ZeroMatrix));
    }
    Ok(1.0 / l)
}

/// ```text
/// C_x = ρ + γx(1 - α/2) - γx²γy((1 - α/2)‖A‖² + α m s²/2)
/// C_y = ρ + γy(1 - α)/2
/// ```
pub fn rate_constants(
    params: &NcSpdhgParams,
    rho: WeakMviEstimate,
    op_norm_a: f64,
    sup_block_norm: f64,
    n_blocks: usize,
) -> RateConstants {
    let (gx, gy, a) = (params.gamma_x, params.gamma_y, params.alpha);
    let m = n_blocks as f64;
    let a2 = op_norm_a * op_norm_a;
    let s2 = sup_block_norm * sup_block_norm;
    let c_x = rho.rho() + gx * (1.0 - a / 2.0)
        - gx * gx * gy * ((1.0 - a / 2.0) * a2 + a * m * s2 / 2.0);
    let c_y = rho.rho() + gy * (1.0 - a) / 2.0;
    RateConstants {
        c_x,
        c_y,
        c: c_x.min(c_y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rho(r: f64) -> WeakMviEstimate {
        WeakMviEstimate(r)
    }

    #[test]
    fn feasibility_examples() {
        assert!(check_rho_feasible(rho(0.0), 123.0, 0.0));
        assert!(check_rho_feasible(rho(0.0), 1.0, 5.0));
        assert!(!check_rho_feasible(rho(-1.0), 1.0, 1.0));
        // no smooth term: the L bound is infinite
        assert!(check_rho_feasible(rho(-1.0), 1.0, 0.0));
        // L term dominates when L is small
        assert!(check_rho_feasible(rho(-0.3), 10.0, 1.0));
        assert!(!check_rho_feasible(rho(-0.4), 10.0, 1.0));
    }

    #[test]
    fn ncpdhg_rho_zero_substitution() {
        let p = ncpdhg_params(rho(0.0), 1.0, 0.0, 0.5).unwrap();
        assert_eq!(p.epsilon, 0.5);
        assert_eq!(p.gamma_y, 0.5);
        assert_eq!(p.gamma_x, 1.0);
        assert_eq!(p.alpha, 1.0);
    }

    #[test]
    fn ncpdhg_hand_computation() {
        // ‖A‖ = 2, L = 0.5, ρ = -0.01, c = 0.5
        // terms: 0.5, (1 - 8·4·1e-4)/(4·4·0.01) = 6.23, 1/(√2/2) - 0.02
        let p = ncpdhg_params(rho(-0.01), 2.0, 0.5, 0.5).unwrap();
        assert!((p.epsilon - 0.25).abs() < 1e-15);
        assert!((p.gamma_y - 0.27).abs() < 1e-15);
        assert!((p.gamma_x - 1.0 / (2.0 * 0.27 * 4.0)).abs() < 1e-15);
        let gmin = p.gamma_x.min(p.gamma_y);
        assert!((p.alpha - (1.0 - 0.02 / gmin)).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ncpdhg_params(rho(-1.0), 1.0, 1.0, 0.5),
            Err(ParamError::InfeasibleRho { .. })
        ));
        assert!(matches!(ncpdhg_params(rho(0.0), 1.0, 0.0, 1.0), Err(ParamError::BadScale(_))));
        assert!(matches!(ncpdhg_params(rho(0.0), 0.0, 0.0, 0.5), Err(ParamError::BadNorm(_))));
        assert!(matches!(
            ncspdhg_params(rho(0.0), 1.0, 1.0, 0, 0.0, 0.5),
            Err(ParamError::NoBlocks)
        ));
        // feasible only through the L term, but then the ‖A‖ term of ε is negative
        assert!(matches!(
            ncpdhg_params(rho(-0.3), 10.0, 1.0, 0.5),
            Err(ParamError::NonPositiveEpsilon(_))
        ));
        let msg = ncpdhg_params(rho(-1.0), 1.0, 1.0, 0.5).unwrap_err().to_string();
        assert!(msg.contains("rho^2") && msg.contains("max(1/(8|A|^2), 1/(8 L^2))"));
    }

    #[test]
    fn ceg_substitution() {
        let p = ceg_params(rho(0.0), 1.0, 0.0, 0.01).unwrap();
        assert!((p.gamma - 1.0 / SQRT_2).abs() < 1e-15);
        assert_eq!(p.delta, 0.0);
        assert!((p.alpha - 0.99).abs() < 1e-15);
        assert!(matches!(ceg_params(rho(-1.0), 1.0, 0.0, 0.01), Err(ParamError::NonPositiveAlpha(_))));
    }

    #[test]
    fn alm_and_saga_examples() {
        assert_eq!(alm_step_size(0.0, 1.0, 4.0).unwrap(), 0.25);
        assert!(alm_step_size(0.0, 0.0, 4.0).is_err());
        assert_eq!(saga_step_size(&DenseMatrix::identity(3)).unwrap(), 1.0);
        let b = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 0.0]]).unwrap();
        assert!((saga_step_size(&b).unwrap() - 1.0 / 9.0).abs() < 1e-16);
        assert!(saga_step_size(&DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn rate_constants_limits() {
        let p = NcSpdhgParams::manual(0.3, 0.2, 0.0, 4.0);
        let k = rate_constants(&p, rho(0.0), 2.0, 1.0, 4);
        assert!((k.c_x - (0.3 - 0.09 * 0.2 * 4.0)).abs() < 1e-15);
        assert!((k.c_y - 0.1).abs() < 1e-15);
        let p = NcSpdhgParams::manual(0.3, 0.2, 1.0, 4.0);
        assert_eq!(rate_constants(&p, rho(0.0), 2.0, 1.0, 4).c_y, 0.0);
    }

    proptest! {
        #[test]
        fn ncpdhg_invariants(r in -0.05f64..0.0, a in 0.5f64..50.0, l in prop_oneof![Just(0.0), 0.01f64..2.0],
                             c in 0.01f64..0.99) {
            let rr = rho(r);
            prop_assume!(check_rho_feasible(rr, a, l));
            if let Ok(p) = ncpdhg_params(rr, a, l, c) {
                if l > 0.0 {
                    prop_assert!(p.gamma_y <= 1.0 / (SQRT_2 * l));
                }
                // α sits on the boundary 1 + 2ρ/min(γx, γy) by construction
                prop_assert!(p.alpha <= 1.0 + 2.0 * r / p.gamma_x.min(p.gamma_y) + 1e-12);
                prop_assert!(p.step_product(a, 0.0) <= 1.0 + 1e-12);
                prop_assert!(p.alpha > 0.0 && p.alpha <= 1.0);
            }
        }

        #[test]
        fn ncspdhg_constants_nonnegative(r in -0.01f64..0.0, a in 0.5f64..50.0, frac in 0.05f64..1.0,
                                         m in 1usize..200, c in 0.01f64..0.99) {
            let s = a * frac.max(1.0 / (m as f64).sqrt());
            if let Ok(p) = ncspdhg_params(rho(r), a, s, m, 0.0, c) {
                let k = rate_constants(&p, rho(r), a, s, m);
                let scale = p.gamma_x.max(p.gamma_y);
                prop_assert!(k.c_x >= -1e-12 * scale, "{k:?}");
                prop_assert!(k.c_y >= -1e-12 * scale, "{k:?}");
                prop_assert!(p.alpha <= 1.0 - 2.0 * r.abs() / p.gamma_y + 1e-12);
                prop_assert_eq!(p.theta, m as f64);
            }
        }

        #[test]
        fn gamma_y_grows_with_c(r in -0.01f64..0.0, a in 0.5f64..50.0, c1 in 0.01f64..0.98, dc in 0.001f64..0.01) {
            let c2 = (c1 + dc).min(0.99);
            prop_assume!(c2 > c1);
            if let (Ok(p1), Ok(p2)) = (ncpdhg_params(rho(r), a, 0.0, c1), ncpdhg_params(rho(r), a, 0.0, c2)) {
                prop_assert!(p2.gamma_y > p1.gamma_y);
            }
        }

        #[test]
        fn rho_zero_reduction(a in 0.1f64..100.0, c in 0.01f64..0.99) {
            let p = ncpdhg_params(rho(0.0), a, 0.0, c).unwrap();
            prop_assert_eq!(p.alpha, 1.0);
            prop_assert!((p.step_product(a, 0.0) - 1.0).abs() <= 1e-12);
        }
    }
}
