//! Closed-form proximal maps used by the experiments.
//!
//! For a function `f` and step `γ > 0`, `prox_{γf}(x) = argmin f(p) + (p - x)²/(2γ)`.
//! Nonconvex functions may have several minimizers; every map here returns one
//! deterministic element.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("proximal step must be positive and finite, got {0}")]
pub struct BadStep(pub f64);

/// Step size of a proximal map.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ProxStep(f64);

impl ProxStep {
    pub fn new(gamma: f64) -> Result<Self, BadStep> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self(gamma))
        } else {
            Err(BadStep(gamma))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Prox of `t ↦ b·t`.
#[inline]
pub fn prox_linear(x: f64, step: ProxStep, b: f64) -> f64 {
    x - step.0 * b
}

/// Prox of `t ↦ (t - target)²`.
#[inline]
pub fn prox_quadratic_shift(lambda: f64, step: ProxStep, target: f64) -> f64 {
    let g = step.0;
    (lambda + 2.0 * g * target) / (1.0 + 2.0 * g)
}

/// Prox of `t ↦ ½(t - b)²`.
#[inline]
pub fn prox_half_square(u: f64, step: ProxStep, b: f64) -> f64 {
    let g = step.0;
    (u + g * b) / (1.0 + g)
}

/// Euclidean projection of `(u, l)` onto the graph `{(t, max(0, t))}` of ReLU.
///
/// The four regions are separated by `u = 0`, `u + l = 0` and
/// `(1 + √2)u + l = 0`; on a boundary the first matching case wins. The
/// returned `l̃` is always computed as `max(0, ũ)`, so the output lies on the
/// graph exactly.
pub fn proj_relu_graph(u: f64, l: f64) -> (f64, f64) {
    let ut = if u >= 0.0 {
        if u + l <= 0.0 {
            0.0
        } else {
            0.5 * (u + l)
        }
    } else if (1.0 + std::f64::consts::SQRT_2) * u + l > 0.0 {
        0.5 * (u + l)
    } else {
        u
    };
    (ut, ut.max(0.0))
}

/// Prox of the zero function.
pub fn prox_identity(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Applies [`prox_linear`] coordinate-wise, in place.
pub fn apply_linear(x: &mut [f64], step: ProxStep, b: &[f64]) {
    for (xi, bi) in x.iter_mut().zip(b) {
        *xi = prox_linear(*xi, step, *bi);
    }
}

/// Applies [`prox_quadratic_shift`] coordinate-wise, in place.
pub fn apply_quadratic_shift(x: &mut [f64], step: ProxStep, target: &[f64]) {
    for (xi, ti) in x.iter_mut().zip(target) {
        *xi = prox_quadratic_shift(*xi, step, *ti);
    }
}

/// Applies [`prox_half_square`] coordinate-wise, in place.
pub fn apply_half_square(x: &mut [f64], step: ProxStep, b: &[f64]) {
    for (xi, bi) in x.iter_mut().zip(b) {
        *xi = prox_half_square(*xi, step, *bi);
    }
}

/// Projects consecutive `(u, l)` pairs onto the ReLU graph, in place.
pub fn apply_relu_graph(pairs: &mut [f64]) {
    assert!(pairs.len().is_multiple_of(2), "expected (u, l) pairs");
    for p in pairs.chunks_exact_mut(2) {
        let (u, l) = proj_relu_graph(p[0], p[1]);
        p[0] = u;
        p[1] = l;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use proptest::prelude::*;

    fn step(g: f64) -> ProxStep {
        ProxStep::new(g).unwrap()
    }

    #[test]
    fn step_must_be_positive() {
        assert!(ProxStep::new(0.0).is_err());
        assert!(ProxStep::new(-1.0).is_err());
        assert!(ProxStep::new(f64::NAN).is_err());
        assert!(ProxStep::new(f64::INFINITY).is_err());
    }

    #[test]
    fn linear_examples() {
        assert_eq!(prox_linear(1.0, step(0.5), 0.0), 1.0);
        assert!((prox_linear(2.0, step(0.024), 1.0) - 1.976).abs() < 1e-15);
    }

    #[test]
    fn linear_matches_grid_search() {
        let (x, g, b) = (0.7, 0.3, -1.4);
        let q = |t: f64| b * t + (t - x) * (t - x) / (2.0 * g);
        let h = 1e-4;
        let best = (0..=100_000)
            .map(|k| x - 5.0 + k as f64 * h)
            .min_by(|s, t| q(*s).total_cmp(&q(*t)))
            .unwrap();
        assert!((prox_linear(x, step(g), b) - best).abs() <= h);
    }

    #[test]
    fn quadratic_shift_examples() {
        assert_eq!(prox_quadratic_shift(0.3, step(7.0), 0.3), 0.3);
        assert_eq!(prox_quadratic_shift(3.0, step(1.0), 0.0), 1.0);
    }

    #[test]
    fn half_square_examples() {
        assert_eq!(prox_half_square(0.25, step(3.0), 0.25), 0.25);
        assert_eq!(prox_half_square(2.0, step(1.0), 0.0), 1.0);
    }

    #[test]
    fn stationarity_residuals() {
        let mut rng = XorShift64Star::new(5);
        for _ in 0..1000 {
            let x = rng.uniform(-10.0, 10.0);
            let t = rng.uniform(-10.0, 10.0);
            let g = rng.uniform(1e-3, 10.0);
            let p = prox_quadratic_shift(x, step(g), t);
            assert!((2.0 * (p - t) + (p - x) / g).abs() <= 1e-12 * (1.0 + 1.0 / g));
            let p = prox_half_square(x, step(g), t);
            assert!(((p - t) + (p - x) / g).abs() <= 1e-12 * (1.0 + 1.0 / g));
            let p = prox_linear(x, step(g), t);
            assert!((t + (p - x) / g).abs() <= 1e-12 * (1.0 + 1.0 / g));
        }
    }

    #[test]
    fn relu_projection_cases() {
        assert_eq!(proj_relu_graph(1.0, -2.0), (0.0, 0.0));
        assert_eq!(proj_relu_graph(2.0, 2.0), (2.0, 2.0));
        assert_eq!(proj_relu_graph(-1.0, 3.0), (1.0, 1.0));
        assert_eq!(proj_relu_graph(-1.0, 1.0), (-1.0, 0.0));
        // boundary u + l = 0 with u ≥ 0 goes to the kink
        assert_eq!(proj_relu_graph(0.5, -0.5), (0.0, 0.0));
        // boundary (1+√2)u + l = 0 with u < 0 keeps u
        let u = -1.0;
        let l = -(1.0 + std::f64::consts::SQRT_2) * u;
        assert_eq!(proj_relu_graph(u, l).0, u);
    }

    #[test]
    fn identity_prox() {
        assert_eq!(prox_identity(&[0.0; 4]), vec![0.0; 4]);
        let v = [1.5, -2.0, 3.25];
        assert_eq!(prox_identity(&v), v.to_vec());
        let mut block = [1.0, -1.0, 4.0, 4.0];
        let untouched = block[2..].to_vec();
        apply_relu_graph(&mut block[..2]);
        assert_eq!(&block[2..], untouched.as_slice());
    }

    #[test]
    fn vectorized_appliers_match_scalar() {
        let s = step(0.4);
        let mut v = vec![1.0, -2.0, 3.0];
        let b = [0.5, 0.5, -1.0];
        apply_linear(&mut v, s, &b);
        assert_eq!(v, vec![prox_linear(1.0, s, 0.5), prox_linear(-2.0, s, 0.5), prox_linear(3.0, s, -1.0)]);
        let mut v = vec![1.0, -2.0];
        apply_quadratic_shift(&mut v, s, &b[..2]);
        assert_eq!(v[1], prox_quadratic_shift(-2.0, s, 0.5));
        let mut v = vec![1.0, -2.0];
        apply_half_square(&mut v, s, &b[..2]);
        assert_eq!(v[0], prox_half_square(1.0, s, 0.5));
    }

    fn graph_dist_sq(u: f64, l: f64, t: f64) -> f64 {
        (t - u).powi(2) + (t.max(0.0) - l).powi(2)
    }

    proptest! {
        #[test]
        fn prox_optimality(x in -20.0f64..20.0, b in -20.0f64..20.0, g in 1e-3f64..10.0,
                           seed in any::<u64>()) {
            let s = step(g);
            let mut rng = XorShift64Star::new(seed);
            let obj = |f: &dyn Fn(f64) -> f64, p: f64| f(p) + (p - x).powi(2) / (2.0 * g);
            let lin = |t: f64| b * t;
            let quad = |t: f64| (t - b).powi(2);
            let half = |t: f64| 0.5 * (t - b).powi(2);
            let p_lin = prox_linear(x, s, b);
            let p_quad = prox_quadratic_shift(x, s, b);
            let p_half = prox_half_square(x, s, b);
            for _ in 0..100 {
                let q = rng.uniform(-50.0, 50.0);
                prop_assert!(obj(&lin, p_lin) <= obj(&lin, q) + 1e-10 * (1.0 + obj(&lin, q).abs()));
                prop_assert!(obj(&quad, p_quad) <= obj(&quad, q) + 1e-10 * (1.0 + obj(&quad, q).abs()));
                prop_assert!(obj(&half, p_half) <= obj(&half, q) + 1e-10 * (1.0 + obj(&half, q).abs()));
            }
        }

        #[test]
        fn relu_projection_is_on_graph_and_idempotent(u in -5.0f64..5.0, l in -5.0f64..5.0) {
            let (ut, lt) = proj_relu_graph(u, l);
            prop_assert_eq!(lt, ut.max(0.0));
            prop_assert_eq!(proj_relu_graph(ut, lt), (ut, lt));
        }

        #[test]
        fn relu_projection_beats_random_graph_points(u in -5.0f64..5.0, l in -5.0f64..5.0,
                                                     seed in any::<u64>()) {
            let (ut, _) = proj_relu_graph(u, l);
            let d = graph_dist_sq(u, l, ut);
            let mut rng = XorShift64Star::new(seed);
            for _ in 0..100 {
                let t = rng.uniform(-10.0, 10.0);
                prop_assert!(d <= graph_dist_sq(u, l, t) + 1e-12);
            }
        }

        #[test]
        fn relu_projection_continuous_off_ties(u in -5.0f64..5.0, l in -5.0f64..5.0,
                                               du in -1e-9f64..1e-9, dl in -1e-9f64..1e-9) {
            let s = std::f64::consts::SQRT_2 + 1.0;
            prop_assume!(u.abs() > 1e-6 && (u + l).abs() > 1e-6 && (s * u + l).abs() > 1e-6);
            let a = proj_relu_graph(u, l);
            let b = proj_relu_graph(u + du, l + dl);
            prop_assert!((a.0 - b.0).abs() <= 1e-8 && (a.1 - b.1).abs() <= 1e-8);
        }
    }
}
