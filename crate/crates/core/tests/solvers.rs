use wmvipd::cli::{Algo, Prepared, RunSpec};
use wmvipd::experiments::{build_perceptron, Dataset, Experiment, PerceptronLayout};
use wmvipd::params::{NcPdhgParams, NcSpdhgParams};
use wmvipd::problem::{PrimalDualPoint, SaddleProblem};
use wmvipd::rng::XorShift64Star;
use wmvipd::solvers::{
    ncspdhg_step, ncspdhg_step_on_block, run, DualRule, IterativeMethod, NcPdhg, RunOptions, SolverState,
    Status,
};

fn small() -> Dataset {
    Dataset::synthetic(12, 5, 3)
}

fn random_point(p: &SaddleProblem, rng: &mut XorShift64Star) -> PrimalDualPoint {
    PrimalDualPoint::new(
        (0..p.primal_dim()).map(|_| rng.normal()).collect(),
        (0..p.dual_dim()).map(|_| rng.normal()).collect(),
    )
}

/// NC-SPDHG step written with full vectors; only block `i` of `x` moves.
fn reference_step(p: &SaddleProblem, z: &PrimalDualPoint, c: &NcSpdhgParams, i: usize, theta_scale: f64) -> PrimalDualPoint {
    let a = p.coupling();
    let ax = a.matvec(&z.x).unwrap();
    let mut gy = vec![0.0; z.y.len()];
    p.grad_g2(&z.y, &mut gy);
    let y_hat: Vec<f64> = (0..z.y.len()).map(|k| z.y[k] + c.gamma_y * (ax[k] - gy[k])).collect();
    let mut y_bar = vec![0.0; y_hat.len()];
    p.prox_g(&y_hat, c.gamma_y, &mut y_bar);
    let aty = a.matvec_transpose(&y_bar).unwrap();
    let x_hat: Vec<f64> = (0..z.x.len()).map(|j| z.x[j] - c.gamma_x * aty[j]).collect();
    let mut x_bar = vec![0.0; x_hat.len()];
    p.prox_f(&x_hat, c.gamma_x, &mut x_bar);
    let mut x = z.x.clone();
    for j in p.blocks().range(i) {
        x[j] = (1.0 - c.alpha) * z.x[j] + c.alpha * x_bar[j];
    }
    let dx: Vec<f64> = x.iter().zip(&z.x).map(|(p, q)| p - q).collect();
    let adx = a.matvec(&dx).unwrap();
    let mut gy_bar = vec![0.0; y_bar.len()];
    p.grad_g2(&y_bar, &mut gy_bar);
    let y = (0..z.y.len())
        .map(|k| {
            (1.0 - c.alpha) * z.y[k]
                + c.alpha * y_bar[k]
                + theta_scale * c.gamma_y * c.theta * adx[k]
                + c.alpha * c.gamma_y * (gy[k] - gy_bar[k])
        })
        .collect();
    PrimalDualPoint::new(x, y)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

#[test]
fn block_update_matches_full_vector_reference() {
    let d = small();
    let mut rng = XorShift64Star::new(1);
    for exp in Experiment::ALL {
        let p = exp.build(&d);
        let m = p.blocks().len() as f64;
        let cfg = NcSpdhgParams::manual(0.05, 0.02, 0.6, m);
        for trial in 0..20 {
            let z = random_point(&p, &mut rng);
            let i = trial % p.blocks().len();
            for (rule, scale) in [(DualRule::Spdhg, 1.0), (DualRule::Failed, cfg.alpha)] {
                let mut s = SolverState::new(&p, z.clone(), 0).unwrap();
                ncspdhg_step_on_block(&p, &mut s, &cfg, i, rule);
                let r = reference_step(&p, &z, &cfg, i, scale);
                assert!(max_diff(&s.z.x, &r.x) <= 1e-12, "{exp} x");
                assert!(max_diff(&s.z.y, &r.y) <= 1e-12, "{exp} y");
                let e = s.cached_ax_error(&p);
                assert!(e <= 1e-12, "{exp} cached error {e:e}");
            }
        }
    }
}

#[test]
fn failed_rule_coincides_at_alpha_one() {
    let d = small();
    let p = Experiment::Logistic.build(&d);
    let cfg = NcSpdhgParams::manual(0.05, 0.02, 1.0, p.blocks().len() as f64);
    let z = random_point(&p, &mut XorShift64Star::new(2));
    let mut a = SolverState::new(&p, z.clone(), 0).unwrap();
    let mut b = SolverState::new(&p, z, 0).unwrap();
    ncspdhg_step_on_block(&p, &mut a, &cfg, 3, DualRule::Spdhg);
    ncspdhg_step_on_block(&p, &mut b, &cfg, 3, DualRule::Failed);
    assert_eq!(a.z, b.z);
}

#[test]
fn cached_coupling_product_stays_accurate() {
    let d = Dataset::synthetic(74, 27, 0);
    let p = build_perceptron(&d);
    let cfg = NcSpdhgParams::manual(0.01, 0.005, 0.5, p.blocks().len() as f64);
    let mut s = SolverState::zeros(&p, 11);
    for _ in 0..2500 {
        ncspdhg_step(&p, &mut s, &cfg);
    }
    let e = s.cached_ax_error(&p);
    assert!(e <= 1e-12, "cached error {e:e}");
}

#[test]
fn oversized_steps_diverge() {
    let d = small();
    let p = Experiment::Logistic.build(&d);
    let mut m = NcPdhg::new(p, NcPdhgParams::manual(5.0, 5.0, 1.9));
    let t = run(&mut m, &RunOptions::default());
    assert_eq!(t.status, Status::Diverged);
    assert!(t.final_iteration() < 1000);
}

#[test]
fn same_seed_same_trace() {
    let d = small();
    let prep = Prepared::new(Experiment::Perceptron, &d).unwrap();
    let spec = RunSpec { seed: 9, ..RunSpec::new(Experiment::Perceptron, Algo::NcSpdhg) };
    let a = prep.solve(&spec).unwrap();
    let b = prep.solve(&spec).unwrap();
    let key = |t: &wmvipd::solvers::Trace| t.records.iter().map(|r| (r.iteration, r.kkt.to_bits())).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&b));
    let c = prep.solve(&RunSpec { seed: 10, ..spec }).unwrap();
    assert_ne!(key(&a), key(&c));
}

#[test]
fn every_method_reaches_tau_on_a_small_instance() {
    let d = small();
    for exp in Experiment::ALL {
        let prep = Prepared::new(exp, &d).unwrap();
        for algo in [Algo::NcPdhg, Algo::NcSpdhg, Algo::CegPlus, Algo::Alm, Algo::Saga] {
            if !algo.supports(exp) {
                continue;
            }
            let spec = RunSpec {
                options: RunOptions { max_prox_evals: 50_000_000, ..RunOptions::default() },
                ..RunSpec::new(exp, algo)
            };
            let t = prep.solve(&spec).unwrap();
            assert_eq!(t.status, Status::Converged, "{exp}/{algo} kkt {}", t.final_kkt());
        }
    }
}

#[test]
fn perceptron_solution_has_relu_structure() {
    let d = small();
    let prep = Prepared::new(Experiment::Perceptron, &d).unwrap();
    let k = &prep.constants;
    let params = wmvipd::params::ncpdhg_params(
        wmvipd::problem::WeakMviEstimate(-2e-3),
        k.op_norm,
        k.lip_g2,
        0.55,
    )
    .unwrap();
    let mut m = NcPdhg::new(prep.problem.clone(), params);
    let t = run(&mut m, &RunOptions::default());
    assert_eq!(t.status, Status::Converged);
    // every (u, l) pair lies on the ReLU graph after the final prox, up to the last extrapolation
    let lay = PerceptronLayout { n: d.dim(), m: d.samples() };
    let x = &m.state.z.x;
    let gap = (0..lay.m)
        .map(|j| (x[lay.l(j)] - x[lay.u(j)].max(0.0)).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-2, "gap {gap}");
    assert_eq!(m.iteration(), t.final_iteration());
}
