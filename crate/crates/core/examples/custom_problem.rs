//! Building a saddle problem by hand: a small bilinear game with a box
//! constraint on x, solved by NC-PDHG and CEG+.
//!
//! cargo run --example custom_problem

use wmvipd::linalg::{BlockPartition, DenseMatrix};
use wmvipd::params::{CegParams, NcPdhgParams};
use wmvipd::problem::{BlockKind, SaddleProblem};
use wmvipd::solvers::{run, CegPlus, NcPdhg, RunOptions};

fn main() {
    // min_{x in [-1,1]^2} max_y <Ax, y> - ½|y - c|²
    let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0], vec![1.0, -1.0]]).unwrap();
    let c = [1.0, -0.5, 0.25];
    let problem = SaddleProblem::builder(a, BlockPartition::singletons(2))
        .name("box-game")
        .prox_f(vec![BlockKind::Proximal; 2], |_, input, _, out| out[0] = input[0].clamp(-1.0, 1.0))
        .grad_g2(1.0, move |y, out| {
            for i in 0..y.len() {
                out[i] = y[i] - c[i];
            }
        })
        .build()
        .unwrap();

    let opts = RunOptions { tau: 1e-12, kkt_every: 1, ..RunOptions::default() };
    let mut pdhg = NcPdhg::new(problem.clone(), NcPdhgParams::manual(0.2, 0.2, 1.0));
    let t = run(&mut pdhg, &opts);
    println!("ncpdhg  {} in {} iterations, x = {:?}", t.status.as_str(), t.final_iteration(), pdhg.state.z.x);

    let ceg = CegParams { gamma: 0.2, delta: 0.0, alpha: 0.99, eps_ceg: 0.01 };
    let mut eg = CegPlus::new(problem, ceg);
    let t = run(&mut eg, &opts);
    println!("cegplus {} in {} iterations, x = {:?}", t.status.as_str(), t.final_iteration(), eg.state.z.x);
}
