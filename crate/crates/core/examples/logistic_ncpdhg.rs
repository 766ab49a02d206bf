//! Logistic regression with squared loss, solved by NC-PDHG.
//!
//! cargo run --example logistic_ncpdhg [path/to/libsvm]

use wmvipd::cli::load_dataset;
use wmvipd::experiments::{build_logistic, Dataset};
use wmvipd::params::{ncpdhg_params, ProblemConstants};
use wmvipd::problem::WeakMviEstimate;
use wmvipd::solvers::{run, NcPdhg, RunOptions};

fn main() {
    let data = match std::env::args().nth(1) {
        Some(path) => load_dataset(path.as_ref(), false).expect("dataset"),
        None => Dataset::synthetic(74, 27, 0),
    };
    let problem = build_logistic(&data);
    let k = ProblemConstants::of(&problem).unwrap();
    let params = ncpdhg_params(WeakMviEstimate(-2e-3), k.op_norm, k.lip_g2, 0.4).unwrap();
    println!(
        "gamma_x = {:.4}, gamma_y = {:.4}, alpha = {:.4}",
        params.gamma_x, params.gamma_y, params.alpha
    );
    let mut solver = NcPdhg::new(problem, params);
    let trace = run(&mut solver, &RunOptions { kkt_every: 200, ..RunOptions::default() });
    for r in &trace.records {
        println!("{:>7} iterations {:>9} proxes  kkt {:.3e}", r.iteration, r.prox_evals, r.kkt);
    }
    println!("{}", trace.status.as_str());
}
