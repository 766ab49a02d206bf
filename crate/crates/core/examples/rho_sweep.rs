//! Convergence table over several rho estimates for the logistic problem.
//!
//! cargo run --release --example rho_sweep

use wmvipd::cli::{classify, render_sweep_table, sweep, Algo, Prepared, DEFAULT_RHOS};
use wmvipd::experiments::{Dataset, Experiment};
use wmvipd::solvers::RunOptions;

fn main() {
    let d = Dataset::synthetic(74, 27, 0);
    let prep = Prepared::new(Experiment::Logistic, &d).unwrap();
    let algos = [Algo::NcPdhg, Algo::NcSpdhg, Algo::CegPlus, Algo::Alm];
    let runs = sweep(&prep, &DEFAULT_RHOS, &algos, 3, &RunOptions::default());
    print!("{}", render_sweep_table(&classify(&runs, 0.8), &DEFAULT_RHOS, &algos));
}
