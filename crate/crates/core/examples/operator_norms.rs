//! Operator norms of the three experiment couplings.
//!
//! cargo run --example operator_norms

use wmvipd::experiments::{Dataset, Experiment};
use wmvipd::linalg::{block_operator_norms, operator_norm, DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_TOL};

fn main() {
    let d = Dataset::synthetic(74, 27, 0);
    for exp in Experiment::ALL {
        let p = exp.build(&d);
        let a = p.coupling();
        let norm = operator_norm(a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).unwrap();
        let blocks = block_operator_norms(a, p.blocks()).unwrap();
        let sup = blocks.iter().cloned().fold(0.0, f64::max);
        println!(
            "{exp:<14} A is {}x{}  |A| = {norm:.6}  blocks = {}  sup |A_l| = {sup:.6}",
            a.rows(),
            a.cols(),
            blocks.len()
        );
    }
}
