//! Perceptron regression with a ReLU activation, solved by the randomized
//! block method over several seeds.
//!
//! cargo run --example perceptron_ncspdhg

use wmvipd::cli::{Algo, Prepared, RunSpec};
use wmvipd::experiments::{Dataset, Experiment};

fn main() {
    let d = Dataset::synthetic(74, 27, 0);
    let prep = Prepared::new(Experiment::Perceptron, &d).unwrap();
    println!("{} blocks, |A| = {:.4}", prep.constants.n_blocks, prep.constants.op_norm);
    for seed in 0..5 {
        let spec = RunSpec { seed, ..RunSpec::new(Experiment::Perceptron, Algo::NcSpdhg) };
        let t = prep.solve(&spec).unwrap();
        println!(
            "seed {seed}: {} after {} proxes ({} iterations), kkt {:.2e}",
            t.status.as_str(),
            t.final_prox_evals(),
            t.final_iteration(),
            t.final_kkt()
        );
    }
    let t = prep.solve(&RunSpec::new(Experiment::Perceptron, Algo::NcPdhg)).unwrap();
    println!("full-vector ncpdhg: {} after {} proxes", t.status.as_str(), t.final_prox_evals());
}
