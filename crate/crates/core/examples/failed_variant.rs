//! The discarded variant that scales the random dual extrapolation by alpha,
//! run next to NC-SPDHG on the convex least-squares problem.
//!
//! cargo run --example failed_variant

use wmvipd::cli::{Algo, Prepared, RunSpec};
use wmvipd::experiments::{Dataset, Experiment};

fn main() {
    let d = Dataset::synthetic(74, 27, 0);
    let prep = Prepared::new(Experiment::LeastSquares, &d).unwrap();
    for algo in [Algo::NcSpdhg, Algo::Failed] {
        for seed in 0..3 {
            let t = prep
                .solve(&RunSpec { seed, ..RunSpec::new(Experiment::LeastSquares, algo) })
                .unwrap();
            println!(
                "{algo:<8} seed {seed}: {:<14} {:>9} proxes  kkt {:.2e}",
                t.status.as_str(),
                t.final_prox_evals(),
                t.final_kkt()
            );
        }
    }
}
