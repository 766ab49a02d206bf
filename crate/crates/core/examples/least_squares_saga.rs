//! Convex least squares: the randomized primal-dual method next to SAGA,
//! both measured against the normal-equations solution.
//!
//! cargo run --example least_squares_saga

use wmvipd::cli::{checkpoint_rows, Algo, Prepared, RunSpec};
use wmvipd::experiments::{normal_equations, Dataset, Experiment};

fn main() {
    let d = Dataset::synthetic(74, 27, 0);
    let w = normal_equations(&d).unwrap();
    println!("|w*|^2 = {:.6}", w.iter().map(|v| v * v).sum::<f64>());
    let prep = Prepared::new(Experiment::LeastSquares, &d).unwrap();
    for algo in [Algo::NcSpdhg, Algo::Saga, Algo::NcPdhg] {
        let t = prep.solve(&RunSpec::new(Experiment::LeastSquares, algo)).unwrap();
        let marks: Vec<String> = checkpoint_rows(&t).iter().map(|(tol, n)| format!("{tol:.0e}:{n}")).collect();
        println!("{algo:<8} {:<10} {}", t.status.as_str(), marks.join(" "));
    }
}
