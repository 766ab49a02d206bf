//! Step sizes chosen by the parameter rules for a given rho estimate.
//!
//! cargo run --example parameters -- -0.002

use wmvipd::cli::{parameter_report, Algo, Prepared};
use wmvipd::experiments::{Dataset, Experiment};

fn main() {
    let rho: f64 = std::env::args().nth(1).map_or(-2e-3, |s| s.parse().expect("rho"));
    let d = Dataset::synthetic(74, 27, 0);
    let algos = [Algo::NcPdhg, Algo::NcSpdhg, Algo::CegPlus, Algo::Alm, Algo::Saga];
    for exp in Experiment::ALL {
        let prep = Prepared::new(exp, &d).unwrap();
        let r = if exp == Experiment::LeastSquares { 0.0 } else { rho };
        println!("{exp} (rho = {r}, |A| = {:.4})", prep.constants.op_norm);
        for (algo, row) in parameter_report(&prep, r, &algos, None) {
            match row {
                Ok(kv) => {
                    let s: Vec<String> = kv.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                    println!("  {algo:<8} {}", s.join("  "));
                }
                Err(e) => println!("  {algo:<8} {e}"),
            }
        }
    }
}
