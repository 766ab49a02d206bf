//! Primal-dual solvers for nonconvex-nonconcave, nonsmooth saddle point
//! problems satisfying a weak Minty condition.
//!
//! The crate provides NC-PDHG and its randomized block-coordinate variant
//! NC-SPDHG together with their parameter rules, the CEG+, ALM and SAGA
//! baselines, closed-form (possibly nonconvex) proximal maps, and builders for
//! three reference problems: a sigmoid least-squares regression, a
//! one-neuron ReLU perceptron and plain linear least squares.
//!
//! ```no_run
//! use wmvipd::experiments::{build_logistic, Dataset};
//! use wmvipd::params::{ncpdhg_params, ProblemConstants};
//! use wmvipd::problem::WeakMviEstimate;
//! use wmvipd::solvers::{run, NcPdhg, RunOptions};
//!
//! let data = Dataset::synthetic(74, 27, 0);
//! let problem = build_logistic(&data);
//! let k = ProblemConstants::of(&problem).unwrap();
//! let params = ncpdhg_params(WeakMviEstimate(-2e-3), k.op_norm, k.lip_g2, 0.4).unwrap();
//! let mut method = NcPdhg::new(problem, params);
//! let trace = run(&mut method, &RunOptions::default());
//! println!("{:?} after {} prox evaluations", trace.status, trace.final_prox_evals());
//! ```

// index loops over several parallel vectors; `!(a > b)` to treat NaN as failure
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod experiments;
pub mod linalg;
pub mod params;
pub mod problem;
pub mod prox;
pub mod rng;
pub mod solvers;
