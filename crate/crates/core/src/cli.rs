//! Command-line front end and the experiment driver behind it.
//!
//! ```text
//! wmvipd run       --experiment logistic --algo ncpdhg [--rho -2e-3] [--c 0.4] [--out trace.csv]
//! wmvipd params    --experiment logistic [--algo ncspdhg]
//! wmvipd sweep-rho --experiment logistic [--rhos 0,-1e-5,...] [--seeds 10] [--out dir]
//! wmvipd compare   --experiment logistic [--algos ncpdhg,ncspdhg,cegplus,alm] [--out dir]
//! ```
//!
//! Data comes from `--data`, else `--synthetic`, else `$WMVIPD_DATA/pyrim_scale`.
//! Exit codes: 0 converged (or command completed), 1 usage or data error,
//! 2 diverged, 3 budget exhausted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::dataio::{parse_libsvm, write_trace_csv, ParseError};
use crate::experiments::{Dataset, DatasetError, Experiment};
use crate::params::{
    alm_step_size, ceg_params, ncpdhg_params, ncspdhg_params, saga_step_size, rate_constants, AlmParams,
    ParamError, ProblemConstants, DEFAULT_ALM_MU, DEFAULT_EPS_CEG,
};
use crate::problem::{SaddleProblem, WeakMviEstimate};
use crate::solvers::{
    run, Alm, AlmProblem, CegPlus, IterativeMethod, NcPdhg, NcSpdhg, RunOptions, Saga, SolverError, Status,
    Trace,
};

/// Name of the dataset file looked up under `$WMVIPD_DATA`.
pub const PYRIM_FILE: &str = "pyrim_scale";
pub const PYRIM_SHAPE: (usize, usize) = (74, 27);
pub const DEFAULT_RHOS: [f64; 7] = [0.0, -1e-5, -1e-4, -1e-3, -2e-3, -5e-3, -9e-3];
pub const CHECKPOINTS: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    NcPdhg,
    NcSpdhg,
    Failed,
    CegPlus,
    Alm,
    Saga,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::NcPdhg => "ncpdhg",
            Algo::NcSpdhg => "ncspdhg",
            Algo::Failed => "failed",
            Algo::CegPlus => "cegplus",
            Algo::Alm => "alm",
            Algo::Saga => "saga",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Algo::NcSpdhg | Algo::Failed | Algo::Saga)
    }

    pub fn supports(self, e: Experiment) -> bool {
        match self {
            Algo::Saga => e == Experiment::LeastSquares,
            _ => true,
        }
    }

    /// Default scaling `c` of the step-size rule, if the method has one.
    pub fn default_c(self, e: Experiment) -> Option<f64> {
        match (self, e) {
            (Algo::NcPdhg, Experiment::Logistic) => Some(0.4),
            (Algo::NcPdhg, Experiment::Perceptron) => Some(0.55),
            (Algo::NcPdhg, Experiment::LeastSquares) => Some(0.5),
            (Algo::NcSpdhg | Algo::Failed, Experiment::Logistic) => Some(0.1),
            (Algo::NcSpdhg | Algo::Failed, Experiment::Perceptron) => Some(0.14),
            (Algo::NcSpdhg | Algo::Failed, Experiment::LeastSquares) => Some(0.05),
            _ => None,
        }
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ncpdhg" => Ok(Algo::NcPdhg),
            "ncspdhg" => Ok(Algo::NcSpdhg),
            "failed" => Ok(Algo::Failed),
            "cegplus" | "ceg+" => Ok(Algo::CegPlus),
            "alm" => Ok(Algo::Alm),
            "saga" => Ok(Algo::Saga),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{0}")]
    Dataset(#[from] DatasetError),
    #[error("no data: pass --data, --synthetic, or set WMVIPD_DATA to a directory containing {PYRIM_FILE}")]
    NoData,
    #[error("{0}")]
    Param(#[from] ParamError),
    #[error("{0}")]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Usage(String),
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
}

/// Everything needed to reproduce one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub experiment: Experiment,
    pub algo: Algo,
    pub rho: f64,
    /// `None` selects [`Algo::default_c`].
    pub c: Option<f64>,
    pub seed: u64,
    pub options: RunOptions,
}

impl RunSpec {
    pub fn new(experiment: Experiment, algo: Algo) -> Self {
        Self {
            experiment,
            algo,
            rho: experiment.default_rho(),
            c: None,
            seed: 0,
            options: RunOptions::default(),
        }
    }
}

/// Resolved configuration as key/value pairs, written into trace headers.
pub type RunInfo = Vec<(String, String)>;

/// One method's parameters as `(name, value)` pairs, or why the rule failed.
pub type ParamRow = (Algo, Result<Vec<(String, f64)>, ParamError>);

/// A built problem with its constants, reusable across runs.
#[derive(Clone)]
pub struct Prepared {
    pub experiment: Experiment,
    pub data: Dataset,
    pub problem: SaddleProblem,
    pub constants: ProblemConstants,
}

impl Prepared {
    pub fn new(experiment: Experiment, data: &Dataset) -> Result<Self, CliError> {
        let problem = experiment.build(data);
        let constants = ProblemConstants::of(&problem)?;
        Ok(Self {
            experiment,
            data: data.clone(),
            problem,
            constants,
        })
    }

    /// Builds the solver for `spec`, with its resolved parameters as
    /// key/value pairs.
    pub fn method(&self, spec: &RunSpec) -> Result<(Box<dyn IterativeMethod>, RunInfo), CliError> {
        if spec.experiment != self.experiment {
            return Err(CliError::Usage(format!(
                "spec is for {} but the prepared problem is {}",
                spec.experiment, self.experiment
            )));
        }
        if !spec.algo.supports(self.experiment) {
            return Err(SolverError::Incompatible {
                algo: spec.algo.to_string(),
                experiment: self.experiment.to_string(),
            }
            .into());
        }
        let k = &self.constants;
        let rho = WeakMviEstimate(spec.rho);
        let c = spec.c.or(spec.algo.default_c(self.experiment));
        let mut info = vec![
            ("experiment".to_string(), self.experiment.to_string()),
            ("rho".to_string(), format!("{:e}", spec.rho)),
            ("seed".to_string(), spec.seed.to_string()),
            ("op_norm".to_string(), format!("{:e}", k.op_norm)),
            ("sup_block_norm".to_string(), format!("{:e}", k.sup_block_norm)),
            ("n_blocks".to_string(), k.n_blocks.to_string()),
            ("lip_g2".to_string(), format!("{:e}", k.lip_g2)),
            ("samples".to_string(), self.data.samples().to_string()),
            ("features".to_string(), self.data.dim().to_string()),
            ("x0".to_string(), "zero".to_string()),
            ("prox_accounting".to_string(), "non-identity block proxes of f plus nontrivial proxes of g".to_string()),
        ];
        if spec.rho > 0.0 {
            info.push(("note".to_string(), "positive rho: epsilon uses 1/(sqrt2 L) - 2|rho|".to_string()));
        }
        let p = self.problem.clone();
        let method: Box<dyn IterativeMethod> = match spec.algo {
            Algo::NcPdhg => {
                let c = c.expect("default c");
                Box::new(NcPdhg::new(p, ncpdhg_params(rho, k.op_norm, k.lip_g2, c)?))
            }
            Algo::NcSpdhg | Algo::Failed => {
                let c = c.expect("default c");
                let params = ncspdhg_params(rho, k.op_norm, k.sup_block_norm, k.n_blocks, k.lip_g2, c)?;
                let rc = rate_constants(&params, rho, k.op_norm, k.sup_block_norm, k.n_blocks);
                info.push(("c_x".to_string(), format!("{:e}", rc.c_x)));
                info.push(("c_y".to_string(), format!("{:e}", rc.c_y)));
                if spec.algo == Algo::Failed {
                    Box::new(NcSpdhg::failed(p, params, spec.seed)?)
                } else {
                    Box::new(NcSpdhg::new(p, params, spec.seed)?)
                }
            }
            Algo::CegPlus => Box::new(CegPlus::new(p, ceg_params(rho, k.op_norm, k.lip_g2, DEFAULT_EPS_CEG)?)),
            Algo::Alm => {
                let gamma = alm_step_size(k.lip_g2, DEFAULT_ALM_MU, k.gram_norm())?;
                let alm = match self.experiment {
                    Experiment::Logistic => AlmProblem::inner_dual(p, self.data.labels().to_vec()),
                    _ => AlmProblem::inner_primal(p),
                };
                Box::new(Alm::new(alm, AlmParams::new(DEFAULT_ALM_MU, gamma)))
            }
            Algo::Saga => {
                let gamma = saga_step_size(self.data.features())?;
                Box::new(Saga::new(
                    self.data.features().clone(),
                    self.data.labels().to_vec(),
                    gamma,
                    spec.seed,
                ))
            }
        };
        Ok((method, info))
    }

    /// Runs `spec` to completion.
    pub fn solve(&self, spec: &RunSpec) -> Result<Trace, CliError> {
        spec.options.validate()?;
        let (mut method, info) = self.method(spec)?;
        let mut trace = run(method.as_mut(), &spec.options);
        trace.metadata.extend(info);
        Ok(trace)
    }
}

/// Parsed parameters of every method applicable to an experiment, as
/// `(algo, [(key, value)])` rows.
pub fn parameter_report(
    prep: &Prepared,
    rho: f64,
    algos: &[Algo],
    c_override: Option<f64>,
) -> Vec<ParamRow> {
    let k = &prep.constants;
    let r = WeakMviEstimate(rho);
    algos
        .iter()
        .filter(|a| a.supports(prep.experiment))
        .map(|&algo| {
            let c = c_override.or(algo.default_c(prep.experiment));
            let row = match algo {
                Algo::NcPdhg => ncpdhg_params(r, k.op_norm, k.lip_g2, c.expect("default c")).map(|p| {
                    vec![
                        ("gamma_x".into(), p.gamma_x),
                        ("gamma_y".into(), p.gamma_y),
                        ("alpha".into(), p.alpha),
                        ("c".into(), p.c),
                        ("epsilon".into(), p.epsilon),
                    ]
                }),
                Algo::NcSpdhg | Algo::Failed => {
                    ncspdhg_params(r, k.op_norm, k.sup_block_norm, k.n_blocks, k.lip_g2, c.expect("default c")).map(
                        |p| {
                            let rc = rate_constants(&p, r, k.op_norm, k.sup_block_norm, k.n_blocks);
                            vec![
                                ("gamma_x".into(), p.gamma_x),
                                ("gamma_y".into(), p.gamma_y),
                                ("alpha".into(), p.alpha),
                                ("theta".into(), p.theta),
                                ("c".into(), p.c),
                                ("epsilon".into(), p.epsilon),
                                ("c_x".into(), rc.c_x),
                                ("c_y".into(), rc.c_y),
                            ]
                        },
                    )
                }
                Algo::CegPlus => ceg_params(r, k.op_norm, k.lip_g2, DEFAULT_EPS_CEG).map(|p| {
                    vec![
                        ("gamma".into(), p.gamma),
                        ("delta".into(), p.delta),
                        ("alpha".into(), p.alpha),
                        ("eps_ceg".into(), p.eps_ceg),
                    ]
                }),
                Algo::Alm => alm_step_size(k.lip_g2, DEFAULT_ALM_MU, k.gram_norm())
                    .map(|g| vec![("gamma".into(), g), ("mu".into(), DEFAULT_ALM_MU)]),
                Algo::Saga => saga_step_size(prep.data.features()).map(|g| vec![("gamma".into(), g)]),
            };
            (algo, row)
        })
        .collect()
}

/// Outcome class of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Converged,
    Slow,
    Failed,
}

impl CellClass {
    pub fn mark(self) -> &'static str {
        match self {
            CellClass::Converged => "✓",
            CellClass::Slow => "s",
            CellClass::Failed => "✗",
        }
    }
}

/// One run inside a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub rho: f64,
    pub algo: Algo,
    pub seed: u64,
    pub status: Option<Status>,
    pub iterations: u64,
    pub prox_evals: u64,
    pub final_kkt: f64,
    pub error: Option<String>,
}

/// Aggregated sweep cell: `(ρ, algo)` over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub rho: f64,
    pub algo: Algo,
    pub converged: usize,
    pub runs: usize,
    pub median_evals: Option<u64>,
    pub class: CellClass,
}

/// Runs every `(ρ, algo, seed)` combination. Deterministic methods use one
/// run per cell; randomized ones use `seeds` runs.
pub fn sweep(prep: &Prepared, rhos: &[f64], algos: &[Algo], seeds: u64, options: &RunOptions) -> Vec<SweepRun> {
    let mut out = Vec::new();
    for &rho in rhos {
        for &algo in algos {
            let n = if algo.is_randomized() { seeds.max(1) } else { 1 };
            for seed in 0..n {
                let spec = RunSpec {
                    experiment: prep.experiment,
                    algo,
                    rho,
                    c: None,
                    seed,
                    options: *options,
                };
                let run = match prep.solve(&spec) {
                    Ok(t) => SweepRun {
                        rho,
                        algo,
                        seed,
                        status: Some(t.status),
                        iterations: t.final_iteration(),
                        prox_evals: t.final_prox_evals(),
                        final_kkt: t.final_kkt(),
                        error: None,
                    },
                    Err(e) => SweepRun {
                        rho,
                        algo,
                        seed,
                        status: None,
                        iterations: 0,
                        prox_evals: 0,
                        final_kkt: f64::NAN,
                        error: Some(e.to_string()),
                    },
                };
                out.push(run);
            }
        }
    }
    out
}

fn median(mut v: Vec<u64>) -> Option<u64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    Some(v[v.len() / 2])
}

/// Classifies cells. A cell passes when at least `min_fraction` of its runs
/// converged; it is `Slow` when its median cost exceeds ten times the median
/// over the passing cells of the same algorithm.
pub fn classify(runs: &[SweepRun], min_fraction: f64) -> Vec<SweepCell> {
    let mut cells: Vec<SweepCell> = Vec::new();
    for r in runs {
        let conv = r.status == Some(Status::Converged);
        match cells.iter_mut().find(|c| c.rho.to_bits() == r.rho.to_bits() && c.algo == r.algo) {
            Some(c) => {
                c.runs += 1;
                c.converged += usize::from(conv);
            }
            None => cells.push(SweepCell {
                rho: r.rho,
                algo: r.algo,
                converged: usize::from(conv),
                runs: 1,
                median_evals: None,
                class: CellClass::Failed,
            }),
        }
    }
    for c in cells.iter_mut() {
        c.median_evals = median(
            runs.iter()
                .filter(|r| {
                    r.rho.to_bits() == c.rho.to_bits() && r.algo == c.algo && r.status == Some(Status::Converged)
                })
                .map(|r| r.prox_evals)
                .collect(),
        );
        if c.converged as f64 >= min_fraction * c.runs as f64 && c.converged > 0 {
            c.class = CellClass::Converged;
        }
    }
    let mut per_algo: BTreeMap<Algo, Vec<u64>> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.class == CellClass::Converged) {
        per_algo.entry(c.algo).or_default().extend(c.median_evals);
    }
    for c in cells.iter_mut().filter(|c| c.class == CellClass::Converged) {
        if let (Some(m), Some(own)) = (per_algo.get(&c.algo).cloned().and_then(median), c.median_evals) {
            if own > 10 * m {
                c.class = CellClass::Slow;
            }
        }
    }
    cells
}

/// Table-1 style rendering: one row per algorithm, one column per `ρ`.
pub fn render_sweep_table(cells: &[SweepCell], rhos: &[f64], algos: &[Algo]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "algo\\rho");
    for r in rhos {
        let _ = write!(s, "{:>10}", format!("{r:e}"));
    }
    s.push('\n');
    for a in algos {
        let _ = write!(s, "{:<10}", a.name());
        for r in rhos {
            let cell = cells.iter().find(|c| c.algo == *a && c.rho.to_bits() == r.to_bits());
            let text = match cell {
                Some(c) if c.runs > 1 => format!("{}{}/{}", c.class.mark(), c.converged, c.runs),
                Some(c) => c.class.mark().to_string(),
                None => "-".to_string(),
            };
            let _ = write!(s, "{text:>10}");
        }
        s.push('\n');
    }
    s
}

/// `(tolerance, prox_evals)` for each checkpoint reached by `t`.
pub fn checkpoint_rows(t: &Trace) -> Vec<(f64, u64)> {
    CHECKPOINTS
        .iter()
        .filter_map(|&tol| t.evals_to_reach(tol).map(|e| (tol, e)))
        .collect()
}

/// Parses a count given in decimal or scientific notation, e.g. `5e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("'{s}' is not a nonnegative integer"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "wmvipd", version, about = "Primal-dual solvers for weak-Minty saddle point problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem and write its trace
    Run(RunArgs),
    /// Print the step sizes the parameter rules produce
    Params(ParamsArgs),
    /// Table of convergence outcomes over several rho estimates
    SweepRho(SweepArgs),
    /// Prox evaluations needed per tolerance, for several methods
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long, default_value = "logistic")]
    pub experiment: Experiment,
    /// LIBSVM file; defaults to $WMVIPD_DATA/pyrim_scale
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use the built-in 74x27 synthetic dataset instead of a file
    #[arg(long, conflicts_with = "data")]
    pub synthetic: bool,
    /// Require the data to be 74 samples by 27 features
    #[arg(long)]
    pub expect_pyrim: bool,
    /// Weak Minty estimate; defaults to -2e-3 (0 for least-squares)
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct BudgetArgs {
    #[arg(long, default_value_t = 1e-7)]
    pub tau: f64,
    #[arg(long, value_parser = parse_count)]
    pub max_iter: Option<u64>,
    /// Prox-evaluation budget
    #[arg(long, value_parser = parse_count, default_value = "5e6")]
    pub max_prox_evals: u64,
    /// Passes between KKT evaluations
    #[arg(long, value_parser = parse_count, default_value = "10")]
    pub kkt_every: u64,
}

impl BudgetArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            tau: self.tau,
            max_iter: self.max_iter.unwrap_or(u64::MAX),
            kkt_every: self.kkt_every,
            max_prox_evals: self.max_prox_evals,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value = "ncpdhg")]
    pub algo: Algo,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, value_parser = parse_count, default_value = "0")]
    pub seed: u64,
    /// Trace CSV destination
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Only this method; all applicable methods otherwise
    #[arg(long)]
    pub algo: Option<Algo>,
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Comma-separated rho estimates
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub rhos: Option<Vec<f64>>,
    /// Comma-separated methods
    #[arg(long, value_delimiter = ',', default_value = "ncpdhg,ncspdhg,cegplus,alm")]
    pub algos: Vec<Algo>,
    /// Seeds per randomized cell
    #[arg(long, value_parser = parse_count, default_value = "10")]
    pub seeds: u64,
    /// Directory for sweep.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<Algo>>,
    #[arg(long, value_parser = parse_count, default_value = "10")]
    pub seeds: u64,
    /// Directory for compare.csv and per-run traces
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Loads a LIBSVM file; with `expect_pyrim` the width is fixed to 27 and the
/// shape checked.
pub fn load_dataset(path: &Path, expect_pyrim: bool) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let width = expect_pyrim.then_some(PYRIM_SHAPE.1);
    let d = parse_libsvm(BufReader::new(file), width).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    if expect_pyrim {
        d.expect_shape(PYRIM_SHAPE.0, PYRIM_SHAPE.1)?;
    }
    Ok(d)
}

/// `$WMVIPD_DATA/pyrim_scale`, if the variable is set.
pub fn default_data_path() -> Option<PathBuf> {
    std::env::var_os("WMVIPD_DATA").map(|d| PathBuf::from(d).join(PYRIM_FILE))
}

fn resolve_data(a: &DataArgs) -> Result<(Dataset, String), CliError> {
    if a.synthetic {
        let (m, n) = PYRIM_SHAPE;
        return Ok((Dataset::synthetic(m, n, 0), "synthetic:74x27:seed0".to_string()));
    }
    let path = a.data.clone().or_else(default_data_path).ok_or(CliError::NoData)?;
    let d = load_dataset(&path, a.expect_pyrim)?;
    Ok((d, path.display().to_string()))
}

fn rho_of(a: &DataArgs) -> f64 {
    a.rho.unwrap_or(a.experiment.default_rho())
}

fn write_trace_file(path: &Path, t: &Trace) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_trace_csv(t, BufWriter::new(File::create(path)?))?;
    Ok(())
}

pub fn exit_code(s: Status) -> i32 {
    match s {
        Status::Converged => 0,
        Status::Diverged => 2,
        Status::MaxIterReached => 3,
    }
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (data, source) = resolve_data(&a.data)?;
    let prep = Prepared::new(a.data.experiment, &data)?;
    let spec = RunSpec {
        experiment: a.data.experiment,
        algo: a.algo,
        rho: rho_of(&a.data),
        c: a.c,
        seed: a.seed,
        options: a.budget.options(),
    };
    let mut trace = prep.solve(&spec)?;
    trace.metadata.push(("data".into(), source));
    if let Some(path) = &a.out {
        write_trace_file(path, &trace)?;
    }
    let last = trace.last().copied();
    writeln!(
        out,
        "status={} iterations={} prox_evals={} kkt={:e} elapsed_seconds={:.3}",
        trace.status.as_str(),
        trace.final_iteration(),
        trace.final_prox_evals(),
        trace.final_kkt(),
        last.map_or(0.0, |r| r.elapsed_seconds)
    )?;
    Ok(exit_code(trace.status))
}

pub fn cmd_params(a: &ParamsArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (data, _) = resolve_data(&a.data)?;
    let prep = Prepared::new(a.data.experiment, &data)?;
    let k = &prep.constants;
    writeln!(
        out,
        "experiment={} rho={:e} op_norm={:.6} sup_block_norm={:.6} n_blocks={} lip_g2={}",
        prep.experiment,
        rho_of(&a.data),
        k.op_norm,
        k.sup_block_norm,
        k.n_blocks,
        k.lip_g2
    )?;
    let algos: Vec<Algo> = match a.algo {
        Some(x) => vec![x],
        None => vec![Algo::NcPdhg, Algo::NcSpdhg, Algo::CegPlus, Algo::Alm, Algo::Saga],
    };
    let mut code = 0;
    for (algo, row) in parameter_report(&prep, rho_of(&a.data), &algos, a.c) {
        match row {
            Ok(kv) => {
                let body: Vec<String> = kv.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
                writeln!(out, "algo={} {}", algo, body.join(" "))?;
            }
            Err(e) => {
                writeln!(out, "algo={algo} error=\"{e}\"")?;
                code = 1;
            }
        }
    }
    Ok(code)
}

pub fn cmd_sweep_rho(a: &SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let rhos = a.rhos.clone().unwrap_or_else(|| DEFAULT_RHOS.to_vec());
    if rhos.is_empty() {
        return Err(CliError::Usage("--rhos is empty".into()));
    }
    if a.algos.is_empty() {
        return Err(CliError::Usage("--algos is empty".into()));
    }
    let (data, _) = resolve_data(&a.data)?;
    let prep = Prepared::new(a.data.experiment, &data)?;
    let opts = a.budget.options();
    opts.validate()?;
    let runs = sweep(&prep, &rhos, &a.algos, a.seeds, &opts);
    let cells = classify(&runs, 0.8);
    write!(out, "{}", render_sweep_table(&cells, &rhos, &a.algos))?;
    writeln!(
        out,
        "budget_prox_evals={} tau={:e} seeds={} slow_rule=median_evals>10x_algo_median",
        opts.max_prox_evals, opts.tau, a.seeds
    )?;
    for r in runs.iter().filter(|r| r.error.is_some()) {
        writeln!(out, "error rho={:e} algo={} reason=\"{}\"", r.rho, r.algo, r.error.as_deref().unwrap_or(""))?;
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("sweep.csv"))?);
        writeln!(w, "rho,algo,seed,status,iterations,prox_evals,final_kkt,class")?;
        for r in &runs {
            let class = cells
                .iter()
                .find(|c| c.algo == r.algo && c.rho.to_bits() == r.rho.to_bits())
                .map_or("", |c| c.class.mark());
            writeln!(
                w,
                "{:e},{},{},{},{},{},{:e},{}",
                r.rho,
                r.algo,
                r.seed,
                r.status.map_or("Error", Status::as_str),
                r.iterations,
                r.prox_evals,
                r.final_kkt,
                class
            )?;
        }
        w.flush()?;
    }
    Ok(0)
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let exp = a.data.experiment;
    let algos = a.algos.clone().unwrap_or_else(|| match exp {
        Experiment::LeastSquares => vec![Algo::NcPdhg, Algo::NcSpdhg, Algo::Saga],
        _ => vec![Algo::NcPdhg, Algo::NcSpdhg, Algo::CegPlus, Algo::Alm],
    });
    let (data, source) = resolve_data(&a.data)?;
    let prep = Prepared::new(exp, &data)?;
    let opts = a.budget.options();
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &algo in &algos {
        let n = if algo.is_randomized() { a.seeds.max(1) } else { 1 };
        for seed in 0..n {
            let spec = RunSpec {
                experiment: exp,
                algo,
                rho: rho_of(&a.data),
                c: None,
                seed,
                options: opts,
            };
            let mut t = prep.solve(&spec)?;
            t.metadata.push(("data".into(), source.clone()));
            all_converged &= t.status == Status::Converged;
            writeln!(
                out,
                "algo={} seed={} status={} prox_evals={} kkt={:e}",
                algo,
                seed,
                t.status.as_str(),
                t.final_prox_evals(),
                t.final_kkt()
            )?;
            for (tol, evals) in checkpoint_rows(&t) {
                rows.push((algo, seed, tol, evals));
            }
            if let Some(dir) = &a.out {
                write_trace_file(&dir.join(format!("{}_{}_seed{}.csv", exp, algo, seed)), &t)?;
            }
        }
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("compare.csv"))?);
        writeln!(w, "algo,seed,tolerance,prox_evals")?;
        for (algo, seed, tol, evals) in &rows {
            writeln!(w, "{algo},{seed},{tol:e},{evals}")?;
        }
        w.flush()?;
    }
    writeln!(out, "all_converged={all_converged}")?;
    Ok(0)
}

/// Entry point shared by the binary and tests.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Params(a) => cmd_params(a, out),
        Command::SweepRho(a) => cmd_sweep_rho(a, out),
        Command::Compare(a) => cmd_compare(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
