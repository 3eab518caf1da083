//! Kalman filter noise-covariance tuning.
//!
//! Candidate process and measurement noise intensities are scored by how well
//! the resulting filter's normalized innovation (or estimation error) squared
//! matches the first two moments of its χ² reference distribution, across one
//! or more sample intervals. The score is minimized with Bayesian optimization
//! over a Student-t process surrogate.
//!
//! ```no_run
//! use kftune::{tune_tpbo, BoSettings, System, TuneProblem};
//!
//! let problem = TuneProblem::from_benchmark(System::Msd);
//! let result = tune_tpbo(&problem, &BoSettings::default(), 1).unwrap();
//! println!("{:?} -> {}", result.q_star, result.y_star);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod benchmarks;
pub mod consistency;
pub mod error;
pub mod exec;
pub mod kalman;
pub(crate) mod linalg;
pub mod montecarlo;
pub mod neldermead;
pub mod numfmt;
pub mod special;
pub mod statespace;
pub mod tprocess;
pub mod tuner;

pub use acquisition::{direct_maximize, expected_improvement, DirectConfig, SearchSpace};
pub use benchmarks::{BenchmarkSpec, System};
pub use consistency::{
    aggregate, aggregate_series, c_metric, chi2_bounds, j_metric, multi_dt_cost, quad_form_moments, v_metric,
    ConsistencyReport, ConsistencyStats, IntervalReport, Reducer, Verdict,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use montecarlo::{run_batch, run_batch_series, simulate_truth, Control, RunLog, SimConfig};
pub use statespace::{discretize, ContinuousModel, DiscreteModel};
pub use tprocess::{KernelParams, Smoothness, SurrogateMode, SurrogateState};
pub use tuner::{
    bayes_opt, evaluate_cost, interval_stats, tune_gpbo, tune_nelder_mead, tune_tpbo, BoSettings, CostKind,
    SimplexSettings, TuneProblem, TuneResult,
};
