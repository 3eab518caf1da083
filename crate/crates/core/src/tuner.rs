//! Noise-parameter tuning campaigns.
//!
//! A candidate `q` is scored by simulating truth data at each sample interval,
//! filtering it with the candidate's noise intensities and measuring how far
//! the normalized innovations (or errors) stray from χ² behavior. The score is
//! minimized by Bayesian optimization with a Student-t or Gaussian process
//! surrogate, or by a downhill simplex.

use std::cell::RefCell;
use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{direct_maximize, expected_improvement, DirectConfig, SearchSpace};
use crate::benchmarks::System;
use crate::consistency::{aggregate_series, c_metric, j_metric, multi_dt_cost, v_metric, ConsistencyStats, Reducer};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::montecarlo::{run_batch_series, Control, SimConfig};
use crate::neldermead::{self, SimplexConfig};
use crate::numfmt::float;
use crate::statespace::discretize;
use crate::tprocess::{FitConfig, KernelParams, Smoothness, SurrogateMode, SurrogateState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum CostKind {
    #[default]
    Cnis,
    Jnis,
    Vnis,
    Cnees,
    Jnees,
}

impl CostKind {
    /// NEES costs need the truth states, which only simulation provides.
    pub fn needs_states(self) -> bool {
        matches!(self, CostKind::Cnees | CostKind::Jnees)
    }

    pub fn evaluate(self, stats: &ConsistencyStats) -> Result<f64> {
        let nis = &stats.nis;
        match self {
            CostKind::Cnis => c_metric(nis.time_mean, nis.pooled_variance, stats.n_z),
            CostKind::Jnis => j_metric(nis.time_mean, stats.n_z),
            CostKind::Vnis => v_metric(nis.pooled_variance, stats.n_z),
            CostKind::Cnees | CostKind::Jnees => {
                let nees = stats
                    .nees
                    .as_ref()
                    .ok_or_else(|| Error::Config("NEES cost requested without truth states".into()))?;
                if self == CostKind::Cnees {
                    c_metric(nees.time_mean, nees.pooled_variance, stats.n_x)
                } else {
                    j_metric(nees.time_mean, stats.n_x)
                }
            }
        }
    }
}

/// What to tune and how each candidate is scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneProblem {
    pub system: System,
    /// Noise intensities used to generate the truth data.
    pub truth_params: Vec<f64>,
    pub search: SearchSpace,
    pub dt_list: Vec<f64>,
    pub cost: CostKind,
    pub reducer: Reducer,
    pub n_runs: usize,
    pub n_steps: usize,
    pub x0: DVector<f64>,
    pub p0_scale: f64,
    pub control: Control,
    /// Score assigned to candidates that break the filter.
    pub penalty_cost: f64,
    pub exec: Execution,
}

impl TuneProblem {
    /// Benchmark defaults: ground truth, bounds and intervals from the spec,
    /// 120 runs of 200 steps, C_NIS summed over intervals.
    pub fn from_benchmark(system: System) -> Self {
        let spec = system.spec();
        Self {
            system,
            truth_params: spec.truth,
            search: spec.search,
            dt_list: spec.dt_list,
            cost: CostKind::Cnis,
            reducer: Reducer::Sum,
            n_runs: 120,
            n_steps: 200,
            x0: spec.x0,
            p0_scale: 1e-4,
            control: spec.control,
            penalty_cost: 50.0,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        let arity = self.system.free_params().len();
        if self.search.dim() != arity || self.truth_params.len() != arity {
            return Err(Error::dim(format!(
                "{} has {arity} noise parameters; search has {}, truth has {}",
                self.system,
                self.search.dim(),
                self.truth_params.len()
            )));
        }
        if self.search.lower.iter().any(|l| *l <= 0.0) {
            return Err(Error::Config("noise intensity bounds must be positive".into()));
        }
        if self.dt_list.is_empty() || self.dt_list.iter().any(|dt| !(*dt > 0.0 && dt.is_finite())) {
            return Err(Error::Config("dt_list must hold at least one positive interval".into()));
        }
        if self.n_runs < 2 {
            return Err(Error::Config("at least two Monte Carlo runs are needed".into()));
        }
        if !(self.penalty_cost.is_finite() && self.penalty_cost >= 0.0) {
            return Err(Error::Config("penalty cost must be finite and nonnegative".into()));
        }
        if self.x0.len() != self.system.state_dim() {
            return Err(Error::dim(format!(
                "x0 has {} entries, {} has {} states",
                self.x0.len(),
                self.system,
                self.system.state_dim()
            )));
        }
        Ok(())
    }

    pub fn sim_config(&self, dt: f64, seed: u64) -> SimConfig {
        SimConfig {
            n_runs: self.n_runs,
            n_steps: self.n_steps,
            dt,
            seed,
            control: self.control,
            x0: self.x0.clone(),
            p0_scale: self.p0_scale,
        }
    }
}

/// Independent 64-bit seed for sub-task `index` of a campaign seeded with
/// `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Consistency statistics of the filter tuned to `q`, one entry per interval.
pub fn interval_stats(problem: &TuneProblem, q: &[f64], seed: u64) -> Result<Vec<ConsistencyStats>> {
    let truth = problem.system.build(&problem.truth_params)?;
    let candidate = problem.system.build(q)?;
    let mut out = Vec::with_capacity(problem.dt_list.len());
    for (j, &dt) in problem.dt_list.iter().enumerate() {
        let truth_d = discretize(&truth, dt)?;
        let cand_d = discretize(&candidate, dt)?;
        let cfg = problem.sim_config(dt, derive_seed(seed, j as u64));
        let series = run_batch_series(&truth_d, &cand_d, &cfg, problem.cost.needs_states(), problem.exec)?;
        out.push(aggregate_series(&series, truth_d.state_dim(), truth_d.measurement_dim())?);
    }
    Ok(out)
}

/// The configured metric at each interval, unreduced and without the penalty
/// fallback.
pub fn interval_costs(problem: &TuneProblem, q: &[f64], seed: u64) -> Result<Vec<f64>> {
    interval_stats(problem, q, seed)?
        .iter()
        .map(|s| problem.cost.evaluate(s))
        .collect()
}

/// Reduced cost of candidate `q`. Numerical breakdowns of the filter score
/// `penalty_cost` instead of aborting.
pub fn evaluate_cost(problem: &TuneProblem, q: &[f64], seed: u64) -> Result<f64> {
    if !problem.search.contains(q) {
        return Err(Error::domain(format!("candidate {q:?} lies outside the search bounds")));
    }
    let outcome = interval_costs(problem, q, seed).and_then(|c| multi_dt_cost(&c, problem.reducer));
    match outcome {
        Ok(c) if c.is_finite() => Ok(c),
        Ok(c) => {
            log::warn!("cost {c} at q = {q:?}; using penalty {}", problem.penalty_cost);
            Ok(problem.penalty_cost)
        }
        Err(e @ (Error::Numerical { .. } | Error::Domain(_))) => {
            log::warn!("filter failed at q = {q:?} ({e}); using penalty {}", problem.penalty_cost);
            Ok(problem.penalty_cost)
        }
        Err(e) => Err(e),
    }
}

/// Maps the search box to the unit cube, optionally through logarithms.
#[derive(Debug, Clone)]
struct Coords {
    space: SearchSpace,
    log: bool,
}

impl Coords {
    fn new(space: &SearchSpace, log_space: bool) -> Self {
        let log = log_space && space.lower.iter().all(|l| *l > 0.0);
        Self {
            space: space.clone(),
            log,
        }
    }

    fn to_q(&self, unit: &[f64]) -> Vec<f64> {
        if !self.log {
            return self.space.from_unit(unit);
        }
        unit.iter()
            .zip(self.space.lower.iter().zip(&self.space.upper))
            .map(|(t, (l, u))| {
                if *t <= 0.0 {
                    *l
                } else if *t >= 1.0 {
                    *u
                } else {
                    (l.ln() + t * (u.ln() - l.ln())).exp().clamp(*l, *u)
                }
            })
            .collect()
    }

    fn to_unit(&self, q: &[f64]) -> Vec<f64> {
        if !self.log {
            return self.space.to_unit(q);
        }
        q.iter()
            .zip(self.space.lower.iter().zip(&self.space.upper))
            .map(|(x, (l, u))| ((x.ln() - l.ln()) / (u.ln() - l.ln())).clamp(0.0, 1.0))
            .collect()
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// `n` points of a Halton sequence in `[0, 1)^d`, randomly shifted modulo 1
/// with a shift drawn from `seed`.
pub fn halton_points(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > PRIMES.len() {
        return Err(Error::dim(format!("Halton points support 1..={} dimensions", PRIMES.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random()).collect();
    Ok((1..=n as u64)
        .map(|i| {
            PRIMES[..d]
                .iter()
                .zip(&shift)
                .map(|(&b, s)| (radical_inverse(i, b) + s).fract())
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoSettings {
    /// Space-filling evaluations before the surrogate takes over.
    pub n_seed: usize,
    /// Surrogate-guided evaluations.
    pub n_iter: usize,
    /// Stop when the best cost improved by less than `tol` over the last
    /// `patience` guided evaluations. `None` runs all iterations.
    pub patience: Option<usize>,
    pub tol: f64,
    pub mode: SurrogateMode,
    /// Prior degrees of freedom of the Student-t process.
    pub dof: f64,
    pub smoothness: Smoothness,
    /// Re-estimate kernel hyperparameters every this many iterations.
    pub refit_every: usize,
    /// Let the surrogate see log-intensities.
    pub log_space: bool,
    pub direct: DirectConfig,
    pub fit: FitConfig,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            n_seed: 20,
            n_iter: 70,
            patience: Some(15),
            tol: 1e-4,
            mode: SurrogateMode::StudentT,
            dof: 5.0,
            smoothness: Smoothness::Matern52,
            refit_every: 10,
            log_space: true,
            direct: DirectConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub q: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
    /// Surrogate kernel in force when `q` was proposed; `None` for seed
    /// points and simplex steps.
    pub kernel: Option<KernelParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub objective_secs: f64,
    pub surrogate_secs: f64,
    pub acquisition_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneResult {
    pub q_star: Vec<f64>,
    pub y_star: f64,
    pub history: Vec<HistoryEntry>,
    #[serde(skip)]
    pub surrogate_final: Option<SurrogateState>,
    pub final_kernel: Option<KernelParams>,
    pub timing: Timing,
}

impl TuneResult {
    fn from_history(history: Vec<HistoryEntry>, surrogate_final: Option<SurrogateState>, timing: Timing) -> Result<Self> {
        let best = history
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.y.total_cmp(&b.1.y).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Config("campaign made no evaluations".into()))?;
        Ok(Self {
            q_star: history[best].q.clone(),
            y_star: history[best].y,
            final_kernel: surrogate_final.as_ref().map(|s| s.kernel().clone()),
            history,
            surrogate_final,
            timing,
        })
    }

    /// `iteration, <param names>, y, best_so_far, ls_0.., signal_variance,
    /// noise`; kernel columns are empty where no surrogate was in force.
    pub fn write_history_csv<W: Write>(&self, mut out: W, param_names: &[&str]) -> Result<()> {
        let d = self.q_star.len();
        if param_names.len() != d {
            return Err(Error::dim("parameter names do not match the search dimension"));
        }
        let mut header = vec!["iteration".to_string()];
        header.extend(param_names.iter().map(|s| s.to_string()));
        header.extend(["y".into(), "best_so_far".into()]);
        header.extend((0..d).map(|i| format!("ls_{i}")));
        header.extend(["signal_variance".into(), "noise".into()]);
        writeln!(out, "{}", header.join(","))?;
        for h in &self.history {
            let mut row = vec![h.iteration.to_string()];
            row.extend(h.q.iter().map(|v| float(*v)));
            row.push(float(h.y));
            row.push(float(h.best_so_far));
            match &h.kernel {
                Some(k) => {
                    row.extend(k.lengthscales.iter().map(|v| float(*v)));
                    row.push(float(k.signal_variance));
                    row.push(float(k.noise_jitter));
                }
                None => row.extend(std::iter::repeat_n(String::new(), d + 2)),
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn standardize(ys: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (ys.iter().map(|y| (y - mean) / std).collect(), mean, std)
}

fn build_surrogate(units: &[Vec<f64>], z: Vec<f64>, kernel: &KernelParams, settings: &BoSettings) -> Result<SurrogateState> {
    match SurrogateState::new(units.to_vec(), z.clone(), kernel.clone(), settings.dof, settings.mode) {
        Ok(s) => Ok(s),
        Err(Error::Numerical { .. }) => {
            let mut k = kernel.clone();
            k.noise_jitter = (k.noise_jitter * 100.0).max(1e-6);
            log::warn!("surrogate factorization failed; retrying with noise {}", k.noise_jitter);
            SurrogateState::new(units.to_vec(), z, k, settings.dof, settings.mode)
        }
        Err(e) => Err(e),
    }
}

/// Bayesian optimization of `objective(q, evaluation_seed)` over `space`.
///
/// Evaluation `k` receives `derive_seed(seed, k)`, so a rerun with the same
/// seed reproduces every evaluation.
pub fn bayes_opt<F>(mut objective: F, space: &SearchSpace, settings: &BoSettings, seed: u64) -> Result<TuneResult>
where
    F: FnMut(&[f64], u64) -> Result<f64>,
{
    space.validate()?;
    if settings.n_seed < 2 {
        return Err(Error::Config("at least two seed points are needed".into()));
    }
    if settings.refit_every == 0 {
        return Err(Error::Config("refit_every must be at least 1".into()));
    }
    let start = Instant::now();
    let mut timing = Timing::default();
    let d = space.dim();
    let coords = Coords::new(space, settings.log_space);
    let unit_cube = SearchSpace {
        lower: vec![0.0; d],
        upper: vec![1.0; d],
    };

    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut units: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut record = |unit: Vec<f64>, kernel: Option<KernelParams>, history: &mut Vec<HistoryEntry>, units: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>, timing: &mut Timing| -> Result<()> {
        let q = coords.to_q(&unit);
        let k = history.len();
        let t = Instant::now();
        let y = objective(&q, derive_seed(seed, k as u64))?;
        timing.objective_secs += t.elapsed().as_secs_f64();
        if !y.is_finite() {
            return Err(Error::numerical(format!("objective returned {y} at {q:?}")));
        }
        let best_so_far = history.last().map_or(y, |h| h.best_so_far.min(y));
        history.push(HistoryEntry {
            iteration: k,
            q,
            y,
            best_so_far,
            kernel,
        });
        units.push(unit);
        ys.push(y);
        Ok(())
    };

    for unit in halton_points(settings.n_seed, d, derive_seed(seed, u64::MAX))? {
        record(unit, None, &mut history, &mut units, &mut ys, &mut timing)?;
    }

    let mut kernel = KernelParams::isotropic(d, settings.smoothness);
    let mut surrogate = None;
    for it in 0..settings.n_iter {
        let t = Instant::now();
        let (z, _, _) = standardize(&ys);
        let best = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut state = build_surrogate(&units, z, &kernel, settings)?;
        if it % settings.refit_every == 0 {
            state = state.fit_hyperparams(&settings.fit);
        }
        kernel = state.kernel().clone();
        timing.surrogate_secs += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let proposal = direct_maximize(
            |u| match state.posterior(u) {
                Ok(p) => expected_improvement(best, p.mean, p.scale(), p.dof).unwrap_or(f64::NAN),
                Err(_) => f64::NAN,
            },
            &unit_cube,
            &settings.direct,
        )?;
        timing.acquisition_secs += t.elapsed().as_secs_f64();
        surrogate = Some(state);

        record(proposal.x, Some(kernel.clone()), &mut history, &mut units, &mut ys, &mut timing)?;

        if let Some(p) = settings.patience {
            let guided = it + 1;
            let n = history.len();
            if p > 0 && guided >= p && history[n - 1 - p].best_so_far - history[n - 1].best_so_far < settings.tol {
                log::info!("stopping after {guided} guided evaluations: no improvement above {}", settings.tol);
                break;
            }
        }
    }

    timing.total_secs = start.elapsed().as_secs_f64();
    TuneResult::from_history(history, surrogate, timing)
}

/// Bayesian optimization of [`evaluate_cost`].
pub fn tune_tpbo(problem: &TuneProblem, settings: &BoSettings, seed: u64) -> Result<TuneResult> {
    problem.validate()?;
    bayes_opt(|q, s| evaluate_cost(problem, q, s), &problem.search, settings, seed)
}

/// The Gaussian-process baseline: J_NIS at the single interval 0.1.
pub fn tune_gpbo(problem: &TuneProblem, settings: &BoSettings, seed: u64) -> Result<TuneResult> {
    let baseline = TuneProblem {
        cost: CostKind::Jnis,
        dt_list: vec![0.1],
        reducer: Reducer::Sum,
        ..problem.clone()
    };
    let settings = BoSettings {
        mode: SurrogateMode::Gaussian,
        ..settings.clone()
    };
    tune_tpbo(&baseline, &settings, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexSettings {
    pub max_evals: usize,
    /// Simplex diameter, in unit-cube coordinates, at which to stop.
    pub tol: f64,
    pub initial_step: f64,
    pub log_space: bool,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self {
            max_evals: 90,
            tol: 1e-4,
            initial_step: 0.1,
            log_space: true,
        }
    }
}

/// Uniform start point in the (log-)unit cube, drawn from `seed`.
pub fn random_start(space: &SearchSpace, log_space: bool, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit: Vec<f64> = (0..space.dim()).map(|_| rng.random()).collect();
    Coords::new(space, log_space).to_q(&unit)
}

/// Downhill simplex baseline with reflection 1, expansion 1, contraction
/// 0.5 and shrink 0.5. Every evaluation draws fresh data.
pub fn tune_nelder_mead(problem: &TuneProblem, start: &[f64], settings: &SimplexSettings, seed: u64) -> Result<TuneResult> {
    problem.validate()?;
    if !problem.search.contains(start) {
        return Err(Error::domain(format!("start {start:?} lies outside the search bounds")));
    }
    let begin = Instant::now();
    let coords = Coords::new(&problem.search, settings.log_space);
    let d = problem.search.dim();
    let history = RefCell::new(Vec::<HistoryEntry>::new());
    let failure = RefCell::new(None::<Error>);
    let cfg = SimplexConfig {
        reflection: 1.0,
        expansion: 1.0,
        contraction: 0.5,
        shrink: 0.5,
        initial_step: settings.initial_step,
        tol: settings.tol,
        max_evals: settings.max_evals,
    };
    let objective = |unit: &[f64]| {
        if failure.borrow().is_some() {
            return f64::NAN;
        }
        let q = coords.to_q(unit);
        let k = history.borrow().len();
        match evaluate_cost(problem, &q, derive_seed(seed, k as u64)) {
            Ok(y) => {
                let mut h = history.borrow_mut();
                let best_so_far = h.last().map_or(y, |e| e.best_so_far.min(y));
                h.push(HistoryEntry {
                    iteration: k,
                    q,
                    y,
                    best_so_far,
                    kernel: None,
                });
                y
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                f64::NAN
            }
        }
    };
    neldermead::minimize(objective, &coords.to_unit(start), &vec![0.0; d], &vec![1.0; d], &cfg)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let elapsed = begin.elapsed().as_secs_f64();
    let timing = Timing {
        objective_secs: elapsed,
        total_secs: elapsed,
        ..Timing::default()
    };
    TuneResult::from_history(history.into_inner(), None, timing)
}
