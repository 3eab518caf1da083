//! Run configuration file. Every key except `system` is optional; omitted
//! keys take the benchmark defaults listed on each field. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kftune::{
    BoSettings, Control, CostKind, Execution, Reducer, SearchSpace, Smoothness, SurrogateMode, System, TuneProblem,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: System,
    /// Noise intensities that generate the truth data (benchmark truth).
    #[serde(default)]
    pub truth_params: Option<Vec<f64>>,
    /// Search box (benchmark bounds).
    #[serde(default)]
    pub search: Option<SearchSpace>,
    /// Sample intervals (benchmark list).
    #[serde(default)]
    pub dt_list: Option<Vec<f64>>,
    /// `sum` or `max` (sum).
    #[serde(default)]
    pub reducer: Reducer,
    /// `CNIS`, `JNIS`, `VNIS`, `CNEES` or `JNEES` (CNIS).
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub tuner: TunerSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub check: CheckSection,
    /// Where artifacts go (`out`).
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Monte Carlo runs per evaluation (120).
    pub n_runs: usize,
    /// Steps per run (200).
    pub n_steps: usize,
    /// Campaign seed (0).
    pub seed: u64,
    /// True and filter initial state (zeros).
    pub x0: Option<Vec<f64>>,
    /// Initial filter covariance scale (1e-4).
    pub p0_scale: f64,
    /// Input signal (`{"kind": "cosine", "amplitude": 2, "frequency": 0.75}`).
    pub control: Option<Control>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_runs: 120,
            n_steps: 200,
            seed: 0,
            x0: None,
            p0_scale: 1e-4,
            control: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TunerKind {
    Tpbo,
    Gpbo,
    NelderMead,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerSection {
    /// `tpbo`, `gpbo` or `nelder_mead` (tpbo).
    pub kind: TunerKind,
    /// Space-filling evaluations before the surrogate takes over (20).
    pub n_seed: usize,
    /// Surrogate-guided evaluations (70). Nelder-Mead gets
    /// `n_seed + n_iter` evaluations in total.
    pub n_iter: usize,
    /// Improvement below this counts as stalled (1e-4). For Nelder-Mead, the
    /// simplex diameter in unit coordinates at which to stop.
    pub tol: f64,
    /// Stop after this many stalled guided evaluations; null disables (15).
    pub patience: Option<usize>,
    /// Student-t degrees of freedom (5).
    pub dof: f64,
    /// `matern52` or `matern32` (matern52).
    pub kernel: Smoothness,
    /// Cost assigned to candidates that break the filter (50).
    pub penalty_cost: f64,
    /// Search on log-scaled axes (true).
    pub log_space: bool,
    /// Nelder-Mead start; drawn from the seed when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for TunerSection {
    fn default() -> Self {
        let bo = BoSettings::default();
        Self {
            kind: TunerKind::Tpbo,
            n_seed: bo.n_seed,
            n_iter: bo.n_iter,
            tol: bo.tol,
            patience: bo.patience,
            dof: bo.dof,
            kernel: bo.smoothness,
            penalty_cost: 50.0,
            log_space: bo.log_space,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Indices of the two swept parameters ([0, last]).
    pub axes: Option<[usize; 2]>,
    /// Grid points per axis (15).
    pub points: [usize; 2],
    /// Log-spaced grid over the search box (true).
    pub log: bool,
    /// Evaluate each interval separately instead of reducing `dt_list`.
    pub dt_grid: Option<Vec<f64>>,
    /// Values of the parameters not swept (truth).
    pub base: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axes: None,
            points: [15, 15],
            log: true,
            dt_grid: None,
            base: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Filter noise intensities to check (truth).
    pub params: Option<Vec<f64>>,
    /// Two-sided significance of the chi-square bounds (0.05).
    pub alpha: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { params: None, alpha: 0.05 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn problem(&self, exec: Execution) -> Result<TuneProblem> {
        let spec = self.system.spec();
        let x0 = match &self.sim.x0 {
            Some(x) => DVector::from_row_slice(x),
            None => spec.x0,
        };
        let problem = TuneProblem {
            system: self.system,
            truth_params: self.truth_params.clone().unwrap_or(spec.truth),
            search: self.search.clone().unwrap_or(spec.search),
            dt_list: self.dt_list.clone().unwrap_or(spec.dt_list),
            cost: self.cost,
            reducer: self.reducer,
            n_runs: self.sim.n_runs,
            n_steps: self.sim.n_steps,
            x0,
            p0_scale: self.sim.p0_scale,
            control: self.sim.control.unwrap_or(spec.control),
            penalty_cost: self.tuner.penalty_cost,
            exec,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn bo_settings(&self) -> Result<BoSettings> {
        let t = &self.tuner;
        if t.dof.is_nan() || t.dof <= 2.0 {
            bail!("tuner.dof must exceed 2, got {}", t.dof);
        }
        Ok(BoSettings {
            n_seed: t.n_seed,
            n_iter: t.n_iter,
            patience: t.patience,
            tol: t.tol,
            mode: SurrogateMode::StudentT,
            dof: t.dof,
            smoothness: t.kernel,
            log_space: t.log_space,
            ..BoSettings::default()
        })
    }
}
