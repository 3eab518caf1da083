//! NEES/NIS statistics, chi-square acceptance bounds and the scalar costs
//! built from them.
//!
//! For a consistent filter the NEES of each step is χ²(n_x) and the NIS is
//! χ²(n_z), so their means are `dof` and their variances `2·dof`. The J costs
//! only test the mean; the C costs add the variance test, which is what
//! separates a tuned filter from a mistuned one whose statistic follows a
//! generalized χ² with the right mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::quadratic_form_inverse;
use crate::montecarlo::{RunLog, RunSeries};
use crate::special::chi2_quantile;

/// Normalized estimation error squared `e^T P^{-1} e`.
pub fn nees(error: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    quadratic_form_inverse(error, cov, "state covariance")
}

/// Normalized innovation squared `ε^T S^{-1} ε`.
pub fn nis(innovation: &DVector<f64>, innov_cov: &DMatrix<f64>) -> Result<f64> {
    quadratic_form_inverse(innovation, innov_cov, "innovation covariance")
}

/// Run-averaged statistic per step plus its time mean and pooled variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `ε̄(k) = (1/N) Σ_i ε_k^i`
    pub avg_per_step: Vec<f64>,
    /// `ε̃ = (1/T) Σ_k ε̄(k)`
    pub time_mean: f64,
    /// `S̃ = 1/(T(N-1)) Σ_k Σ_i (ε_k^i - ε̄(k))²`
    pub pooled_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyStats {
    pub nis: Moments,
    /// Only available when every run carried ground truth.
    pub nees: Option<Moments>,
    pub n_x: usize,
    pub n_z: usize,
    pub n_runs: usize,
    pub n_steps: usize,
}

fn moments(runs: &[&[f64]]) -> Moments {
    let n = runs.len();
    let t = runs[0].len();
    let mut avg_per_step = vec![0.0; t];
    for run in runs {
        for (acc, x) in avg_per_step.iter_mut().zip(run.iter()) {
            *acc += x;
        }
    }
    for acc in &mut avg_per_step {
        *acc /= n as f64;
    }
    let time_mean = avg_per_step.iter().sum::<f64>() / t as f64;
    let mut ss = 0.0;
    for run in runs {
        for (x, m) in run.iter().zip(&avg_per_step) {
            ss += (x - m).powi(2);
        }
    }
    Moments {
        avg_per_step,
        time_mean,
        pooled_variance: ss / (t as f64 * (n as f64 - 1.0)),
    }
}

/// Aggregate per-run NIS/NEES series. Summation runs over runs in order, then
/// steps, so the result does not depend on how the runs were produced.
pub fn aggregate_series(series: &[RunSeries], n_x: usize, n_z: usize) -> Result<ConsistencyStats> {
    let n = series.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "pooled variance needs at least 2 runs, got {n}"
        )));
    }
    let t = series[0].nis.len();
    if t == 0 {
        return Err(Error::domain("runs have no steps"));
    }
    if series.iter().any(|s| s.nis.len() != t) {
        return Err(Error::dim("runs have different lengths"));
    }
    let nis_runs: Vec<&[f64]> = series.iter().map(|s| s.nis.as_slice()).collect();
    let nees = if series.iter().all(|s| s.nees.as_ref().is_some_and(|v| v.len() == t)) {
        let runs: Vec<&[f64]> = series
            .iter()
            .map(|s| s.nees.as_deref().expect("checked"))
            .collect();
        Some(moments(&runs))
    } else {
        None
    };
    Ok(ConsistencyStats {
        nis: moments(&nis_runs),
        nees,
        n_x,
        n_z,
        n_runs: n,
        n_steps: t,
    })
}

/// Aggregate full run logs; see [`aggregate_series`].
pub fn aggregate(logs: &[RunLog]) -> Result<ConsistencyStats> {
    let first = logs
        .first()
        .and_then(|l| l.steps.first())
        .ok_or_else(|| Error::domain("no runs to aggregate"))?;
    let n_x = first.estimate.mean.len();
    let n_z = first.innovation.innovation.len();
    let series = logs.iter().map(RunLog::series).collect::<Result<Vec<_>>>()?;
    aggregate_series(&series, n_x, n_z)
}

/// Two-sided acceptance region for a run-averaged χ² statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareBounds {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub dof_per_sample: usize,
    pub n_runs: usize,
}

/// Bounds on `ε̄ = (1/N) Σ ε^i` where each `ε^i ~ χ²(dof)`: since `N ε̄` is
/// χ² with `N·dof` degrees of freedom, the region is
/// `[χ²_{N·dof}(α/2) / N, χ²_{N·dof}(1-α/2) / N]`.
pub fn chi2_bounds(dof: usize, n_runs: usize, alpha: f64) -> Result<ChiSquareBounds> {
    if dof < 1 || n_runs < 1 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "chi-square bounds need dof >= 1, N >= 1, 0 < alpha < 1 (got {dof}, {n_runs}, {alpha})"
        )));
    }
    let k = (dof * n_runs) as f64;
    let n = n_runs as f64;
    Ok(ChiSquareBounds {
        lower: chi2_quantile(alpha / 2.0, k)? / n,
        upper: chi2_quantile(1.0 - alpha / 2.0, k)? / n,
        alpha,
        dof_per_sample: dof,
        n_runs,
    })
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be positive and finite, got {x}")))
    }
}

/// `|log(ε̃ / dof)|`
pub fn j_metric(eps_tilde: f64, dof: usize) -> Result<f64> {
    positive(eps_tilde, "time-averaged statistic")?;
    Ok((eps_tilde / dof as f64).ln().abs())
}

/// `|log(S̃ / (2·dof))|`
pub fn v_metric(s_tilde: f64, dof: usize) -> Result<f64> {
    positive(s_tilde, "pooled variance")?;
    Ok((s_tilde / (2.0 * dof as f64)).ln().abs())
}

/// `|log(ε̃ / dof)| + |log(S̃ / (2·dof))|`
pub fn c_metric(eps_tilde: f64, s_tilde: f64, dof: usize) -> Result<f64> {
    Ok(j_metric(eps_tilde, dof)? + v_metric(s_tilde, dof)?)
}

/// How per-interval costs combine into one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    #[default]
    Sum,
    /// Worst case over intervals.
    Max,
}

pub fn multi_dt_cost(per_dt_costs: &[f64], reducer: Reducer) -> Result<f64> {
    if per_dt_costs.is_empty() {
        return Err(Error::domain("no per-interval costs to reduce"));
    }
    Ok(match reducer {
        Reducer::Sum => per_dt_costs.iter().sum(),
        Reducer::Max => per_dt_costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Mean and variance of `ε^T Λ ε` for Gaussian `ε ~ N(μ, Σ)`:
/// `tr(ΛΣ) + μ^T Λ μ` and `2 tr(ΛΣΛΣ) + 4 μ^T ΛΣΛ μ`.
pub fn quad_form_moments(lambda: &DMatrix<f64>, sigma: &DMatrix<f64>, mu: &DVector<f64>) -> Result<(f64, f64)> {
    let n = mu.len();
    if lambda.shape() != (n, n) || sigma.shape() != (n, n) {
        return Err(Error::dim(format!(
            "quadratic form moments: Λ {:?}, Σ {:?}, μ of length {n}",
            lambda.shape(),
            sigma.shape()
        )));
    }
    let ls = lambda * sigma;
    let mean = ls.trace() + (mu.transpose() * lambda * mu)[(0, 0)];
    let var = 2.0 * (&ls * &ls).trace() + 4.0 * (mu.transpose() * &ls * lambda * mu)[(0, 0)];
    Ok((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    /// Statistic below the lower bound: the filter overstates its uncertainty.
    Pessimistic,
    /// Statistic above the upper bound: the filter is overconfident.
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bounds: ChiSquareBounds,
    pub fraction_inside: f64,
    pub fraction_below: f64,
    pub fraction_above: f64,
    pub verdict: Verdict,
}

/// Classify per-step run averages against `bounds`. Consistent when at least
/// `1 - 2α` of the steps fall inside; otherwise the more frequent side of the
/// violation decides.
pub fn check_bounds(avg_per_step: &[f64], bounds: ChiSquareBounds) -> BoundCheck {
    let t = avg_per_step.len().max(1) as f64;
    let below = avg_per_step.iter().filter(|&&e| e < bounds.lower).count();
    let above = avg_per_step.iter().filter(|&&e| e > bounds.upper).count();
    let inside = avg_per_step.len() - below - above;
    let fraction_inside = inside as f64 / t;
    let verdict = if fraction_inside >= 1.0 - 2.0 * bounds.alpha {
        Verdict::Consistent
    } else if below >= above {
        Verdict::Pessimistic
    } else {
        Verdict::Optimistic
    };
    BoundCheck {
        bounds,
        fraction_inside,
        fraction_below: below as f64 / t,
        fraction_above: above as f64 / t,
        verdict,
    }
}

/// Metrics for one sample interval. Metric fields are `None` when the
/// statistic is degenerate (zero variance, no truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub dt: f64,
    pub eps_x_tilde: Option<f64>,
    pub eps_z_tilde: f64,
    pub s_x_tilde: Option<f64>,
    pub s_z_tilde: f64,
    pub j_nis: Option<f64>,
    pub c_nis: Option<f64>,
    pub v_nis: Option<f64>,
    pub j_nees: Option<f64>,
    pub c_nees: Option<f64>,
    pub v_nees: Option<f64>,
    pub nis_check: BoundCheck,
    pub nees_check: Option<BoundCheck>,
    pub pass: bool,
}

impl IntervalReport {
    pub fn from_stats(dt: f64, stats: &ConsistencyStats, alpha: f64) -> Result<Self> {
        let nis_check = check_bounds(
            &stats.nis.avg_per_step,
            chi2_bounds(stats.n_z, stats.n_runs, alpha)?,
        );
        let nees_check = match &stats.nees {
            Some(m) => Some(check_bounds(
                &m.avg_per_step,
                chi2_bounds(stats.n_x, stats.n_runs, alpha)?,
            )),
            None => None,
        };
        let nees = stats.nees.as_ref();
        let pass = nis_check.verdict == Verdict::Consistent
            && nees_check.is_none_or(|c| c.verdict == Verdict::Consistent);
        Ok(Self {
            dt,
            eps_x_tilde: nees.map(|m| m.time_mean),
            eps_z_tilde: stats.nis.time_mean,
            s_x_tilde: nees.map(|m| m.pooled_variance),
            s_z_tilde: stats.nis.pooled_variance,
            j_nis: j_metric(stats.nis.time_mean, stats.n_z).ok(),
            c_nis: c_metric(stats.nis.time_mean, stats.nis.pooled_variance, stats.n_z).ok(),
            v_nis: v_metric(stats.nis.pooled_variance, stats.n_z).ok(),
            j_nees: nees.and_then(|m| j_metric(m.time_mean, stats.n_x).ok()),
            c_nees: nees.and_then(|m| c_metric(m.time_mean, m.pooled_variance, stats.n_x).ok()),
            v_nees: nees.and_then(|m| v_metric(m.pooled_variance, stats.n_x).ok()),
            nis_check,
            nees_check,
            pass,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub intervals: Vec<IntervalReport>,
}

impl ConsistencyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
