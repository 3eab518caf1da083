use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use kftune::numfmt::float;
use kftune::tuner::{derive_seed, interval_costs, random_start};
use kftune::{
    aggregate, chi2_bounds, discretize, multi_dt_cost, run_batch, tune_gpbo, tune_nelder_mead, tune_tpbo,
    ConsistencyReport, IntervalReport, KernelParams, RunLog, SimplexSettings, System, TuneProblem, TuneResult,
};
use serde::Serialize;

use crate::config::{Config, TunerKind};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

#[derive(Serialize)]
struct TuneSummary<'a> {
    system: System,
    tuner: TunerKind,
    seed: u64,
    param_names: Vec<&'static str>,
    truth_params: &'a [f64],
    q_star: &'a [f64],
    y_star: f64,
    evaluations: usize,
    final_kernel: Option<&'a KernelParams>,
    timing: &'a kftune::tuner::Timing,
}

pub fn tune(cfg: &Config, problem: &TuneProblem, seed: u64) -> Result<TuneResult> {
    let result = match cfg.tuner.kind {
        TunerKind::Tpbo => tune_tpbo(problem, &cfg.bo_settings()?, seed)?,
        TunerKind::Gpbo => tune_gpbo(problem, &cfg.bo_settings()?, seed)?,
        TunerKind::NelderMead => {
            let settings = SimplexSettings {
                max_evals: cfg.tuner.n_seed + cfg.tuner.n_iter,
                tol: cfg.tuner.tol,
                log_space: cfg.tuner.log_space,
                ..SimplexSettings::default()
            };
            let start = match &cfg.tuner.start {
                Some(s) => s.clone(),
                None => random_start(&problem.search, settings.log_space, derive_seed(seed, 1 << 32)),
            };
            tune_nelder_mead(problem, &start, &settings, seed)?
        }
    };

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let names = problem.system.free_params();
    let summary = TuneSummary {
        system: problem.system,
        tuner: cfg.tuner.kind,
        seed,
        param_names: names.clone(),
        truth_params: &problem.truth_params,
        q_star: &result.q_star,
        y_star: result.y_star,
        evaluations: result.history.len(),
        final_kernel: result.final_kernel.as_ref(),
        timing: &result.timing,
    };
    let mut out = create(dir, "result.json")?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;
    let mut out = create(dir, "history.csv")?;
    result.write_history_csv(&mut out, &names)?;
    out.flush()?;
    Ok(result)
}

fn axis(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![if log { (lo * hi).sqrt() } else { 0.5 * (lo + hi) }];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let x = if log { lo * (hi / lo).powf(t) } else { lo + t * (hi - lo) };
            x.clamp(lo, hi)
        })
        .collect()
}

/// Grid the cost over two parameters. Returns the number of rows written.
pub fn sweep(cfg: &Config, problem: &TuneProblem, seed: u64) -> Result<usize> {
    let s = &cfg.sweep;
    let d = problem.search.dim();
    let [a, b] = s.axes.unwrap_or([0, d - 1]);
    if a >= d || b >= d || a == b {
        bail!("sweep.axes must name two distinct parameters below {d}, got [{a}, {b}]");
    }
    if s.points.contains(&0) {
        bail!("sweep.points must be positive");
    }
    let base = s.base.clone().unwrap_or_else(|| problem.truth_params.clone());
    if base.len() != d {
        bail!("sweep.base has {} entries, expected {d}", base.len());
    }
    let xs = axis(problem.search.lower[a], problem.search.upper[a], s.points[0], s.log);
    let ys = axis(problem.search.lower[b], problem.search.upper[b], s.points[1], s.log);

    let names = problem.system.free_params();
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = create(dir, "sweep.csv")?;
    let third = if s.dt_grid.is_some() { "dt" } else { "reducer" };
    writeln!(out, "{},{},{third},cost,log10cost", names[a], names[b])?;

    let (problem, reducer_label) = match &s.dt_grid {
        Some(grid) => {
            if grid.is_empty() {
                bail!("sweep.dt_grid is empty");
            }
            (
                TuneProblem {
                    dt_list: grid.clone(),
                    ..problem.clone()
                },
                None,
            )
        }
        None => (problem.clone(), Some(format!("{:?}", problem.reducer).to_lowercase())),
    };
    problem.validate()?;

    let mut rows = 0;
    for &x in &xs {
        for &y in &ys {
            let mut q = base.clone();
            q[a] = x;
            q[b] = y;
            let costs = interval_costs(&problem, &q, seed).unwrap_or_else(|e| {
                log::warn!("filter failed at q = {q:?} ({e}); using penalty {}", problem.penalty_cost);
                vec![problem.penalty_cost; problem.dt_list.len()]
            });
            let emit = |out: &mut BufWriter<File>, label: &str, c: f64| -> Result<()> {
                writeln!(out, "{},{},{label},{},{}", float(x), float(y), float(c), float(c.log10()))?;
                Ok(())
            };
            match &reducer_label {
                Some(label) => {
                    emit(&mut out, label, multi_dt_cost(&costs, problem.reducer)?)?;
                    rows += 1;
                }
                None => {
                    for (dt, c) in problem.dt_list.iter().zip(&costs) {
                        emit(&mut out, &float(*dt), *c)?;
                        rows += 1;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(rows)
}

#[derive(Serialize)]
struct CheckSummary<'a> {
    system: System,
    params: &'a [f64],
    seed: u64,
    alpha: f64,
    #[serde(flatten)]
    report: &'a ConsistencyReport,
    /// Per interval, per state: fraction of state errors within ±2σ over all
    /// runs and steps.
    within_two_sigma: Vec<Vec<f64>>,
}

fn two_sigma_fraction(logs: &[RunLog], n_x: usize) -> Vec<f64> {
    let mut inside = vec![0usize; n_x];
    let mut total = 0usize;
    for log in logs {
        for step in &log.steps {
            let Some(truth) = &step.truth else { continue };
            total += 1;
            for i in 0..n_x {
                let err = (truth[i] - step.estimate.mean[i]).abs();
                if err <= 2.0 * step.estimate.cov[(i, i)].sqrt() {
                    inside[i] += 1;
                }
            }
        }
    }
    inside.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
}

/// Consistency report for one filter tuning. Returns the report.
pub fn check(cfg: &Config, problem: &TuneProblem, seed: u64) -> Result<ConsistencyReport> {
    let params = cfg.check.params.clone().unwrap_or_else(|| problem.truth_params.clone());
    if !(cfg.check.alpha > 0.0 && cfg.check.alpha < 0.5) {
        bail!("check.alpha must lie in (0, 0.5), got {}", cfg.check.alpha);
    }
    let truth = problem.system.build(&problem.truth_params)?;
    let filter = problem.system.build(&params)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut steps = create(dir, "steps.csv")?;
    let n_x = problem.system.state_dim();
    let n_z = filter.measurement_dim();
    let mut header = vec!["dt", "k", "nis_avg", "nis_lower", "nis_upper", "nees_avg", "nees_lower", "nees_upper"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for i in 0..n_x {
        header.extend([format!("err_{i}"), format!("two_sigma_{i}"), format!("within_{i}")]);
    }
    writeln!(steps, "{}", header.join(","))?;

    let mut intervals = Vec::new();
    let mut within = Vec::new();
    for (j, &dt) in problem.dt_list.iter().enumerate() {
        let truth_d = discretize(&truth, dt)?;
        let filter_d = discretize(&filter, dt)?;
        let sim = problem.sim_config(dt, derive_seed(seed, j as u64));
        let logs = run_batch(&truth_d, &filter_d, &sim, problem.exec)?;
        let stats = aggregate(&logs)?;
        let nis_b = chi2_bounds(n_z, problem.n_runs, cfg.check.alpha)?;
        let nees_b = chi2_bounds(n_x, problem.n_runs, cfg.check.alpha)?;
        let nees = stats.nees.as_ref().context("truth states missing from the run logs")?;
        for k in 0..problem.n_steps {
            let mut row = vec![
                float(dt),
                (k + 1).to_string(),
                float(stats.nis.avg_per_step[k]),
                float(nis_b.lower),
                float(nis_b.upper),
                float(nees.avg_per_step[k]),
                float(nees_b.lower),
                float(nees_b.upper),
            ];
            let first = &logs[0].steps[k];
            let truth_k = first.truth.as_ref().context("truth states missing from the run logs")?;
            for i in 0..n_x {
                let frac = logs
                    .iter()
                    .filter(|l| {
                        let s = &l.steps[k];
                        let t = s.truth.as_ref().expect("truth recorded");
                        (t[i] - s.estimate.mean[i]).abs() <= 2.0 * s.estimate.cov[(i, i)].sqrt()
                    })
                    .count() as f64
                    / logs.len() as f64;
                row.push(float(truth_k[i] - first.estimate.mean[i]));
                row.push(float(2.0 * first.estimate.cov[(i, i)].sqrt()));
                row.push(float(frac));
            }
            writeln!(steps, "{}", row.join(","))?;
        }
        within.push(two_sigma_fraction(&logs, n_x));
        intervals.push(IntervalReport::from_stats(dt, &stats, cfg.check.alpha)?);
    }
    steps.flush()?;

    let report = ConsistencyReport { intervals };
    let summary = CheckSummary {
        system: problem.system,
        params: &params,
        seed,
        alpha: cfg.check.alpha,
        report: &report,
        within_two_sigma: within,
    };
    let mut out = create(dir, "consistency.json")?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;
    Ok(report)
}

pub fn list_systems() -> Result<String> {
    let mut s = String::new();
    for sys in System::ALL {
        let spec = sys.spec();
        s.push_str(&format!(
            "{:<12} states {}  params [{}]  truth {:?}  lower {:?}  upper {:?}  dt {:?}\n",
            sys.name(),
            sys.state_dim(),
            spec.free_params.join(", "),
            spec.truth,
            spec.search.lower,
            spec.search.upper,
            spec.dt_list
        ));
    }
    Ok(s)
}
