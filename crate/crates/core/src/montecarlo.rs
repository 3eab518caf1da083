//! Seeded truth simulation and filter runs over it.
//!
//! Every run draws its process and measurement noise from its own keyed
//! ChaCha stream, addressed by `(seed, run_index, tag)`. A run therefore
//! produces the same numbers no matter which worker executes it or in what
//! order, which is what lets the batch helpers fan out over runs.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::consistency::{nees, nis};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kalman::{predict, update, InnovationRecord, StateEstimate};
use crate::linalg::psd_factor;
use crate::numfmt::float;
use crate::statespace::DiscreteModel;

const PROCESS_STREAM: u64 = 1;
const MEASUREMENT_STREAM: u64 = 2;

/// Scalar control signal, applied to every input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Control {
    Zero,
    /// `amplitude · cos(frequency · t)`
    Cosine { amplitude: f64, frequency: f64 },
}

impl Control {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Control::Zero => 0.0,
            Control::Cosine {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_runs: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub control: Control,
    /// True initial state; the filter also starts here.
    pub x0: DVector<f64>,
    /// Initial filter covariance is `p0_scale · I`.
    pub p0_scale: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 1 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.n_steps < 1 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.p0_scale > 0.0) {
            return Err(Error::Config("p0_scale must be positive".into()));
        }
        Ok(())
    }

    /// Zero-order-hold input for step `k` (1-based): the signal sampled at the
    /// start of the interval `[t_{k-1}, t_k]`.
    pub fn input_at(&self, k: usize, n_u: usize) -> DVector<f64> {
        let t = (k - 1) as f64 * self.dt;
        DVector::from_element(n_u, self.control.value(t))
    }

    fn check_model(&self, model: &DiscreteModel, role: &str) -> Result<()> {
        if (model.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Config(format!(
                "{role} model sampled at {} but simulation uses {}",
                model.dt, self.dt
            )));
        }
        if self.x0.len() != model.state_dim() {
            return Err(Error::dim(format!(
                "x0 has length {}, {role} model has {} states",
                self.x0.len(),
                model.state_dim()
            )));
        }
        Ok(())
    }
}

/// Ground truth and measurements of one run. `states` is empty when the
/// measurements come from outside (no truth available).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthData {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl TruthData {
    pub fn measurements_only(measurements: Vec<DVector<f64>>) -> Self {
        Self {
            states: Vec::new(),
            measurements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub truth: Option<DVector<f64>>,
    pub estimate: StateEstimate,
    pub innovation: InnovationRecord,
    pub measurement: DVector<f64>,
}

/// Per-step record of one filter run, steps `k = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
}

/// NIS (and NEES when truth is known) per step of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub nis: Vec<f64>,
    pub nees: Option<Vec<f64>>,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn series(&self) -> Result<RunSeries> {
        let nis = self
            .steps
            .iter()
            .map(|s| nis(&s.innovation.innovation, &s.innovation.innov_cov))
            .collect::<Result<Vec<_>>>()?;
        let nees = if self.steps.iter().all(|s| s.truth.is_some()) && !self.steps.is_empty() {
            Some(
                self.steps
                    .iter()
                    .map(|s| {
                        let truth = s.truth.as_ref().expect("checked above");
                        nees(&(truth - &s.estimate.mean), &s.estimate.cov)
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(RunSeries { nis, nees })
    }

    /// One row per step: `k, truth_*, estimate_*, innovation_*, s_diag_*`.
    /// Truth columns are omitted when the run has no ground truth.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let Some(first) = self.steps.first() else {
            return Ok(());
        };
        let n_x = first.estimate.mean.len();
        let n_z = first.innovation.innovation.len();
        let with_truth = self.steps.iter().all(|s| s.truth.is_some());
        let mut header = vec!["k".to_string()];
        if with_truth {
            header.extend((0..n_x).map(|i| format!("truth_{i}")));
        }
        header.extend((0..n_x).map(|i| format!("estimate_{i}")));
        header.extend((0..n_z).map(|i| format!("innovation_{i}")));
        header.extend((0..n_z).map(|i| format!("s_diag_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (k, step) in self.steps.iter().enumerate() {
            let mut row = vec![(k + 1).to_string()];
            if let (true, Some(t)) = (with_truth, &step.truth) {
                row.extend(t.iter().map(|&x| float(x)));
            }
            row.extend(step.estimate.mean.iter().map(|&x| float(x)));
            row.extend(step.innovation.innovation.iter().map(|&x| float(x)));
            row.extend(step.innovation.innov_cov.diagonal().iter().map(|&x| float(x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Keyed noise stream for one run.
pub(crate) fn noise_stream(seed: u64, run_index: usize, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((run_index as u64) << 2) | tag);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let white = DVector::from_fn(factor.ncols(), |_, _| StandardNormal.sample(rng));
    factor * white
}

/// Propagate the truth model for `cfg.n_steps` steps and measure each state.
pub fn simulate_truth(truth_model: &DiscreteModel, cfg: &SimConfig, run_index: usize) -> Result<TruthData> {
    cfg.validate()?;
    cfg.check_model(truth_model, "truth")?;
    let q_factor = psd_factor(&truth_model.process_cov, "truth process covariance")?;
    let r_factor = psd_factor(&truth_model.measurement_cov, "truth measurement covariance")?;
    let mut process = noise_stream(cfg.seed, run_index, PROCESS_STREAM);
    let mut measurement = noise_stream(cfg.seed, run_index, MEASUREMENT_STREAM);
    let n_u = truth_model.input_dim();

    let mut states = Vec::with_capacity(cfg.n_steps);
    let mut measurements = Vec::with_capacity(cfg.n_steps);
    let mut x = cfg.x0.clone();
    for k in 1..=cfg.n_steps {
        let u = cfg.input_at(k, n_u);
        x = &truth_model.transition * &x + &truth_model.input * u + gaussian(&mut process, &q_factor);
        let z = &truth_model.observation * &x + gaussian(&mut measurement, &r_factor);
        states.push(x.clone());
        measurements.push(z);
    }
    Ok(TruthData {
        states,
        measurements,
    })
}

fn filter_steps<F>(data: &TruthData, filter_model: &DiscreteModel, cfg: &SimConfig, mut visit: F) -> Result<()>
where
    F: FnMut(Option<&DVector<f64>>, StateEstimate, InnovationRecord, &DVector<f64>) -> Result<StateEstimate>,
{
    cfg.validate()?;
    cfg.check_model(filter_model, "filter")?;
    if data.measurements.len() != cfg.n_steps {
        return Err(Error::dim(format!(
            "{} measurements for {} steps",
            data.measurements.len(),
            cfg.n_steps
        )));
    }
    if !data.states.is_empty() && data.states.len() != cfg.n_steps {
        return Err(Error::dim(format!(
            "{} truth states for {} steps",
            data.states.len(),
            cfg.n_steps
        )));
    }
    let n_u = filter_model.input_dim();
    let mut estimate = StateEstimate::isotropic(cfg.x0.clone(), cfg.p0_scale);
    for (i, z) in data.measurements.iter().enumerate() {
        let u = cfg.input_at(i + 1, n_u);
        let pred = predict(&estimate, filter_model, &u)?;
        let (post, innovation) = update(&pred, filter_model, z)?;
        estimate = visit(data.states.get(i), post, innovation, z)?;
    }
    Ok(())
}

/// Run the Kalman filter built from `filter_model` over `data`, which may have
/// been generated with different noise covariances.
pub fn run_filter(data: &TruthData, filter_model: &DiscreteModel, cfg: &SimConfig) -> Result<RunLog> {
    let mut steps = Vec::with_capacity(cfg.n_steps);
    filter_steps(data, filter_model, cfg, |truth, estimate, innovation, z| {
        steps.push(StepRecord {
            truth: truth.cloned(),
            estimate: estimate.clone(),
            innovation,
            measurement: z.clone(),
        });
        Ok(estimate)
    })?;
    Ok(RunLog { steps })
}

/// Same numbers as `run_filter(..)?.series()` without keeping the log.
pub fn run_series(data: &TruthData, filter_model: &DiscreteModel, cfg: &SimConfig, with_nees: bool) -> Result<RunSeries> {
    let mut nis_k = Vec::with_capacity(cfg.n_steps);
    let mut nees_k = Vec::with_capacity(if with_nees { cfg.n_steps } else { 0 });
    let with_nees = with_nees && !data.states.is_empty();
    filter_steps(data, filter_model, cfg, |truth, estimate, innovation, _| {
        nis_k.push(nis(&innovation.innovation, &innovation.innov_cov)?);
        if with_nees {
            let truth = truth.expect("states present");
            nees_k.push(nees(&(truth - &estimate.mean), &estimate.cov)?);
        }
        Ok(estimate)
    })?;
    Ok(RunSeries {
        nis: nis_k,
        nees: with_nees.then_some(nees_k),
    })
}

/// `cfg.n_runs` independent truth runs, each filtered with `filter_model`.
pub fn run_batch(
    truth_model: &DiscreteModel,
    filter_model: &DiscreteModel,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<Vec<RunLog>> {
    exec.try_map(cfg.n_runs, |i| {
        let data = simulate_truth(truth_model, cfg, i)?;
        run_filter(&data, filter_model, cfg)
    })
}

/// Batch variant of [`run_series`].
pub fn run_batch_series(
    truth_model: &DiscreteModel,
    filter_model: &DiscreteModel,
    cfg: &SimConfig,
    with_nees: bool,
    exec: Execution,
) -> Result<Vec<RunSeries>> {
    exec.try_map(cfg.n_runs, |i| {
        let data = simulate_truth(truth_model, cfg, i)?;
        run_series(&data, filter_model, cfg, with_nees)
    })
}
