//! Discrete-time Kalman filter recursion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize};
use crate::statespace::DiscreteModel;

/// Conditional mean and covariance of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl StateEstimate {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::dim(format!(
                "covariance {:?} does not match state of length {}",
                cov.shape(),
                mean.len()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Mean `x0` with covariance `scale · I`.
    pub fn isotropic(mean: DVector<f64>, scale: f64) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::identity(n, n) * scale,
        }
    }
}

/// Innovation `z - H x̂`, its covariance `S` and the gain `K` applied with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationRecord {
    pub innovation: DVector<f64>,
    pub innov_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

pub fn predict(prior: &StateEstimate, model: &DiscreteModel, u: &DVector<f64>) -> Result<StateEstimate> {
    let n = model.state_dim();
    if prior.mean.len() != n || prior.cov.shape() != (n, n) {
        return Err(Error::dim(format!(
            "prior has {} states, model has {n}",
            prior.mean.len()
        )));
    }
    if u.len() != model.input_dim() {
        return Err(Error::dim(format!(
            "control has length {}, model expects {}",
            u.len(),
            model.input_dim()
        )));
    }
    let f = &model.transition;
    let mean = f * &prior.mean + &model.input * u;
    let cov = symmetrize(&(f * &prior.cov * f.transpose() + &model.process_cov));
    Ok(StateEstimate { mean, cov })
}

pub fn update(
    pred: &StateEstimate,
    model: &DiscreteModel,
    z: &DVector<f64>,
) -> Result<(StateEstimate, InnovationRecord)> {
    let h = &model.observation;
    if z.len() != h.nrows() {
        return Err(Error::dim(format!(
            "measurement has length {}, model expects {}",
            z.len(),
            h.nrows()
        )));
    }
    if pred.mean.len() != h.ncols() {
        return Err(Error::dim("prediction does not match observation matrix"));
    }
    let innovation = z - h * &pred.mean;
    let ph_t = &pred.cov * h.transpose();
    let innov_cov = symmetrize(&(h * &ph_t + &model.measurement_cov));
    let chol = cholesky(&innov_cov, "innovation covariance")?;
    // K^T = S^{-1} H P
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let mean = &pred.mean + &gain * &innovation;
    let cov = symmetrize(&(&pred.cov - &gain * &innov_cov * gain.transpose()));
    if cov.clone().cholesky().is_none() {
        return Err(Error::numerical_with(
            "posterior covariance is not positive definite",
            cov,
        ));
    }
    Ok((
        StateEstimate { mean, cov },
        InnovationRecord {
            innovation,
            innov_cov,
            gain,
        },
    ))
}
