//! The four linear benchmark plants with their ground-truth noise levels and
//! default experiment settings.
//!
//! Parameter vectors list process-noise intensities first, then measurement
//! intensities, matching the diagonal slots of `V` and `W`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::acquisition::SearchSpace;
use crate::error::{Error, Result};
use crate::montecarlo::Control;
use crate::statespace::ContinuousModel;

const MASS: f64 = 1.0;
const SPRING: f64 = 1.0;
const DAMPING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// Double integrator on a line, position measured.
    Tracking1d,
    /// Single mass-spring-damper, position measured.
    Msd,
    /// Independent double integrators in x and y sharing one input.
    Tracking2d,
    /// Three masses chained by springs and dampers, positions measured.
    CascadeMsd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSpec {
    pub system: System,
    pub free_params: Vec<&'static str>,
    pub truth: Vec<f64>,
    pub search: SearchSpace,
    pub dt_list: Vec<f64>,
    pub x0: DVector<f64>,
    pub control: Control,
}

impl System {
    pub const ALL: [System; 4] = [System::Tracking1d, System::Msd, System::Tracking2d, System::CascadeMsd];

    pub fn name(self) -> &'static str {
        match self {
            System::Tracking1d => "tracking1d",
            System::Msd => "msd",
            System::Tracking2d => "tracking2d",
            System::CascadeMsd => "cascade_msd",
        }
    }

    pub fn free_params(self) -> Vec<&'static str> {
        match self {
            System::Tracking1d | System::Msd => vec!["v", "w"],
            System::Tracking2d => vec!["v0", "v1", "w0", "w1"],
            System::CascadeMsd => vec!["v0", "v1", "v2", "w0", "w1", "w2"],
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            System::Tracking1d | System::Msd => 2,
            System::Tracking2d => 4,
            System::CascadeMsd => 6,
        }
    }

    pub fn spec(self) -> BenchmarkSpec {
        let (truth, lower, upper, dt_list) = match self {
            System::Tracking1d | System::Msd => (vec![1.0, 0.1], vec![0.1, 0.01], vec![5.0, 0.5], vec![0.1, 0.5]),
            System::Tracking2d => (
                vec![1.0, 2.0, 0.2, 0.1],
                vec![0.1, 0.1, 0.01, 0.01],
                vec![5.0, 5.0, 0.5, 0.5],
                vec![0.1, 0.5],
            ),
            System::CascadeMsd => (
                vec![1.0, 2.0, 3.0, 0.2, 0.1, 0.15],
                vec![0.1, 0.1, 0.1, 0.01, 0.01, 0.01],
                vec![5.0, 5.0, 5.0, 1.0, 1.0, 1.0],
                vec![0.1, 0.25, 0.5, 1.0],
            ),
        };
        BenchmarkSpec {
            system: self,
            free_params: self.free_params(),
            truth,
            search: SearchSpace { lower, upper },
            dt_list,
            x0: DVector::zeros(self.state_dim()),
            control: Control::Cosine {
                amplitude: 2.0,
                frequency: 0.75,
            },
        }
    }

    /// Continuous model with the given noise intensities.
    pub fn build(self, params: &[f64]) -> Result<ContinuousModel> {
        let arity = self.free_params().len();
        if params.len() != arity {
            return Err(Error::dim(format!(
                "{} takes {arity} noise parameters, got {}",
                self.name(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("noise intensities must be positive, got {p}")));
        }
        let half = arity / 2;
        let v = DMatrix::from_diagonal(&DVector::from_row_slice(&params[..half]));
        let w = DMatrix::from_diagonal(&DVector::from_row_slice(&params[half..]));
        let (k, b, m) = (SPRING, DAMPING, MASS);
        let (a, g, gamma, h) = match self {
            System::Tracking1d => (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            ),
            System::Msd => (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k / m, -b / m]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / m]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            ),
            System::Tracking2d => {
                let mut a = DMatrix::zeros(4, 4);
                a[(0, 2)] = 1.0;
                a[(1, 3)] = 1.0;
                let mut gamma = DMatrix::zeros(4, 2);
                gamma[(2, 0)] = 1.0;
                gamma[(3, 1)] = 1.0;
                let mut h = DMatrix::zeros(2, 4);
                h[(0, 0)] = 1.0;
                h[(1, 1)] = 1.0;
                (a, DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 1.0]), gamma, h)
            }
            System::CascadeMsd => {
                #[rustfmt::skip]
                let a = DMatrix::from_row_slice(6, 6, &[
                    0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
                    -2.0 * k / m, -2.0 * b / m, k / m, b / m, 0.0, 0.0,
                    0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
                    k / m, b / m, -2.0 * k / m, -2.0 * b / m, k / m, b / m,
                    0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
                    0.0, 0.0, k / m, b / m, -k / m, -b / m,
                ]);
                let mut g = DMatrix::zeros(6, 1);
                g[(5, 0)] = 1.0;
                let mut gamma = DMatrix::zeros(6, 3);
                let mut h = DMatrix::zeros(3, 6);
                for i in 0..3 {
                    gamma[(2 * i + 1, i)] = 1.0;
                    h[(i, 2 * i)] = 1.0;
                }
                (a, g, gamma, h)
            }
        };
        ContinuousModel::new(a, g, gamma, h, v, w)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|sys| sys.name() == s)
            .ok_or_else(|| Error::UnknownSystem(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::discretize;

    #[test]
    fn names_round_trip() {
        for sys in System::ALL {
            assert_eq!(sys.name().parse::<System>().unwrap(), sys);
            let json = serde_json::to_string(&sys).unwrap();
            assert_eq!(json, format!("\"{}\"", sys.name()));
        }
        assert!(matches!("pendulum".parse::<System>(), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn truth_sits_inside_bounds() {
        for sys in System::ALL {
            let spec = sys.spec();
            assert_eq!(spec.truth.len(), spec.free_params.len());
            assert!(spec.search.contains(&spec.truth));
            assert!(sys.build(&spec.truth).is_ok());
        }
    }

    #[test]
    fn arity_and_sign_checked() {
        assert!(matches!(System::Msd.build(&[1.0]), Err(Error::Dimension(_))));
        assert!(matches!(System::Msd.build(&[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(System::Tracking2d.build(&[1.0, -2.0, 0.2, 0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn tracking1d_discrete_covariances() {
        let dt: f64 = 0.1;
        let d = discretize(&System::Tracking1d.build(&[1.0, 0.1]).unwrap(), dt).unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2) / 2.0, dt]);
        assert!((d.process_cov - q).abs().max() < 1e-12);
        assert!((d.measurement_cov[(0, 0)] - 0.1 / dt).abs() < 1e-12);
    }

    #[test]
    fn msd_is_damped() {
        let model = System::Msd.build(&[1.0, 0.1]).unwrap();
        let eig = model.dynamics.clone().complex_eigenvalues();
        assert!(eig.iter().all(|e| e.re < 0.0));
    }

    #[test]
    fn cascade_second_row() {
        let model = System::CascadeMsd.build(&[1.0, 2.0, 3.0, 0.2, 0.1, 0.15]).unwrap();
        let row: Vec<f64> = model.dynamics.row(1).iter().cloned().collect();
        assert_eq!(row, vec![-2.0, -0.4, 1.0, 0.2, 0.0, 0.0]);
        assert_eq!(model.observation.nrows(), 3);
        assert_eq!(model.process_intensity[(2, 2)], 3.0);
        assert_eq!(model.measurement_intensity[(1, 1)], 0.1);
    }
}
