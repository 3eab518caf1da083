//! Continuous-time linear stochastic plants and their zero-order-hold
//! discretization through Van Loan's augmented matrix exponentials.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{clip_psd, is_finite, max_abs, max_asymmetry, symmetrize};

/// Continuous-time LTI plant `dx = A x + G u + Γ v`, `z = H x + w`, with white
/// noise intensities `V` (process) and `W` (measurement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModel {
    /// State dynamics `A`, n_x × n_x.
    pub dynamics: DMatrix<f64>,
    /// Control gain `G`, n_x × n_u.
    pub input_gain: DMatrix<f64>,
    /// Noise injection `Γ`, n_x × n_v.
    pub noise_gain: DMatrix<f64>,
    /// Observation matrix `H`, n_z × n_x.
    pub observation: DMatrix<f64>,
    /// Process-noise intensity `V`, n_v × n_v, symmetric PSD.
    pub process_intensity: DMatrix<f64>,
    /// Measurement-noise intensity `W`, n_z × n_z, symmetric PD.
    pub measurement_intensity: DMatrix<f64>,
}

impl ContinuousModel {
    pub fn new(
        dynamics: DMatrix<f64>,
        input_gain: DMatrix<f64>,
        noise_gain: DMatrix<f64>,
        observation: DMatrix<f64>,
        process_intensity: DMatrix<f64>,
        measurement_intensity: DMatrix<f64>,
    ) -> Result<Self> {
        let n_x = dynamics.nrows();
        if !dynamics.is_square() {
            return Err(Error::dim("dynamics matrix must be square"));
        }
        if input_gain.nrows() != n_x {
            return Err(Error::dim(format!(
                "input gain has {} rows, expected {n_x}",
                input_gain.nrows()
            )));
        }
        if noise_gain.nrows() != n_x {
            return Err(Error::dim(format!(
                "noise gain has {} rows, expected {n_x}",
                noise_gain.nrows()
            )));
        }
        if observation.ncols() != n_x {
            return Err(Error::dim(format!(
                "observation matrix has {} columns, expected {n_x}",
                observation.ncols()
            )));
        }
        let n_v = noise_gain.ncols();
        if process_intensity.shape() != (n_v, n_v) {
            return Err(Error::dim(format!(
                "process intensity must be {n_v}x{n_v}, got {:?}",
                process_intensity.shape()
            )));
        }
        let n_z = observation.nrows();
        if measurement_intensity.shape() != (n_z, n_z) {
            return Err(Error::dim(format!(
                "measurement intensity must be {n_z}x{n_z}, got {:?}",
                measurement_intensity.shape()
            )));
        }
        for (m, name) in [
            (&dynamics, "dynamics"),
            (&input_gain, "input gain"),
            (&noise_gain, "noise gain"),
            (&observation, "observation"),
            (&process_intensity, "process intensity"),
            (&measurement_intensity, "measurement intensity"),
        ] {
            if !is_finite(m) {
                return Err(Error::domain(format!("{name} has non-finite entries")));
            }
        }
        let sym_tol = 1e-12 * max_abs(&process_intensity).max(1.0);
        if max_asymmetry(&process_intensity) > sym_tol {
            return Err(Error::domain("process intensity is not symmetric"));
        }
        clip_psd(&process_intensity, sym_tol, "process intensity")
            .map_err(|_| Error::domain("process intensity is not positive semidefinite"))?;
        if max_asymmetry(&measurement_intensity) > 1e-12 * max_abs(&measurement_intensity).max(1.0)
        {
            return Err(Error::domain("measurement intensity is not symmetric"));
        }
        if measurement_intensity.clone().cholesky().is_none() {
            return Err(Error::domain("measurement intensity is not positive definite"));
        }
        Ok(Self {
            dynamics,
            input_gain,
            noise_gain,
            observation,
            process_intensity,
            measurement_intensity,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_gain.ncols()
    }
}

/// Discrete-time plant `x_k = F x_{k-1} + B u_k + v_k`, `z_k = H x_k + w_k`
/// with `v_k ~ N(0, Q)`, `w_k ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    /// State transition `F`.
    pub transition: DMatrix<f64>,
    /// Discrete input matrix `B`.
    pub input: DMatrix<f64>,
    /// Observation matrix `H`.
    pub observation: DMatrix<f64>,
    /// Process covariance `Q`, symmetric PSD.
    pub process_cov: DMatrix<f64>,
    /// Measurement covariance `R`, symmetric PD.
    pub measurement_cov: DMatrix<f64>,
    /// Sample interval.
    pub dt: f64,
}

impl DiscreteModel {
    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }
}

// Padé(13) numerator coefficients, Higham (2005).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::domain("matrix exponential of non-finite matrix"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = one_norm(m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-squarings);
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::numerical("Padé denominator is singular"))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Discretize `model` at sample interval `dt`.
///
/// `F = e^{A dt}`, `B = (∫_0^dt e^{Aτ} dτ) G`, `R = W / dt` and
/// `Q = ∫_0^dt e^{Aτ} Γ V Γ^T e^{A^T τ} dτ`, the last two integrals from
/// block-triangular exponentials.
pub fn discretize(model: &ContinuousModel, dt: f64) -> Result<DiscreteModel> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("sample interval must be positive, got {dt}")));
    }
    let n = model.state_dim();
    let a = &model.dynamics;
    let transition = matrix_exponential(&(a * dt))?;

    // [[A, I], [0, 0]] dt  ->  upper-right block is ∫ e^{Aτ} dτ
    let mut aug = DMatrix::<f64>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let e = matrix_exponential(&(aug * dt))?;
    let input = e.view((0, n), (n, n)) * &model.input_gain;

    // [[-A, ΓVΓ^T], [0, A^T]] dt  ->  Q = F · (upper-right block)
    let gvg = &model.noise_gain * &model.process_intensity * model.noise_gain.transpose();
    let mut aug = DMatrix::<f64>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(-a));
    aug.view_mut((0, n), (n, n)).copy_from(&gvg);
    aug.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = matrix_exponential(&(aug * dt))?;
    let q_raw = &transition * e.view((0, n), (n, n));
    if max_asymmetry(&q_raw) > 1e-8 * max_abs(&q_raw).max(1.0) {
        return Err(Error::numerical_with(
            "discrete process covariance is not symmetric",
            q_raw,
        ));
    }
    let process_cov = clip_psd(&q_raw, 1e-10 * max_abs(&q_raw).max(1.0), "process covariance")?;

    Ok(DiscreteModel {
        transition,
        input,
        observation: model.observation.clone(),
        process_cov,
        measurement_cov: symmetrize(&(&model.measurement_intensity / dt)),
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Taylor series with scaling so every term is small, then squaring.
    fn taylor_expm(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let norm = m.abs().max() * n as f64;
        let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
        let a = m / 2f64.powi(s);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn tracking1d(v: f64, w: f64) -> ContinuousModel {
        ContinuousModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, v),
            DMatrix::from_element(1, 1, w),
        )
        .unwrap()
    }

    fn msd(v: f64) -> ContinuousModel {
        ContinuousModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.2]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, v),
            DMatrix::from_element(1, 1, 0.1),
        )
        .unwrap()
    }

    /// Adaptive Simpson on a matrix-valued integrand.
    fn adaptive_simpson<F: Fn(f64) -> DMatrix<f64>>(f: &F, a: f64, b: f64, tol: f64) -> DMatrix<f64> {
        #[allow(clippy::too_many_arguments)]
        fn rec<F: Fn(f64) -> DMatrix<f64>>(
            f: &F,
            a: f64,
            b: f64,
            fa: &DMatrix<f64>,
            fm: &DMatrix<f64>,
            fb: &DMatrix<f64>,
            whole: &DMatrix<f64>,
            tol: f64,
            depth: u32,
        ) -> DMatrix<f64> {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (fa + &flm * 4.0 + fm) * ((m - a) / 6.0);
            let right = (fm + &frm * 4.0 + fb) * ((b - m) / 6.0);
            let diff = &left + &right - whole;
            if depth == 0 || diff.abs().max() <= 15.0 * tol {
                return left + right + diff / 15.0;
            }
            rec(f, a, m, fa, &flm, fm, &left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, &frm, fb, &right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (&fa + &fm * 4.0 + &fb) * ((b - a) / 6.0);
        rec(f, a, b, &fa, &fm, &fb, &whole, tol, 40)
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(e, DMatrix::identity(2, 2));
    }

    #[test]
    fn exponential_of_nilpotent_truncates() {
        let dt = 0.37;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, dt, 0.0, 0.0]);
        let e = matrix_exponential(&m).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        assert!((e - expect).abs().max() < 1e-12);
    }

    #[test]
    fn exponential_of_index_three_nilpotent() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, -1.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        let e = matrix_exponential(&m).unwrap();
        let expect = DMatrix::identity(3, 3) + &m + &m * &m * 0.5;
        assert!((e - expect).abs().max() < 1e-12);
    }

    #[test]
    fn exponential_matches_taylor_oracle_on_random_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for scale in [0.1, 1.0, 3.0, 8.0] {
            for _ in 0..10 {
                let m = DMatrix::from_fn(4, 4, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0));
                let e = matrix_exponential(&m).unwrap();
                let oracle = taylor_expm(&m);
                let rel = (&e - &oracle).abs().max() / oracle.abs().max();
                assert!(rel < 1e-9, "relative error {rel} at scale {scale}");
            }
        }
    }

    #[test]
    fn exponential_rejects_bad_input() {
        assert!(matches!(
            matrix_exponential(&DMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(matrix_exponential(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn tracking1d_closed_form() {
        let (v, w, dt) = (1.7, 0.1, 0.1);
        let d = discretize(&tracking1d(v, w), dt).unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]);
        let q = DMatrix::from_row_slice(
            2,
            2,
            &[dt.powi(3) / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt],
        ) * v;
        assert!((&d.transition - f).abs().max() < 1e-12);
        assert!((&d.input - b).abs().max() < 1e-12);
        assert!((&d.process_cov - q).abs().max() < 1e-12);
        assert!((d.measurement_cov[(0, 0)] - w / dt).abs() < 1e-12);
        assert_eq!(d.observation, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn msd_process_covariance_matches_quadrature() {
        let model = msd(1.0);
        let dt = 0.1;
        let d = discretize(&model, dt).unwrap();
        let gvg = &model.noise_gain * &model.process_intensity * model.noise_gain.transpose();
        let a = model.dynamics.clone();
        let integrand = |t: f64| {
            let e = taylor_expm(&(&a * t));
            &e * &gvg * e.transpose()
        };
        let oracle = adaptive_simpson(&integrand, 0.0, dt, 1e-13);
        assert!((&d.process_cov - oracle).abs().max() < 1e-9);
    }

    #[test]
    fn rejects_non_positive_interval() {
        assert!(matches!(discretize(&msd(1.0), 0.0), Err(Error::Domain(_))));
        assert!(matches!(discretize(&msd(1.0), -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn construction_checks_dimensions_and_definiteness() {
        let bad_w = ContinuousModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
        );
        assert!(matches!(bad_w, Err(Error::Domain(_))));
        let bad_dim = ContinuousModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        assert!(matches!(bad_dim, Err(Error::Dimension(_))));
    }

    fn random_model(seed: u64) -> ContinuousModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let gamma = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let root = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let v = &root * root.transpose();
        ContinuousModel::new(
            a,
            DMatrix::from_element(n, 1, 1.0),
            gamma,
            DMatrix::from_row_slice(1, n, &[1.0, 0.0, 0.0]),
            v,
            DMatrix::from_element(1, 1, 0.3),
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn process_covariance_is_symmetric_psd(seed in any::<u64>(), dt in 0.01f64..2.0) {
            let d = discretize(&random_model(seed), dt).unwrap();
            prop_assert_eq!(max_asymmetry(&d.process_cov), 0.0);
            let min = d.process_cov.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min >= -1e-10);
        }

        #[test]
        fn process_covariance_linear_in_intensity(seed in any::<u64>(), dt in 0.01f64..1.0, c in 0.1f64..10.0) {
            let model = random_model(seed);
            let mut scaled = model.clone();
            scaled.process_intensity *= c;
            let q1 = discretize(&model, dt).unwrap().process_cov;
            let q2 = discretize(&scaled, dt).unwrap().process_cov;
            let scale = q2.abs().max().max(1.0);
            prop_assert!((q2 - q1 * c).abs().max() <= 1e-10 * scale);
        }

        #[test]
        fn driftless_transition_is_a_semigroup(dt in 0.01f64..3.0) {
            let model = tracking1d(1.0, 0.1);
            let f1 = discretize(&model, dt).unwrap().transition;
            let f2 = discretize(&model, 2.0 * dt).unwrap().transition;
            prop_assert!((f2 - &f1 * &f1).abs().max() < 1e-10);
        }
    }
}
