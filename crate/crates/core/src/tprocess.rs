//! Student-t process regression with a Matérn ARD kernel.
//!
//! Observed values `y` are modeled as jointly multivariate Student-t with
//! zero location, scale matrix `K = k(q_i, q_j) + noise·I` and `dof`
//! degrees of freedom. Conditioning on `n` observations gives another
//! Student-t whose scale grows with the Mahalanobis size of `y`, so the
//! predictive spread reacts to the observed values and not only to where
//! they were sampled. The Gaussian mode is the `dof → ∞` limit.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::cholesky;
use crate::neldermead::{self, SimplexConfig};
use crate::special::ln_gamma;

/// Predictive spreads are floored here so acquisition never divides by zero.
pub const SIGMA_FLOOR: f64 = 1e-12;
const MIN_NOISE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Matern32,
    #[default]
    Matern52,
}

impl Smoothness {
    /// Correlation at scaled distance `r`.
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Smoothness::Matern32 => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Smoothness::Matern52 => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMode {
    #[default]
    StudentT,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// One per input dimension.
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub smoothness: Smoothness,
    /// Added to the diagonal of the training covariance.
    pub noise_jitter: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, smoothness: Smoothness, noise_jitter: f64) -> Result<Self> {
        let p = Self {
            lengthscales,
            signal_variance,
            smoothness,
            noise_jitter,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit lengthscales and variance with a small nugget.
    pub fn isotropic(dim: usize, smoothness: Smoothness) -> Self {
        Self {
            lengthscales: vec![0.3; dim],
            signal_variance: 1.0,
            smoothness,
            noise_jitter: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::dim("kernel needs at least one lengthscale"));
        }
        if self.lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::domain(format!("lengthscales must be positive: {:?}", self.lengthscales)));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::domain(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_jitter >= MIN_NOISE && self.noise_jitter.is_finite()) {
            return Err(Error::domain(format!(
                "noise jitter must be at least {MIN_NOISE}, got {}",
                self.noise_jitter
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `signal_variance · matern(r)`, `r² = Σ ((a_i - b_i) / ℓ_i)²`.
pub fn kernel_eval(p: &KernelParams, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&p.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    p.signal_variance * p.smoothness.correlation(r2.sqrt())
}

/// Kernel matrix over `points`, without the noise term.
pub fn kernel_matrix(p: &KernelParams, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = p.signal_variance;
        for j in 0..i {
            let v = kernel_eval(p, &points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Conditional distribution at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Squared scale `((v + d)/(v + n)) · (K22 - K21 K11⁻¹ K12)`; in Gaussian
    /// mode the plain predictive variance.
    pub sigma: f64,
    /// `v + n`, or infinity in Gaussian mode.
    pub dof: f64,
}

impl Prediction {
    /// Scale of the predictive Student-t (standard deviation in Gaussian mode).
    pub fn scale(&self) -> f64 {
        self.sigma.sqrt()
    }
}

/// Bounds and budget for hyperparameter fitting, in the units of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Objective evaluations per start.
    pub budget: usize,
    pub exec: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lengthscale_bounds: (0.01, 10.0),
            signal_variance_bounds: (1e-2, 1e2),
            noise_bounds: (1e-6, 1.0),
            budget: 200,
            exec: Execution::Sequential,
        }
    }
}

/// Observations plus a factorized kernel matrix. Updates return new states.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    points: Vec<Vec<f64>>,
    values: DVector<f64>,
    kernel: KernelParams,
    dof: f64,
    mode: SurrogateMode,
    chol: Cholesky<f64, Dyn>,
    /// `K⁻¹ y`
    weights: DVector<f64>,
    /// `yᵀ K⁻¹ y`
    mahalanobis: f64,
}

impl SurrogateState {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>, kernel: KernelParams, dof: f64, mode: SurrogateMode) -> Result<Self> {
        kernel.validate()?;
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::dim(format!(
                "{} points with {} values",
                points.len(),
                values.len()
            )));
        }
        if points.iter().any(|p| p.len() != kernel.dim()) {
            return Err(Error::dim("points do not match the kernel dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("observed values must be finite"));
        }
        if mode == SurrogateMode::StudentT && !(dof > 2.0 && dof.is_finite()) {
            return Err(Error::domain(format!("Student-t dof must exceed 2, got {dof}")));
        }
        let mut k = kernel_matrix(&kernel, &points);
        for i in 0..points.len() {
            k[(i, i)] += kernel.noise_jitter;
        }
        let chol = cholesky(&k, "surrogate kernel matrix")?;
        let values = DVector::from_vec(values);
        let weights = chol.solve(&values);
        let mahalanobis = values.dot(&weights);
        Ok(Self {
            points,
            values,
            kernel,
            dof,
            mode,
            chol,
            weights,
            mahalanobis,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn mode(&self) -> SurrogateMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_kernel(&self, kernel: KernelParams) -> Result<Self> {
        Self::new(self.points.clone(), self.values.as_slice().to_vec(), kernel, self.dof, self.mode)
    }

    pub fn posterior(&self, q: &[f64]) -> Result<Prediction> {
        if q.len() != self.kernel.dim() {
            return Err(Error::dim(format!(
                "query has {} coordinates, surrogate has {}",
                q.len(),
                self.kernel.dim()
            )));
        }
        let k21 = DVector::from_iterator(self.len(), self.points.iter().map(|p| kernel_eval(&self.kernel, q, p)));
        let mean = k21.dot(&self.weights);
        let mut v = k21;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        // K22 - K21 K11⁻¹ K12
        let reduced = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        let n = self.len() as f64;
        let (factor, dof) = match self.mode {
            SurrogateMode::StudentT => ((self.dof + self.mahalanobis) / (self.dof + n), self.dof + n),
            SurrogateMode::Gaussian => (1.0, f64::INFINITY),
        };
        Ok(Prediction {
            mean,
            sigma: (factor * reduced).max(SIGMA_FLOOR),
            dof,
        })
    }

    /// Log density of the observed values under the joint model.
    pub fn log_marginal(&self) -> f64 {
        let n = self.len() as f64;
        let log_det: f64 = 2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        match self.mode {
            SurrogateMode::Gaussian => {
                -0.5 * self.mahalanobis - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            }
            SurrogateMode::StudentT => {
                let v = self.dof;
                ln_gamma(0.5 * (v + n)) - ln_gamma(0.5 * v) - 0.5 * n * (v * std::f64::consts::PI).ln() - 0.5 * log_det
                    - 0.5 * (v + n) * (self.mahalanobis / v).ln_1p()
            }
        }
    }

    /// Maximize [`SurrogateState::log_marginal`] over log-lengthscales,
    /// log-signal-variance and log-noise with a few deterministic simplex
    /// starts. Keeps the current kernel unless a start improves on it.
    pub fn fit_hyperparams(&self, cfg: &FitConfig) -> Self {
        if cfg.budget == 0 || self.len() < 2 {
            return self.clone();
        }
        let d = self.kernel.dim();
        let ln = |b: (f64, f64)| (b.0.ln(), b.1.ln());
        let (l_lo, l_hi) = ln(cfg.lengthscale_bounds);
        let (s_lo, s_hi) = ln(cfg.signal_variance_bounds);
        let (n_lo, n_hi) = ln((cfg.noise_bounds.0.max(MIN_NOISE), cfg.noise_bounds.1));
        let mut lower = vec![l_lo; d];
        let mut upper = vec![l_hi; d];
        lower.extend([s_lo, n_lo]);
        upper.extend([s_hi, n_hi]);

        let decode = |x: &[f64]| KernelParams {
            lengthscales: x[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: x[d].exp(),
            smoothness: self.kernel.smoothness,
            noise_jitter: x[d + 1].exp(),
        };
        let objective = |x: &[f64]| match self.with_kernel(decode(x)) {
            Ok(s) => -s.log_marginal(),
            Err(_) => f64::INFINITY,
        };

        let current: Vec<f64> = self
            .kernel
            .lengthscales
            .iter()
            .map(|l| l.ln())
            .chain([self.kernel.signal_variance.ln(), self.kernel.noise_jitter.ln()])
            .zip(lower.iter().zip(&upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect();
        let mut starts = vec![current];
        for (ls, noise) in [(0.1f64, 1e-3f64), (0.3, 1e-2), (1.0, 1e-1)] {
            let mut s = vec![ls.ln().clamp(l_lo, l_hi); d];
            s.push(0.0f64.clamp(s_lo, s_hi));
            s.push(noise.ln().clamp(n_lo, n_hi));
            starts.push(s);
        }
        let simplex = SimplexConfig {
            max_evals: cfg.budget,
            tol: 1e-3,
            ..SimplexConfig::default()
        };
        let outcomes = cfg.exec.map(starts.len(), |i| {
            neldermead::minimize(objective, &starts[i], &lower, &upper, &simplex).ok()
        });

        let baseline = -self.log_marginal();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for r in outcomes.into_iter().flatten() {
            if r.f.is_finite() && best.as_ref().is_none_or(|(f, _)| r.f < *f) {
                best = Some((r.f, r.x));
            }
        }
        match best {
            Some((f, x)) if f < baseline => self.with_kernel(decode(&x)).unwrap_or_else(|_| self.clone()),
            Some(_) => self.clone(),
            None => {
                log::warn!("hyperparameter fit failed from every start; keeping previous kernel");
                self.clone()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    fn params(d: usize) -> KernelParams {
        KernelParams::new(vec![0.4; d], 1.3, Smoothness::Matern52, 1e-8).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let p = params(2);
        assert_eq!(kernel_eval(&p, &[0.2, 0.3], &[0.2, 0.3]), 1.3);
        let mut last = 1.3;
        for k in 1..40 {
            let v = kernel_eval(&p, &[0.0, 0.0], &[0.1 * k as f64, 0.0]);
            assert!(v < last && v > 0.0);
            last = v;
        }
        assert!(kernel_eval(&p, &[0.0, 0.0], &[100.0, 0.0]) < 1e-100);
        let m32 = KernelParams::new(vec![1.0], 1.0, Smoothness::Matern32, 1e-8).unwrap();
        let r: f64 = 0.7;
        let s = 3f64.sqrt() * r;
        assert!((kernel_eval(&m32, &[0.0], &[r]) - (1.0 + s) * (-s).exp()).abs() < 1e-15);
    }

    #[test]
    fn interpolates_observations() {
        let pts = vec![vec![0.1, 0.2], vec![0.6, 0.9], vec![0.8, 0.1]];
        let ys = vec![0.5, -1.0, 2.0];
        let kernel = KernelParams::new(vec![0.3, 0.3], 1.0, Smoothness::Matern52, 1e-10).unwrap();
        let s = SurrogateState::new(pts.clone(), ys.clone(), kernel, 5.0, SurrogateMode::StudentT).unwrap();
        for (p, y) in pts.iter().zip(&ys) {
            let pred = s.posterior(p).unwrap();
            assert!((pred.mean - y).abs() < 1e-8);
            assert!(pred.sigma < 1e-8);
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 5, 2);
        let ys: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let s = SurrogateState::new(pts, ys, params(2), 5.0, SurrogateMode::StudentT).unwrap();
        let pred = s.posterior(&[1e6, 1e6]).unwrap();
        assert_eq!(pred.mean, 0.0);
        let factor = (5.0 + s.mahalanobis) / (5.0 + 5.0);
        assert!((pred.sigma - factor * 1.3).abs() < 1e-12);
        assert_eq!(pred.dof, 10.0);
    }

    #[test]
    fn posterior_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..50 {
            let n = 3 + case % 4;
            let d = 1 + case % 3;
            let pts = random_points(&mut rng, n, d);
            let ys: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let kernel = KernelParams::new(
                (0..d).map(|_| 0.1 + 0.3 * rng.random::<f64>()).collect(),
                0.5 + rng.random::<f64>(),
                Smoothness::Matern52,
                1e-2,
            )
            .unwrap();
            let v = 3.0 + 5.0 * rng.random::<f64>();
            let s = SurrogateState::new(pts.clone(), ys.clone(), kernel.clone(), v, SurrogateMode::StudentT).unwrap();
            let q: Vec<f64> = (0..d).map(|_| rng.random()).collect();

            let mut k11 = DMatrix::from_fn(n, n, |i, j| kernel_eval(&kernel, &pts[i], &pts[j]));
            k11 += DMatrix::identity(n, n) * 1e-2;
            let inv = k11.try_inverse().unwrap();
            let k21 = DVector::from_fn(n, |i, _| kernel_eval(&kernel, &q, &pts[i]));
            let y = DVector::from_vec(ys);
            let beta = (y.transpose() * &inv * &y)[(0, 0)];
            let u = (k21.transpose() * &inv * &y)[(0, 0)];
            let reduced = kernel.signal_variance - (k21.transpose() * &inv * &k21)[(0, 0)];
            let sigma = (v + beta) / (v + n as f64) * reduced;

            let pred = s.posterior(&q).unwrap();
            assert!((pred.mean - u).abs() < 1e-10, "case {case}: {} vs {u}", pred.mean);
            assert!((pred.sigma - sigma).abs() < 1e-10, "case {case}: {} vs {sigma}", pred.sigma);
            assert_eq!(pred.dof, v + n as f64);
        }
    }

    #[test]
    fn student_and_gaussian_share_mean_and_scale_by_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 6, 2);
        let ys: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = SurrogateState::new(pts.clone(), ys.clone(), params(2), 4.0, SurrogateMode::StudentT).unwrap();
        let g = SurrogateState::new(pts, ys, params(2), 4.0, SurrogateMode::Gaussian).unwrap();
        let q = [0.45, 0.55];
        let (pt, pg) = (t.posterior(&q).unwrap(), g.posterior(&q).unwrap());
        assert_eq!(pt.mean, pg.mean);
        let factor = (4.0 + t.mahalanobis) / (4.0 + 6.0);
        assert!((pt.sigma - factor * pg.sigma).abs() <= 1e-14 * pt.sigma.max(1.0));
        assert_eq!(pg.dof, f64::INFINITY);
    }

    #[test]
    fn log_marginal_single_point() {
        let kernel = KernelParams::new(vec![1.0], 1.0 - 1e-10, Smoothness::Matern52, 1e-10).unwrap();
        let s = SurrogateState::new(vec![vec![0.0]], vec![0.0], kernel, 5.0, SurrogateMode::Gaussian).unwrap();
        assert!((s.log_marginal() + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_marginal_matches_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let n = 4;
            let pts = random_points(&mut rng, n, 2);
            let ys: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let kernel = KernelParams::new(vec![0.5, 0.3], 0.8, Smoothness::Matern32, 1e-2).unwrap();
            let mut k = DMatrix::from_fn(n, n, |i, j| kernel_eval(&kernel, &pts[i], &pts[j]));
            k += DMatrix::identity(n, n) * 1e-2;
            let det = k.determinant();
            let y = DVector::from_vec(ys.clone());
            let beta = (y.transpose() * k.clone().try_inverse().unwrap() * &y)[(0, 0)];
            let v: f64 = 5.0;
            let nf = n as f64;
            let pi = std::f64::consts::PI;
            let oracle = ln_gamma((v + nf) / 2.0) - ln_gamma(v / 2.0) - nf / 2.0 * (v * pi).ln() - 0.5 * det.ln()
                - (v + nf) / 2.0 * (1.0 + beta / v).ln();
            let s = SurrogateState::new(pts.clone(), ys.clone(), kernel.clone(), v, SurrogateMode::StudentT).unwrap();
            assert!((s.log_marginal() - oracle).abs() < 1e-10);
            let gauss = -0.5 * beta - 0.5 * det.ln() - nf / 2.0 * (2.0 * pi).ln();
            let g = SurrogateState::new(pts, ys, kernel, v, SurrogateMode::Gaussian).unwrap();
            assert!((g.log_marginal() - gauss).abs() < 1e-10);
        }
    }

    #[test]
    fn large_dof_log_marginal_matches_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let pts = random_points(&mut rng, 5, 2);
            let ys: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
            // the limit needs yᵀK⁻¹y small next to sqrt(dof), so keep K well conditioned
            let kernel = KernelParams::new(vec![0.1; 2], 1.0, Smoothness::Matern52, 0.2).unwrap();
            let t = SurrogateState::new(pts.clone(), ys.clone(), kernel.clone(), 1e6, SurrogateMode::StudentT).unwrap();
            let g = SurrogateState::new(pts, ys, kernel, 1e6, SurrogateMode::Gaussian).unwrap();
            assert!((t.log_marginal() - g.log_marginal()).abs() < 1e-4, "{} vs {}", t.log_marginal(), g.log_marginal());
        }
    }

    #[test]
    fn kernel_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let pts = random_points(&mut rng, 15, 3);
            let k = kernel_matrix(&params(3), &pts);
            assert!(k.symmetric_eigen().eigenvalues.min() >= -1e-8);
        }
    }

    #[test]
    fn rejects_invalid_state() {
        let p = params(1);
        assert!(SurrogateState::new(vec![], vec![], p.clone(), 5.0, SurrogateMode::StudentT).is_err());
        assert!(SurrogateState::new(vec![vec![0.0]], vec![1.0], p.clone(), 2.0, SurrogateMode::StudentT).is_err());
        assert!(SurrogateState::new(vec![vec![0.0, 1.0]], vec![1.0], p.clone(), 5.0, SurrogateMode::StudentT).is_err());
        assert!(KernelParams::new(vec![0.0], 1.0, Smoothness::Matern52, 1e-6).is_err());
        assert!(KernelParams::new(vec![1.0], 1.0, Smoothness::Matern52, 0.0).is_err());
    }

    #[test]
    fn fit_with_zero_budget_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 8, 2);
        let ys: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = SurrogateState::new(pts, ys, params(2), 5.0, SurrogateMode::StudentT).unwrap();
        let cfg = FitConfig {
            budget: 0,
            ..FitConfig::default()
        };
        assert_eq!(s.fit_hyperparams(&cfg).kernel(), s.kernel());
    }

    #[test]
    fn fit_recovers_generating_lengthscale() {
        // y ~ N(0, K) from a known kernel on 60 points in 1-D, with the
        // lengthscale short enough for the unit interval to span many of them
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(80 + seed);
            let truth = KernelParams::new(vec![0.08], 1.0, Smoothness::Matern52, 1e-4).unwrap();
            let pts = random_points(&mut rng, 60, 1);
            let mut k = kernel_matrix(&truth, &pts);
            k += DMatrix::identity(60, 60) * 1e-4;
            let l = k.cholesky().unwrap().l();
            let white = DVector::from_fn(60, |_, _| StandardNormal.sample(&mut rng));
            let ys = (l * white).as_slice().to_vec();
            let start = KernelParams::new(vec![1.0], 0.5, Smoothness::Matern52, 1e-2).unwrap();
            let s = SurrogateState::new(pts, ys, start, 5.0, SurrogateMode::Gaussian).unwrap();
            let fitted = s.fit_hyperparams(&FitConfig::default());
            let ell = fitted.kernel().lengthscales[0];
            assert!(ell > 0.04 && ell < 0.16, "seed {seed}: lengthscale {ell}");
            assert!(fitted.log_marginal() >= s.log_marginal() - 1e-12);
        }
    }

    #[test]
    fn fit_on_constant_data_improves() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let s = SurrogateState::new(pts, vec![0.3; 10], params(1), 5.0, SurrogateMode::StudentT).unwrap();
        let fitted = s.fit_hyperparams(&FitConfig::default());
        assert!(fitted.log_marginal() >= s.log_marginal() - 1e-12);
        assert!(fitted.kernel().signal_variance <= s.kernel().signal_variance);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_symmetry(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let p = params(3);
            prop_assert!((kernel_eval(&p, &a, &b) - kernel_eval(&p, &b, &a)).abs() <= 1e-15);
        }

        #[test]
        fn scaling_observations_widens_prediction(seed in any::<u64>(), c in 1.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 5, 2);
            let ys: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
            let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
            let a = SurrogateState::new(pts.clone(), ys, params(2), 5.0, SurrogateMode::StudentT).unwrap();
            let b = SurrogateState::new(pts, scaled, params(2), 5.0, SurrogateMode::StudentT).unwrap();
            prop_assert!((b.mahalanobis - c * c * a.mahalanobis).abs() <= 1e-9 * b.mahalanobis.max(1.0));
            let q = [2.0, -1.0];
            prop_assert!(b.posterior(&q).unwrap().sigma > a.posterior(&q).unwrap().sigma);
        }
    }
}
