//! Special functions: log-gamma, regularized incomplete gamma and beta, and
//! the chi-square, Student-t and normal distributions built on them.
//!
//! Incomplete gamma uses the power series below `a + 1` and a Lentz continued
//! fraction above it; incomplete beta uses the continued fraction with the
//! usual symmetry swap.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(sum * gamma_prefactor(a, x));
        }
    }
    Err(Error::numerical(format!(
        "incomplete gamma series did not converge (a={a}, x={x})"
    )))
}

fn gamma_continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(gamma_prefactor(a, x) * h);
        }
    }
    Err(Error::numerical(format!(
        "incomplete gamma continued fraction did not converge (a={a}, x={x})"
    )))
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || x < 0.0 || !x.is_finite() {
        return Err(Error::domain(format!("gamma_p undefined for a={a}, x={x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        Ok(1.0 - gamma_continued_fraction(a, x)?)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || x < 0.0 || !x.is_finite() {
        return Err(Error::domain(format!("gamma_q undefined for a={a}, x={x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_series(a, x)?)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::numerical(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!(
            "beta_inc undefined for a={a}, b={b}, x={x}"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_continued_fraction(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_continued_fraction(b, a, 1.0 - x)? / b)
    }
}

/// Chi-square distribution function with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    gamma_p(0.5 * k, 0.5 * x)
}

/// Chi-square quantile by bisection on the distribution function.
pub fn chi2_quantile(p: f64, k: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(k > 0.0) {
        return Err(Error::domain(format!(
            "chi-square quantile undefined for p={p}, k={k}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = k.max(1.0);
    let mut grow = 0;
    while chi2_cdf(hi, k)? < p {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 1100 {
            return Err(Error::numerical("chi-square quantile bracket did not close"));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, k)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::numerical(format!(
        "chi-square quantile bisection did not converge (p={p}, k={k})"
    )))
}

/// Standard Student-t density.
pub fn student_t_pdf(t: f64, dof: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln();
    (ln_norm - 0.5 * (dof + 1.0) * (t * t / dof).ln_1p()).exp()
}

/// Standard Student-t distribution function.
pub fn student_t_cdf(t: f64, dof: f64) -> Result<f64> {
    if !(dof > 0.0) {
        return Err(Error::domain(format!("Student-t needs dof > 0, got {dof}")));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let x = dof / (dof + t * t);
    let tail = 0.5 * beta_inc(0.5 * dof, 0.5, x)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    // Q(1/2, x^2) converges for every finite argument
    let q = gamma_q(0.5, x * x).expect("gamma_q(0.5, x^2) is total on finite x");
    if x > 0.0 {
        q
    } else {
        2.0 - q
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}
