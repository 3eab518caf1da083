//! Oracles shared by the integration tests. Each one is written from the
//! textbook formula and avoids calling into the crate.

#![allow(dead_code)]

use statrs::distribution::{Continuous, Normal, StudentsT};

/// Matérn 5/2 covariance with ARD lengthscales.
pub fn matern52(a: &[f64], b: &[f64], ls: &[f64], var: f64) -> f64 {
    let r = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    let s = 5f64.sqrt() * r;
    var * (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `E[max(0, best - Y)]`, `Y = u + s·T`, by direct quadrature of
/// `s ∫_{-∞}^{z} (z - t) p(t) dt` after the change of variable
/// `t = z - (1 - x)/x`, `x ∈ (0, 1]`.
pub fn ei_quadrature(best: f64, u: f64, s: f64, dof: f64) -> f64 {
    let z = (best - u) / s;
    let pdf: Box<dyn Fn(f64) -> f64> = if dof.is_infinite() {
        let n = Normal::new(0.0, 1.0).unwrap();
        Box::new(move |t| n.pdf(t))
    } else {
        let st = StudentsT::new(0.0, 1.0, dof).unwrap();
        Box::new(move |t| st.pdf(t))
    };
    let g = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let gap = (1.0 - x) / x;
        gap * pdf(z - gap) / (x * x)
    };
    s * integrate(g, 0.0, 1.0, 1e-14)
}
