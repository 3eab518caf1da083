//! Downhill simplex minimization inside a box.
//!
//! Candidate vertices are clamped to the box, so every point handed to the
//! objective is feasible. Non-finite objective values rank worst.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Initial simplex edge along each axis, as a fraction of the box width.
    pub initial_step: f64,
    /// Stop once every vertex lies within this distance of the best one.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.1,
            tol: 1e-4,
            max_evals: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// `c + γ (x_r - c)`, written as `x_r + (γ - 1)(x_r - c)` so that `γ = 1`
/// returns `x_r` bit for bit.
pub fn expansion_point(centroid: &[f64], reflected: &[f64], gamma: f64) -> Vec<f64> {
    centroid
        .iter()
        .zip(reflected)
        .map(|(c, r)| r + (gamma - 1.0) * (r - c))
        .collect()
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*lo, *hi);
    }
}

fn rank(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Minimize `f` over `[lower, upper]` starting from `start`.
pub fn minimize<F>(mut f: F, start: &[f64], lower: &[f64], upper: &[f64], cfg: &SimplexConfig) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    if n == 0 || lower.len() != n || upper.len() != n {
        return Err(Error::dim("simplex start and bounds must share a non-zero length"));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::domain("simplex bounds need lower < upper"));
    }
    if start.iter().zip(lower.iter().zip(upper)).any(|(x, (l, u))| !(x >= l && x <= u)) {
        return Err(Error::domain("simplex start lies outside the bounds"));
    }
    if cfg.max_evals == 0 {
        return Err(Error::Config("simplex needs an evaluation budget".into()));
    }

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        rank(f(x))
    };

    let mut verts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        let step = cfg.initial_step * (upper[i] - lower[i]);
        v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
        clamp(&mut v, lower, upper);
        verts.push(v);
    }
    let mut vals = Vec::with_capacity(n + 1);
    for v in &verts {
        if evals >= cfg.max_evals {
            break;
        }
        vals.push(eval(v, &mut evals));
    }
    if vals.len() < verts.len() {
        verts.truncate(vals.len());
        let best = argmin(&vals);
        return Ok(SimplexResult {
            x: verts[best].clone(),
            f: vals[best],
            evals,
            converged: false,
        });
    }

    let mut converged = false;
    loop {
        // stable order: ties keep the earlier vertex first
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        verts = order.iter().map(|&i| verts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = verts[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&verts[0])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter < cfg.tol {
            converged = true;
            break;
        }
        if evals >= cfg.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &verts[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = verts[n].clone();
        let mut reflected: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + cfg.reflection * (c - w))
            .collect();
        clamp(&mut reflected, lower, upper);
        let fr = eval(&reflected, &mut evals);

        if fr < vals[0] {
            let mut expanded = expansion_point(&centroid, &reflected, cfg.expansion);
            clamp(&mut expanded, lower, upper);
            if expanded != reflected && evals < cfg.max_evals {
                let fe = eval(&expanded, &mut evals);
                if fe < fr {
                    verts[n] = expanded;
                    vals[n] = fe;
                    continue;
                }
            }
            verts[n] = reflected;
            vals[n] = fr;
            continue;
        }
        if fr < vals[n - 1] {
            verts[n] = reflected;
            vals[n] = fr;
            continue;
        }
        if evals >= cfg.max_evals {
            break;
        }
        let (toward, f_toward) = if fr < vals[n] { (&reflected, fr) } else { (&worst, vals[n]) };
        let mut contracted: Vec<f64> = centroid
            .iter()
            .zip(toward)
            .map(|(c, t)| c + cfg.contraction * (t - c))
            .collect();
        clamp(&mut contracted, lower, upper);
        let fc = eval(&contracted, &mut evals);
        if fc < f_toward {
            verts[n] = contracted;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            if evals >= cfg.max_evals {
                break;
            }
            let best = verts[0].clone();
            let v = &mut verts[i];
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + cfg.shrink * (*x - b);
            }
            clamp(v, lower, upper);
            vals[i] = eval(v, &mut evals);
        }
    }

    let best = argmin(&vals);
    Ok(SimplexResult {
        x: verts[best].clone(),
        f: vals[best],
        evals,
        converged,
    })
}

fn argmin(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    best
}
