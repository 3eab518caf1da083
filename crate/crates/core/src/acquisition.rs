//! Expected improvement under Student-t and Gaussian predictive
//! distributions, and the DIRECT global optimizer used to maximize it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_pdf, student_t_cdf, student_t_pdf};

/// Axis-aligned box of admissible parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let s = Self { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::dim(format!(
                "search bounds have lengths {} and {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::domain(format!(
                    "search bound {i} needs finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dim()
            && q
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| x >= l && x <= u)
    }

    /// Map unit-cube coordinates to the box, clamped so rounding cannot
    /// escape it.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| (l + t * (u - l)).clamp(*l, *u))
            .collect()
    }

    pub fn to_unit(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| ((x - l) / (u - l)).clamp(0.0, 1.0))
            .collect()
    }
}

/// `E[max(0, best - Y)]` for `Y = u + sigma·T`, where `T` is standard
/// Student-t with `dof` degrees of freedom, or standard normal when `dof` is
/// infinite. `sigma` is the scale, not its square.
pub fn expected_improvement(best: f64, u: f64, sigma: f64, dof: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("expected improvement needs sigma > 0, got {sigma}")));
    }
    let gap = best - u;
    let z = gap / sigma;
    let ei = if dof == f64::INFINITY {
        gap * normal_cdf(z) + sigma * normal_pdf(z)
    } else {
        if !(dof > 2.0) {
            return Err(Error::domain(format!(
                "expected improvement needs dof > 2 or infinite, got {dof}"
            )));
        }
        gap * student_t_cdf(z, dof)? + dof / (dof - 1.0) * (1.0 + z * z / dof) * sigma * student_t_pdf(z, dof)
    };
    Ok(ei.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    pub max_evals: usize,
    pub max_iters: usize,
    /// Required relative improvement over the incumbent for a rectangle to be
    /// potentially optimal.
    pub epsilon: f64,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            max_iters: 1000,
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
}

struct Rect {
    center: Vec<f64>,
    /// Side length along axis `i` is `3^-levels[i]`.
    levels: Vec<u32>,
    /// Negated objective at the center; DIRECT minimizes internally.
    value: f64,
    size: f64,
}

fn half_diagonal(levels: &[u32]) -> f64 {
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    let sum: f64 = sorted.iter().map(|&l| 9f64.powi(-(l as i32))).sum();
    0.5 * sum.sqrt()
}

/// Indices of potentially optimal rectangles: group minima on the lower-right
/// convex hull of (size, value) that also promise an `epsilon` relative
/// improvement.
fn potentially_optimal(rects: &[Rect], f_min: f64, epsilon: f64) -> Vec<usize> {
    // size bits -> lowest value in group, lowest index on ties
    let mut groups: BTreeMap<u64, usize> = BTreeMap::new();
    for (i, r) in rects.iter().enumerate() {
        groups
            .entry(r.size.to_bits())
            .and_modify(|j| {
                if r.value < rects[*j].value {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    // ascending size (positive floats order like their bit patterns)
    let cands: Vec<usize> = groups.into_values().collect();
    let mut chosen = Vec::new();
    for (a, &j) in cands.iter().enumerate() {
        let (dj, fj) = (rects[j].size, rects[j].value);
        let mut k_low = f64::NEG_INFINITY;
        let mut k_high = f64::INFINITY;
        for (b, &i) in cands.iter().enumerate() {
            let (di, fi) = (rects[i].size, rects[i].value);
            if b < a {
                k_low = k_low.max((fj - fi) / (dj - di));
            } else if b > a {
                k_high = k_high.min((fi - fj) / (di - dj));
            }
        }
        if k_low > k_high {
            continue;
        }
        let ok = if k_high.is_finite() {
            fj - k_high * dj <= f_min - epsilon * f_min.abs()
        } else {
            true
        };
        if ok {
            chosen.push(j);
        }
    }
    // divide larger rectangles first
    chosen.reverse();
    chosen
}

/// Maximize `f` over `space` with the DIviding RECTangles algorithm.
///
/// The search runs on the unit cube; `f` receives box coordinates. Returns
/// the best sampled point, which is always a rectangle center inside the box.
pub fn direct_maximize<F>(mut f: F, space: &SearchSpace, cfg: &DirectConfig) -> Result<DirectResult>
where
    F: FnMut(&[f64]) -> f64,
{
    space.validate()?;
    if cfg.max_evals == 0 || cfg.max_iters == 0 {
        return Err(Error::Config("DIRECT needs positive evaluation and iteration budgets".into()));
    }
    let d = space.dim();
    let mut evals = 0usize;
    let mut sample = |unit: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let x = space.from_unit(unit);
        let v = f(&x);
        if v.is_nan() {
            return Err(Error::numerical(format!("objective returned NaN at {x:?}")));
        }
        Ok(-v)
    };

    let center = vec![0.5; d];
    let levels = vec![0u32; d];
    let value = sample(&center, &mut evals)?;
    let mut rects = vec![Rect {
        size: half_diagonal(&levels),
        center,
        levels,
        value,
    }];
    let mut best = 0usize;
    let mut iterations = 0;

    'outer: while iterations < cfg.max_iters && evals < cfg.max_evals {
        iterations += 1;
        let f_min = rects[best].value;
        let selected = potentially_optimal(&rects, f_min, cfg.epsilon);
        let mut divided = false;
        for j in selected {
            let min_level = *rects[j].levels.iter().min().expect("d > 0");
            let axes: Vec<usize> = (0..d).filter(|&i| rects[j].levels[i] == min_level).collect();
            if evals + 2 * axes.len() > cfg.max_evals {
                break 'outer;
            }
            let delta = 3f64.powi(-(min_level as i32)) / 3.0;
            let mut probes = Vec::with_capacity(axes.len());
            for &i in &axes {
                let mut lo = rects[j].center.clone();
                lo[i] -= delta;
                let mut hi = rects[j].center.clone();
                hi[i] += delta;
                let f_lo = sample(&lo, &mut evals)?;
                let f_hi = sample(&hi, &mut evals)?;
                probes.push((i, f_lo.min(f_hi), (lo, f_lo), (hi, f_hi)));
            }
            probes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            for (i, _, (lo, f_lo), (hi, f_hi)) in probes {
                rects[j].levels[i] += 1;
                let levels = rects[j].levels.clone();
                let size = half_diagonal(&levels);
                for (c, v) in [(lo, f_lo), (hi, f_hi)] {
                    rects.push(Rect {
                        center: c,
                        levels: levels.clone(),
                        value: v,
                        size,
                    });
                    if v < rects[best].value {
                        best = rects.len() - 1;
                    }
                }
            }
            rects[j].size = half_diagonal(&rects[j].levels);
            divided = true;
        }
        if !divided {
            break;
        }
    }

    Ok(DirectResult {
        x: space.from_unit(&rects[best].center),
        f: -rects[best].value,
        evals,
        iterations,
    })
}
