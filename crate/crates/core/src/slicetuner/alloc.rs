use serde::{Deserialize, Serialize};

use super::curve::LearningCurve;
use crate::error::{Error, Result};

/// Current state of one slice in an acquisition problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceState {
    /// Current number of examples, at least 1.
    pub size: f64,
    pub curve: LearningCurve,
    /// Cost of acquiring one example.
    pub cost: f64,
}

/// Minimize `Σ L_i(d_i) + λ Σ max(0, L_i(d_i)/A − 1)` over `d ≥ 0` with
/// `Σ cost_i d_i = budget`, where `L_i(d) = b_i (size_i + d)^(−a_i)` and `A`
/// is the mean current loss (frozen for the solve).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionProblem {
    pub slices: Vec<SliceState>,
    pub budget: f64,
    pub lambda: f64,
}

/// Real-valued amounts to acquire per slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub amounts: Vec<f64>,
}

impl AcquisitionProblem {
    pub fn validate(&self) -> Result<()> {
        if self.slices.is_empty() {
            return Err(Error::invalid("acquisition problem has no slices"));
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(Error::invalid("budget must be finite and >= 0"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        for (i, s) in self.slices.iter().enumerate() {
            LearningCurve::new(s.curve.b, s.curve.a)?;
            if !(s.size >= 1.0 && s.size.is_finite()) {
                return Err(Error::invalid(format!("slice {i} size must be >= 1")));
            }
            if !(s.cost > 0.0 && s.cost.is_finite()) {
                return Err(Error::invalid(format!("slice {i} cost must be > 0")));
            }
        }
        Ok(())
    }

    /// Average current estimated loss `A`.
    pub fn average_loss(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.curve.loss(s.size))
            .sum::<f64>()
            / self.slices.len() as f64
    }

    pub fn objective(&self, d: &[f64]) -> f64 {
        let avg = self.average_loss();
        self.slices
            .iter()
            .zip(d)
            .map(|(s, &di)| {
                let l = s.curve.loss(s.size + di);
                l + self.lambda * (l / avg - 1.0).max(0.0)
            })
            .sum()
    }

    /// Total estimated loss (the first objective term).
    pub fn total_loss(&self, d: &[f64]) -> f64 {
        self.slices
            .iter()
            .zip(d)
            .map(|(s, &di)| s.curve.loss(s.size + di))
            .sum()
    }

    fn subgradient(&self, d: &[f64], avg: f64) -> Vec<f64> {
        self.slices
            .iter()
            .zip(d)
            .map(|(s, &di)| {
                let n = s.size + di;
                let g = s.curve.slope(n);
                if s.curve.loss(n) > avg {
                    g * (1.0 + self.lambda / avg)
                } else {
                    g
                }
            })
            .collect()
    }

    fn costs(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.cost).collect()
    }
}

/// Euclidean projection onto `{d ≥ 0, Σ c_i d_i = budget}`.
pub fn project_scaled_simplex(v: &[f64], c: &[f64], budget: f64) -> Vec<f64> {
    // d_i = max(0, v_i − μ c_i) with μ chosen so the budget binds.
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| (v[j] / c[j]).total_cmp(&(v[i] / c[i])));
    let (mut scv, mut scc) = (0.0, 0.0);
    let mut mu = 0.0;
    for (k, &i) in order.iter().enumerate() {
        scv += c[i] * v[i];
        scc += c[i] * c[i];
        let candidate = (scv - budget) / scc;
        let next_break = order.get(k + 1).map_or(f64::NEG_INFINITY, |&j| v[j] / c[j]);
        if candidate >= next_break {
            mu = candidate;
            break;
        }
    }
    v.iter()
        .zip(c)
        .map(|(&vi, &ci)| (vi - mu * ci).max(0.0))
        .collect()
}

const ITERATIONS: usize = 20_000;

/// Projected subgradient descent on the scaled simplex with normalized,
/// diminishing steps (`η_k ∝ (k+1)^-0.75`), returning the best iterate.
///
/// The objective is convex for `a_i ≥ 0` with `A` held fixed, so the best
/// iterate approaches the global optimum.
pub fn optimize_allocation(p: &AcquisitionProblem) -> Result<Allocation> {
    p.validate()?;
    let n = p.slices.len();
    let c = p.costs();
    if p.budget == 0.0 {
        return Ok(Allocation {
            amounts: vec![0.0; n],
        });
    }
    let csum: f64 = c.iter().sum();
    let c_norm2: f64 = c.iter().map(|x| x * x).sum();
    let mut d = vec![p.budget / csum; n];
    if n == 1 {
        return Ok(Allocation {
            amounts: vec![p.budget / c[0]],
        });
    }
    let avg = p.average_loss();
    let radius = p.budget / c.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = d.clone();
    let mut best_f = p.objective(&d);
    for k in 0..ITERATIONS {
        let g = p.subgradient(&d, avg);
        // Drop the component along the constraint normal.
        let along = g.iter().zip(&c).map(|(gi, ci)| gi * ci).sum::<f64>() / c_norm2;
        let tangent: Vec<f64> = g.iter().zip(&c).map(|(gi, ci)| gi - along * ci).collect();
        let norm = tangent.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.5 * radius / ((k + 1) as f64).powf(0.75);
        let v: Vec<f64> = d
            .iter()
            .zip(&tangent)
            .map(|(di, ti)| di - step * ti / norm)
            .collect();
        d = project_scaled_simplex(&v, &c, p.budget);
        let f = p.objective(&d);
        if f < best_f {
            best_f = f;
            best.clone_from(&d);
        }
    }
    Ok(Allocation { amounts: best })
}

/// Largest slice size over smallest.
pub fn imbalance_ratio(sizes: &[f64]) -> Result<f64> {
    if sizes.is_empty() {
        return Err(Error::invalid("no slice sizes"));
    }
    if sizes.iter().any(|&s| !(s >= 1.0)) {
        return Err(Error::invalid("slice sizes must be >= 1"));
    }
    let max = sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

/// The same amount for every slice.
pub fn baseline_uniform(sizes: &[f64], budget: f64, costs: &[f64]) -> Allocation {
    let csum: f64 = costs.iter().sum();
    let each = if csum > 0.0 { budget / csum } else { 0.0 };
    Allocation {
        amounts: vec![each; sizes.len()],
    }
}

/// Raises the smallest slices to a common level `L`, spending exactly the
/// budget: `d_i = max(0, L − size_i)`.
pub fn baseline_waterfilling(sizes: &[f64], budget: f64, costs: &[f64]) -> Allocation {
    Allocation {
        amounts: water_level(sizes, budget, costs)
            .map(|level| sizes.iter().map(|&s| (level - s).max(0.0)).collect())
            .unwrap_or_else(|| vec![0.0; sizes.len()]),
    }
}

/// Water level for [`baseline_waterfilling`]; `None` for no slices.
pub fn water_level(sizes: &[f64], budget: f64, costs: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&i, &j| sizes[i].total_cmp(&sizes[j]));
    let (mut cs, mut csz) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        cs += costs[i];
        csz += costs[i] * sizes[i];
        let level = (budget + csz) / cs;
        match order.get(k + 1) {
            Some(&j) if level > sizes[j] => continue,
            _ => return Some(level),
        }
    }
    None
}

/// Rounds a real allocation to whole examples without exceeding the budget:
/// floors first, then one extra example per slice in order of largest
/// remainder while affordable, then the cheapest slice absorbs what is left.
pub fn integerize(alloc: &Allocation, costs: &[f64], budget: f64) -> Vec<usize> {
    let mut counts: Vec<usize> = alloc
        .amounts
        .iter()
        .map(|a| a.max(0.0).floor() as usize)
        .collect();
    let spent = |counts: &[usize]| {
        counts
            .iter()
            .zip(costs)
            .map(|(&k, c)| k as f64 * c)
            .sum::<f64>()
    };
    // Allow for rounding noise in the real-valued solution.
    let tol = 1e-9 * budget.max(1.0);
    while spent(&counts) > budget + tol {
        let i = (0..counts.len())
            .filter(|&i| counts[i] > 0)
            .max_by(|&i, &j| costs[i].total_cmp(&costs[j]))
            .unwrap();
        counts[i] -= 1;
    }
    let mut left = budget - spent(&counts);
    let mut order: Vec<usize> = (0..counts.len()).collect();
    let rem = |i: usize| alloc.amounts[i].max(0.0) - alloc.amounts[i].max(0.0).floor();
    order.sort_by(|&i, &j| rem(j).total_cmp(&rem(i)).then(i.cmp(&j)));
    for &i in &order {
        if rem(i) > 0.0 && costs[i] <= left + tol {
            counts[i] += 1;
            left -= costs[i];
        }
    }
    if let Some(cheapest) =
        (0..costs.len()).min_by(|&i, &j| costs[i].total_cmp(&costs[j]).then(i.cmp(&j)))
    {
        while costs[cheapest] <= left + tol {
            counts[cheapest] += 1;
            left -= costs[cheapest];
        }
    }
    counts
}
