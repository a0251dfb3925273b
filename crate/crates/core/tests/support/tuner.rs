use raikit::slicetuner::*;

pub fn problem(
    sizes: &[f64],
    curves: &[(f64, f64)],
    costs: &[f64],
    budget: f64,
    lambda: f64,
) -> AcquisitionProblem {
    AcquisitionProblem {
        slices: sizes
            .iter()
            .zip(curves)
            .zip(costs)
            .map(|((&size, &(b, a)), &cost)| SliceState {
                size,
                curve: LearningCurve { b, a },
                cost,
            })
            .collect(),
        budget,
        lambda,
    }
}

pub fn spent(p: &AcquisitionProblem, d: &[f64]) -> f64 {
    p.slices.iter().zip(d).map(|(s, x)| s.cost * x).sum()
}

/// Minimum objective over a grid on the budget simplex.
pub fn grid_min(p: &AcquisitionProblem, steps: usize) -> f64 {
    let c: Vec<f64> = p.slices.iter().map(|s| s.cost).collect();
    let mut best = f64::INFINITY;
    match c.len() {
        2 => {
            for i in 0..=steps {
                let d0 = p.budget / c[0] * i as f64 / steps as f64;
                let d1 = (p.budget - c[0] * d0) / c[1];
                best = best.min(p.objective(&[d0, d1.max(0.0)]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let f0 = i as f64 / steps as f64;
                    let f1 = j as f64 / steps as f64;
                    let f2 = (1.0 - f0 - f1).max(0.0);
                    let d = [
                        p.budget * f0 / c[0],
                        p.budget * f1 / c[1],
                        p.budget * f2 / c[2],
                    ];
                    best = best.min(p.objective(&d));
                }
            }
        }
        _ => unreachable!(),
    }
    best
}
