use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicted loss `b * n^(-a)` after training on `n` examples of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub b: f64,
    pub a: f64,
}

impl LearningCurve {
    pub fn new(b: f64, a: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) || !(a >= 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!(
                "learning curve needs b > 0 and a >= 0, got b={b}, a={a}"
            )));
        }
        Ok(Self { b, a })
    }

    pub fn loss(&self, n: f64) -> f64 {
        self.b * n.powf(-self.a)
    }

    /// d loss / d n.
    pub fn slope(&self, n: f64) -> f64 {
        -self.a * self.b * n.powf(-self.a - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub curve: LearningCurve,
    /// Root-mean-square residual in log-loss space.
    pub residual: f64,
}

/// Least squares on `(ln n, ln loss)`, with the exponent projected to `a >= 0`
/// (the intercept is then refit as the mean log loss).
pub fn fit_learning_curve(points: &[(f64, f64)], min_points: usize) -> Result<CurveFit> {
    if let Some(&(n, l)) = points
        .iter()
        .find(|&&(n, l)| !(n >= 1.0) || !(l > 0.0) || !l.is_finite())
    {
        return Err(Error::invalid(format!(
            "learning point ({n}, {l}) needs n >= 1 and loss > 0"
        )));
    }
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < min_points.max(2) {
        return Err(Error::invalid(format!(
            "need at least {} distinct sizes, got {}",
            min_points.max(2),
            sizes.len()
        )));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let (a, ln_b) = if slope < 0.0 {
        (-slope, my - slope * mx)
    } else {
        (0.0, my)
    };
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (ln_b - a * x)).powi(2))
        .sum();
    Ok(CurveFit {
        curve: LearningCurve::new(ln_b.exp(), a)?,
        residual: (rss / m).sqrt(),
    })
}
