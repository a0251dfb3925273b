use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Count, mean and unbiased variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        // Offset by the first value so constant samples get exactly zero spread.
        let x0 = xs.first().copied().unwrap_or(0.0);
        let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { n, mean, var }
    }
}

/// Standardized mean difference `(mean(a) − mean(b)) / s_pooled`. Positive
/// when `a` (the slice) has the higher loss. Zero pooled spread gives ±∞ for
/// different means and 0 for equal ones.
pub fn effect_size(slice_losses: &[f64], complement_losses: &[f64]) -> Result<f64> {
    if slice_losses.is_empty() || complement_losses.is_empty() {
        return Err(Error::invalid("effect size needs two non-empty samples"));
    }
    Ok(effect_size_from(
        Summary::of(slice_losses),
        Summary::of(complement_losses),
    ))
}

pub fn effect_size_from(a: Summary, b: Summary) -> f64 {
    let diff = a.mean - b.mean;
    let dof = (a.n + b.n).saturating_sub(2);
    let pooled = if dof == 0 {
        0.0
    } else {
        (((a.n - 1) as f64 * a.var + (b.n - 1) as f64 * b.var) / dof as f64).sqrt()
    };
    if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// The slice mean is larger.
    Greater,
}

/// Welch's unequal-variance t-test, two-sided.
pub fn significance_test(slice_losses: &[f64], complement_losses: &[f64]) -> Result<f64> {
    if slice_losses.len() < 2 || complement_losses.len() < 2 {
        return Err(Error::invalid(
            "significance test needs at least two values per sample",
        ));
    }
    Ok(welch_p_value(
        Summary::of(slice_losses),
        Summary::of(complement_losses),
        Alternative::TwoSided,
    ))
}

pub fn welch_p_value(a: Summary, b: Summary, alt: Alternative) -> f64 {
    let (va, vb) = (a.var / a.n as f64, b.var / b.n as f64);
    let se2 = va + vb;
    let diff = a.mean - b.mean;
    if se2 == 0.0 {
        return match alt {
            _ if diff == 0.0 => 1.0,
            Alternative::Greater if diff < 0.0 => 1.0,
            _ => 0.0,
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    match alt {
        Alternative::TwoSided => (2.0 * student_t_sf(t.abs(), df)).min(1.0),
        Alternative::Greater => student_t_sf(t, df),
    }
}

/// P(T ≤ t) for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    1.0 - student_t_sf(t, df)
}

/// P(T > t).
fn student_t_sf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const G: f64 = 7.0;
    const C: [f64; 9] = [
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
    if x < 0.5 {
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
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
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_size_edges() {
        assert_eq!(effect_size(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), 0.0);
        assert_eq!(effect_size(&[1.0; 3], &[0.0; 7]).unwrap(), f64::INFINITY);
        assert_eq!(
            effect_size(&[0.0; 3], &[1.0; 7]).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(effect_size(&[0.5; 3], &[0.5; 7]).unwrap(), 0.0);
        assert!(effect_size(&[], &[1.0]).is_err());
    }

    #[test]
    fn constant_samples_have_no_spread() {
        let s = Summary::of(&[1e-7; 37]);
        assert_eq!((s.mean, s.var), (1e-7, 0.0));
        assert_eq!(effect_size(&[0.1; 13], &[0.1; 1000]).unwrap(), 0.0);
    }

    #[test]
    fn welch_edges() {
        let xs = [0.1, 0.5, 0.9, 0.3];
        assert_eq!(significance_test(&xs, &xs).unwrap(), 1.0);
        assert!(significance_test(&[1.0], &xs).is_err());
    }

    #[test]
    fn t_table_value() {
        assert!((student_t_cdf(2.086, 20.0) - 0.975).abs() < 1e-3);
        assert!((student_t_cdf(0.0, 5.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ln_gamma_factorials() {
        for (n, f) in [(1.0, 1.0), (2.0, 1.0), (5.0, 24.0), (10.0, 362_880.0)] {
            assert!((ln_gamma(n) - f64::ln(f)).abs() < 1e-12);
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }
}
