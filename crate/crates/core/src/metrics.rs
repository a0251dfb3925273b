//! Fairness and accuracy measures over hard predictions and probabilities.
//!
//! All group measures assume a binary sensitive attribute; index 0 of the
//! schema's group list plays the role of `Z=0`.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

fn require_two_groups(d: &Dataset) -> Result<()> {
    if d.n_groups() != 2 {
        return Err(Error::invalid(format!(
            "binary sensitive attribute required, found {} groups",
            d.n_groups()
        )));
    }
    Ok(())
}

/// P(Ŷ=1 | Z=z), unweighted.
pub fn positive_rate(preds: &[u8], d: &Dataset, z: usize) -> Result<f64> {
    check_len(d.len(), preds.len())?;
    let (mut n, mut pos) = (0usize, 0usize);
    for (e, &p) in d.examples().iter().zip(preds) {
        if e.group == z {
            n += 1;
            pos += usize::from(p == 1);
        }
    }
    if n == 0 {
        return Err(Error::invalid(format!(
            "group `{}` is empty",
            d.group_name(z)
        )));
    }
    Ok(pos as f64 / n as f64)
}

/// DP as the smaller of the two positive-rate ratios; 1 is perfectly fair.
///
/// Both rates zero counts as no disparity (1); exactly one zero gives 0.
pub fn demographic_parity(preds: &[u8], d: &Dataset) -> Result<f64> {
    require_two_groups(d)?;
    let r0 = positive_rate(preds, d, 0)?;
    let r1 = positive_rate(preds, d, 1)?;
    Ok(dp_from_rates(r0, r1))
}

pub fn dp_from_rates(r0: f64, r1: f64) -> f64 {
    match (r0 == 0.0, r1 == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (r0 / r1).min(r1 / r0),
    }
}

/// P(Ŷ=1 | Z=z, Y=y) for all four cells, indexed `[z][y]`.
pub fn conditional_positive_rates(preds: &[u8], d: &Dataset) -> Result<[[f64; 2]; 2]> {
    require_two_groups(d)?;
    check_len(d.len(), preds.len())?;
    let mut n = [[0usize; 2]; 2];
    let mut pos = [[0usize; 2]; 2];
    for (e, &p) in d.examples().iter().zip(preds) {
        let (z, y) = (e.group, e.label as usize);
        n[z][y] += 1;
        pos[z][y] += usize::from(p == 1);
    }
    let mut out = [[0.0; 2]; 2];
    for z in 0..2 {
        for y in 0..2 {
            if n[z][y] == 0 {
                return Err(Error::EmptyCell {
                    group: d.group_name(z).to_string(),
                    label: y as u8,
                });
            }
            out[z][y] = pos[z][y] as f64 / n[z][y] as f64;
        }
    }
    Ok(out)
}

/// Worst label-conditioned gap in positive-prediction rate between the two
/// groups. Zero means perfect equalized odds.
pub fn equalized_odds_disparity(preds: &[u8], d: &Dataset) -> Result<f64> {
    let r = conditional_positive_rates(preds, d)?;
    Ok((0..2)
        .map(|y| (r[0][y] - r[1][y]).abs())
        .fold(0.0, f64::max))
}

/// Fraction of correct predictions, optionally weighted by example weight.
pub fn accuracy(preds: &[u8], d: &Dataset, weighted: bool) -> Result<f64> {
    check_len(d.len(), preds.len())?;
    let (mut total, mut correct) = (0.0, 0.0);
    for (e, &p) in d.examples().iter().zip(preds) {
        let w = if weighted { e.weight } else { 1.0 };
        total += w;
        if p == e.label {
            correct += w;
        }
    }
    if total <= 0.0 {
        return Err(Error::invalid("total weight is zero"));
    }
    Ok(correct / total)
}

/// Weighted share of positive *labels* in group `z`.
pub fn weighted_positive_rate(d: &Dataset, z: &str) -> Result<f64> {
    let zi = d
        .schema()
        .group_index(z)
        .ok_or_else(|| Error::UnknownGroup(z.to_string()))?;
    let (mut w, mut wpos) = (0.0, 0.0);
    for e in d.examples().iter().filter(|e| e.group == zi) {
        w += e.weight;
        if e.label == 1 {
            wpos += e.weight;
        }
    }
    if w <= 0.0 {
        return Err(Error::invalid(format!("group `{z}` has no weight")));
    }
    Ok(wpos / w)
}

/// Per-example negative log-likelihood with clamped probabilities.
pub fn per_example_losses(probs: &[f64], d: &Dataset) -> Result<Vec<f64>> {
    check_len(d.len(), probs.len())?;
    Ok(d.examples()
        .iter()
        .zip(probs)
        .map(|(e, &p)| log_loss(p, e.label))
        .collect())
}

pub fn log_loss(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean (optionally example-weighted) logistic loss.
pub fn logistic_loss(probs: &[f64], d: &Dataset, weighted: bool) -> Result<f64> {
    let losses = per_example_losses(probs, d)?;
    let (mut total, mut acc) = (0.0, 0.0);
    for (e, l) in d.examples().iter().zip(&losses) {
        let w = if weighted { e.weight } else { 1.0 };
        total += w;
        acc += w * l;
    }
    if total <= 0.0 {
        return Err(Error::invalid("total weight is zero"));
    }
    Ok(acc / total)
}

/// Spread between the worst and best slice loss.
pub fn equalized_error_rate_gap(per_slice_losses: &[f64]) -> Result<f64> {
    if per_slice_losses.is_empty() {
        return Err(Error::invalid("no slice losses"));
    }
    let max = per_slice_losses
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = per_slice_losses
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Summary of a classifier's fairness on a two-group dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub groups: [String; 2],
    pub dp: f64,
    pub eo_disparity: f64,
    pub accuracy: f64,
    /// P(Ŷ=1 | Z=z).
    pub positive_rates: [f64; 2],
    /// Accuracy on examples with Z=z, Y=y, indexed `[z][y]`.
    pub cell_accuracy: [[f64; 2]; 2],
}

impl FairnessReport {
    /// Requires two groups and all four (group, label) cells populated.
    pub fn compute(preds: &[u8], d: &Dataset) -> Result<Self> {
        let cond = conditional_positive_rates(preds, d)?;
        let r0 = positive_rate(preds, d, 0)?;
        let r1 = positive_rate(preds, d, 1)?;
        let mut cell_accuracy = [[0.0; 2]; 2];
        for z in 0..2 {
            cell_accuracy[z][0] = 1.0 - cond[z][0];
            cell_accuracy[z][1] = cond[z][1];
        }
        Ok(Self {
            groups: [d.group_name(0).to_string(), d.group_name(1).to_string()],
            dp: dp_from_rates(r0, r1),
            eo_disparity: (0..2)
                .map(|y| (cond[0][y] - cond[1][y]).abs())
                .fold(0.0, f64::max),
            accuracy: accuracy(preds, d, false)?,
            positive_rates: [r0, r1],
            cell_accuracy,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

// Flat object: dp, eo_disparity, accuracy, positive_rate_<g>, accuracy_<g>_y<l>.
impl Serialize for FairnessReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(9))?;
        m.serialize_entry("dp", &self.dp)?;
        m.serialize_entry("eo_disparity", &self.eo_disparity)?;
        m.serialize_entry("accuracy", &self.accuracy)?;
        for z in 0..2 {
            m.serialize_entry(
                &format!("positive_rate_{}", self.groups[z]),
                &self.positive_rates[z],
            )?;
        }
        for z in 0..2 {
            for y in 0..2 {
                m.serialize_entry(
                    &format!("accuracy_{}_y{}", self.groups[z], y),
                    &self.cell_accuracy[z][y],
                )?;
            }
        }
        m.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fig2_fixture, Dataset, Example, FeatureDecl, Schema, Value};

    /// Predict positive for positions strictly after `cut` (1-based).
    fn cut(cut: usize) -> Vec<u8> {
        (1..=10).map(|i| u8::from(i > cut)).collect()
    }

    fn toy(groups: &[(usize, u8)]) -> Dataset {
        let schema = Schema::new(vec![FeatureDecl::numeric("x")], "z", &["a", "b"], "y");
        let ex = groups
            .iter()
            .map(|&(z, y)| Example {
                id: String::new(),
                features: vec![Value::Num(0.0)],
                group: z,
                label: y,
                weight: 1.0,
            })
            .collect();
        Dataset::new(schema, ex).unwrap()
    }

    #[test]
    fn fig2_accurate_classifier_dp() {
        let d = fig2_fixture();
        let p = cut(4);
        assert_eq!(positive_rate(&p, &d, 0).unwrap(), 0.4);
        assert_eq!(positive_rate(&p, &d, 1).unwrap(), 0.8);
        assert_eq!(demographic_parity(&p, &d).unwrap(), 0.5);
        assert_eq!(demographic_parity(&[1; 10], &d).unwrap(), 1.0);
    }

    #[test]
    fn dp_rate_edge_cases() {
        assert!((dp_from_rates(0.3, 0.6) - 0.5).abs() < 1e-15);
        assert_eq!(dp_from_rates(0.0, 0.0), 1.0);
        assert_eq!(dp_from_rates(0.0, 0.2), 0.0);
    }

    #[test]
    fn eo_disparity_fig2_fair_cut() {
        // Negatives are positions 1..4: white {1,3,4}, black {2}. The cut after
        // position 2 predicts 3 and 4 positive, so P(Ŷ=1|w,Y=0) = 2/3.
        let d = fig2_fixture();
        let r = conditional_positive_rates(&cut(2), &d).unwrap();
        assert_eq!(r[0][0], 2.0 / 3.0);
        assert_eq!(r[1][0], 0.0);
        assert_eq!(r[0][1], 1.0);
        assert_eq!(r[1][1], 1.0);
        assert_eq!(equalized_odds_disparity(&cut(2), &d).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn eo_trivial_cases() {
        let d = toy(&[(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(equalized_odds_disparity(&d.labels(), &d).unwrap(), 0.0);
        assert_eq!(equalized_odds_disparity(&[1, 1, 0, 0], &d).unwrap(), 1.0);
        let d = toy(&[(0, 0), (0, 1), (1, 0)]);
        assert!(matches!(
            equalized_odds_disparity(&[0, 0, 0], &d),
            Err(Error::EmptyCell { label: 1, .. })
        ));
    }

    #[test]
    fn accuracy_values() {
        let d = fig2_fixture();
        assert_eq!(accuracy(&cut(2), &d, false).unwrap(), 0.8);
        assert_eq!(accuracy(&cut(8), &d, false).unwrap(), 0.6);
        assert_eq!(accuracy(&d.labels(), &d, true).unwrap(), 1.0);
    }

    #[test]
    fn loss_values() {
        let d = fig2_fixture();
        let l = logistic_loss(&[0.5; 10], &d, false).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let perfect: Vec<f64> = d.labels().iter().map(|&y| y as f64).collect();
        let l = logistic_loss(&perfect, &d, false).unwrap();
        assert!((l - -(1.0 - PROB_EPS).ln()).abs() < 1e-15);
    }

    #[test]
    fn gap_values() {
        assert_eq!(equalized_error_rate_gap(&[0.4, 0.4]).unwrap(), 0.0);
        assert!((equalized_error_rate_gap(&[0.2, 0.5, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(equalized_error_rate_gap(&[0.7]).unwrap(), 0.0);
        assert!(equalized_error_rate_gap(&[]).is_err());
    }

    #[test]
    fn report_json_is_flat() {
        let d = fig2_fixture();
        let r = FairnessReport::compute(&cut(4), &d).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["dp"], 0.5);
        assert_eq!(v["positive_rate_w"], 0.4);
        assert_eq!(v["accuracy_b_y1"], 1.0);
    }
}
