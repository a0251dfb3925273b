use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Value};
use crate::error::{Error, Result};
use crate::metrics;

/// Predicts 1 when the feature value is strictly greater than `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub feature: String,
    pub threshold: f64,
    /// Number of examples (in sorted feature order) left of the cut.
    pub cut: usize,
}

impl ThresholdClassifier {
    pub fn classify(&self, d: &Dataset) -> Result<Vec<u8>> {
        let j = d
            .schema()
            .feature_index(&self.feature)
            .ok_or_else(|| Error::UnknownFeature(self.feature.clone()))?;
        d.examples()
            .iter()
            .map(|e| match e.features[j] {
                Value::Num(x) => Ok(u8::from(x > self.threshold)),
                Value::Cat(_) => Err(Error::invalid(format!("`{}` is not numeric", self.feature))),
            })
            .collect()
    }
}

struct Cut {
    classifier: ThresholdClassifier,
    accuracy: f64,
    dp: f64,
}

/// All realizable cuts in ascending threshold order. Equal feature values
/// always fall on the same side.
fn scan(d: &Dataset, feature: &str) -> Result<Vec<Cut>> {
    let j = d
        .schema()
        .feature_index(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
    let mut xs: Vec<f64> = d
        .examples()
        .iter()
        .map(|e| {
            e.features[j]
                .as_num()
                .ok_or_else(|| Error::invalid(format!("`{feature}` is not numeric")))
        })
        .collect::<Result<_>>()?;
    if xs.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    xs.sort_by(f64::total_cmp);
    let mut thresholds = vec![(xs[0] - 1.0, 0)];
    for k in 1..xs.len() {
        if xs[k] > xs[k - 1] {
            thresholds.push(((xs[k - 1] + xs[k]) / 2.0, k));
        }
    }
    thresholds.push((xs[xs.len() - 1], xs.len()));

    thresholds
        .into_iter()
        .map(|(t, cut)| {
            let classifier = ThresholdClassifier {
                feature: feature.to_string(),
                threshold: t,
                cut,
            };
            let preds = classifier.classify(d)?;
            Ok(Cut {
                accuracy: metrics::accuracy(&preds, d, true)?,
                dp: metrics::demographic_parity(&preds, d)?,
                classifier,
            })
        })
        .collect()
}

fn best(cuts: impl Iterator<Item = Cut>) -> Option<Cut> {
    // Strict improvement keeps the smallest threshold among ties.
    cuts.fold(None, |acc: Option<Cut>, c| match acc {
        Some(a) if a.accuracy >= c.accuracy => Some(a),
        _ => Some(c),
    })
}

/// Accuracy-maximizing single-feature threshold; ties go to the smallest
/// threshold.
pub fn fit_threshold_max_accuracy(d: &Dataset, feature: &str) -> Result<ThresholdClassifier> {
    best(scan(d, feature)?.into_iter())
        .map(|c| c.classifier)
        .ok_or_else(|| Error::invalid("no cut positions"))
}

/// Most accurate threshold among those whose demographic parity is at least
/// `dp_min`.
pub fn fit_threshold_fair(d: &Dataset, feature: &str, dp_min: f64) -> Result<ThresholdClassifier> {
    best(scan(d, feature)?.into_iter().filter(|c| c.dp >= dp_min))
        .map(|c| c.classifier)
        .ok_or_else(|| Error::Infeasible(format!("no threshold reaches DP >= {dp_min}")))
}
