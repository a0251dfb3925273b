use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipStrategy {
    /// Victims drawn uniformly from the whole dataset.
    Uniform,
    /// Victims drawn only from the named group.
    TargetedGroup(String),
}

/// Flips exactly `floor(rate * n)` labels and returns the poisoned copy with
/// the ascending list of flipped positions. Everything but the label is
/// untouched.
pub fn poison_label_flip(
    d: &Dataset,
    rate: f64,
    seed: u64,
    strategy: &FlipStrategy,
) -> Result<(Dataset, Vec<usize>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("flip rate {rate} outside [0,1]")));
    }
    let n = d.len();
    let count = (rate * n as f64).floor() as usize;
    let pool: Vec<usize> = match strategy {
        FlipStrategy::Uniform => (0..n).collect(),
        FlipStrategy::TargetedGroup(name) => {
            let z = d
                .schema()
                .group_index(name)
                .ok_or_else(|| Error::UnknownGroup(name.clone()))?;
            d.group_members(z)
        }
    };
    if count > pool.len() {
        return Err(Error::invalid(format!(
            "cannot flip {count} labels inside a pool of {}",
            pool.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut mask: Vec<usize> = index::sample(&mut rng, pool.len(), count)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    mask.sort_unstable();
    Ok((flip_labels_at(d, &mask)?, mask))
}

/// Flips the labels at the given 0-based positions.
pub fn flip_labels_at(d: &Dataset, positions: &[usize]) -> Result<Dataset> {
    let mut examples = d.examples().to_vec();
    for &i in positions {
        let ex = examples
            .get_mut(i)
            .ok_or_else(|| Error::invalid(format!("position {i} out of range")))?;
        ex.label = 1 - ex.label;
    }
    d.with_examples(examples)
}
