use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// How the target mass of each (group, label) cell is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReweighScheme {
    /// Target mass `N(z)·N(y)/N` from row counts; a merged record counts once.
    #[default]
    Counts,
    /// Target mass `W(z)·W(y)/W` from weight sums.
    Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFactor {
    pub group: String,
    pub label: u8,
    pub factor: f64,
}

/// Weighted positive rate per group name.
pub fn weighted_positive_rates(d: &Dataset) -> BTreeMap<String, f64> {
    let mut pos = vec![0.0; d.n_groups()];
    let mut all = vec![0.0; d.n_groups()];
    for e in d.examples() {
        all[e.group] += e.weight;
        if e.label == 1 {
            pos[e.group] += e.weight;
        }
    }
    (0..d.n_groups())
        .filter(|&z| all[z] > 0.0)
        .map(|z| (d.group_name(z).to_string(), pos[z] / all[z]))
        .collect()
}

/// Scales the weights of each (group, label) cell so that every group ends
/// up with the same weighted positive rate. Only weights change.
pub fn reweigh_for_dp(d: &Dataset) -> Result<(Dataset, Vec<CellFactor>)> {
    reweigh_for_dp_with(d, ReweighScheme::default())
}

pub fn reweigh_for_dp_with(
    d: &Dataset,
    scheme: ReweighScheme,
) -> Result<(Dataset, Vec<CellFactor>)> {
    let g = d.n_groups();
    let mut count = vec![[0usize; 2]; g];
    let mut weight = vec![[0.0f64; 2]; g];
    for e in d.examples() {
        count[e.group][e.label as usize] += 1;
        weight[e.group][e.label as usize] += e.weight;
    }
    for z in 0..g {
        if weight[z][0] + weight[z][1] <= 0.0 {
            return Err(Error::invalid(format!(
                "group `{}` has no weight",
                d.group_name(z)
            )));
        }
    }
    let mass = |z: usize, y: usize| match scheme {
        ReweighScheme::Counts => count[z][y] as f64,
        ReweighScheme::Weights => weight[z][y],
    };
    let total: f64 = (0..g).map(|z| mass(z, 0) + mass(z, 1)).sum();
    let by_label = [0, 1].map(|y| (0..g).map(|z| mass(z, y)).sum::<f64>());
    let mut factors = vec![[1.0f64; 2]; g];
    for z in 0..g {
        let by_group = mass(z, 0) + mass(z, 1);
        for y in 0..2 {
            if by_label[y] == 0.0 {
                continue;
            }
            if weight[z][y] <= 0.0 {
                return Err(Error::EmptyCell {
                    group: d.group_name(z).to_string(),
                    label: y as u8,
                });
            }
            factors[z][y] = by_group * by_label[y] / (total * weight[z][y]);
        }
    }
    let examples = d
        .examples()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.weight *= factors[e.group][e.label as usize];
            e
        })
        .collect();
    let report = (0..g)
        .flat_map(|z| {
            (0..2u8)
                .map(move |y| (z, y))
                .filter(|&(_, y)| by_label[y as usize] > 0.0)
        })
        .map(|(z, y)| CellFactor {
            group: d.group_name(z).to_string(),
            label: y,
            factor: factors[z][y as usize],
        })
        .collect();
    Ok((d.with_examples(examples)?, report))
}
