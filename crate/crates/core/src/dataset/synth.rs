use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Example, FeatureDecl, Schema, Value};
use crate::error::{Error, Result};
use crate::rng;

/// Generation parameters for one sensitive group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub name: String,
    pub size: usize,
    /// P(Y=1 | Z=this group).
    pub positive_rate: f64,
    /// Feature means, indexed `[label][feature]`.
    pub means: [Vec<f64>; 2],
    /// Feature standard deviations, indexed `[label][feature]`.
    pub spreads: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub groups: Vec<GroupParams>,
    pub n_features: usize,
}

impl SyntheticParams {
    /// Two groups with isotropic unit-spread Gaussians whose label means sit at
    /// `-shift` / `+shift` on every feature.
    pub fn two_groups(sizes: [usize; 2], rates: [f64; 2], n_features: usize, shift: f64) -> Self {
        let group = |name: &str, size, rate| GroupParams {
            name: name.to_string(),
            size,
            positive_rate: rate,
            means: [vec![-shift; n_features], vec![shift; n_features]],
            spreads: [vec![1.0; n_features], vec![1.0; n_features]],
        };
        Self {
            groups: vec![
                group("z0", sizes[0], rates[0]),
                group("z1", sizes[1], rates[1]),
            ],
            n_features,
        }
    }
}

/// Draws a dataset with exactly the requested group sizes. Labels are
/// Bernoulli per example; features are independent Gaussians per
/// (group, label). Rows are shuffled and ids are 0-based draw positions.
pub fn gen_synthetic(params: &SyntheticParams, seed: u64) -> Result<Dataset> {
    if params.groups.iter().all(|g| g.size == 0) {
        return Err(Error::invalid("all group sizes are zero"));
    }
    for g in &params.groups {
        if !(0.0..=1.0).contains(&g.positive_rate) {
            return Err(Error::invalid(format!(
                "positive rate of `{}` outside [0,1]",
                g.name
            )));
        }
        for y in 0..2 {
            if g.means[y].len() != params.n_features || g.spreads[y].len() != params.n_features {
                return Err(Error::invalid(format!(
                    "group `{}` needs {} means and spreads per label",
                    g.name, params.n_features
                )));
            }
            if g.spreads[y].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::invalid("spreads must be finite and >= 0"));
            }
        }
    }
    let features = (0..params.n_features)
        .map(|j| FeatureDecl::numeric(format!("x{j}")))
        .collect();
    let names: Vec<&str> = params.groups.iter().map(|g| g.name.as_str()).collect();
    let schema = Schema::new(features, "z", &names, "y").with_id("id");

    let mut rng = rng::seeded(seed);
    let mut examples = Vec::new();
    for (z, g) in params.groups.iter().enumerate() {
        for _ in 0..g.size {
            let label = u8::from(rng.random::<f64>() < g.positive_rate);
            let y = label as usize;
            let feats = (0..params.n_features)
                .map(|j| {
                    let n = Normal::new(g.means[y][j], g.spreads[y][j]).expect("validated spread");
                    Value::Num(n.sample(&mut rng))
                })
                .collect();
            examples.push(Example {
                id: String::new(),
                features: feats,
                group: z,
                label,
                weight: 1.0,
            });
        }
    }
    examples.shuffle(&mut rng);
    for (i, e) in examples.iter_mut().enumerate() {
        e.id = i.to_string();
    }
    Dataset::new(schema, examples)
}
