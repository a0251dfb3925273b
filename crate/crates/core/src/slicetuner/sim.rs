use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example, FeatureDecl, Literal, Schema, SlicePredicate, Value};
use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::rng;

/// One simulated slice. Each slice owns a block of `dims` Gaussian features
/// that are zero outside the slice, so slices only interact through the
/// shared model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSlice {
    pub dims: usize,
    /// Scale of the true logit; larger means less label noise.
    pub signal: f64,
    pub initial: usize,
    pub validation: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePoolParams {
    pub slices: Vec<SimSlice>,
}

impl SlicePoolParams {
    /// Four slices of growing dimension and shrinking initial size.
    pub fn four_slices() -> Self {
        let slice = |dims, initial| SimSlice {
            dims,
            signal: 2.0,
            initial,
            validation: 400,
            pool: 2000,
        };
        Self {
            slices: vec![slice(2, 150), slice(4, 100), slice(8, 60), slice(16, 40)],
        }
    }
}

/// Initial training data, validation data and acquisition pool, all on one
/// schema whose sensitive column `slice` names the slice (`s0`, `s1`, ...).
#[derive(Debug, Clone)]
pub struct SlicePool {
    pub train: Dataset,
    pub validation: Dataset,
    pub pool: Dataset,
    pub slices: Vec<SlicePredicate>,
}

pub fn gen_slice_pool(params: &SlicePoolParams, seed: u64) -> Result<SlicePool> {
    if params.slices.is_empty() {
        return Err(Error::invalid("no slices to simulate"));
    }
    let names: Vec<String> = (0..params.slices.len()).map(|k| format!("s{k}")).collect();
    let mut features = Vec::new();
    let mut offsets = Vec::new();
    for (k, s) in params.slices.iter().enumerate() {
        if s.dims == 0 || !s.signal.is_finite() {
            return Err(Error::invalid(format!(
                "slice {k} needs dims >= 1 and a finite signal"
            )));
        }
        offsets.push(features.len());
        features.extend((0..s.dims).map(|j| FeatureDecl::numeric(format!("s{k}_x{j}"))));
    }
    let width = features.len();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = Schema::new(features, "slice", &name_refs, "y").with_id("id");

    let mut rng = rng::seeded(seed);
    let mut parts: [Vec<Example>; 3] = Default::default();
    for (part, tag) in parts.iter_mut().zip(["t", "v", "p"]) {
        for (k, s) in params.slices.iter().enumerate() {
            let count = match tag {
                "t" => s.initial,
                "v" => s.validation,
                _ => s.pool,
            };
            for _ in 0..count {
                let mut x = vec![0.0; width];
                let mut logit = 0.0;
                for j in 0..s.dims {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    x[offsets[k] + j] = v;
                    logit += v;
                }
                logit *= s.signal / (s.dims as f64).sqrt();
                let label = u8::from(rng.random::<f64>() < sigmoid(logit));
                part.push(Example {
                    id: format!("{tag}{}", part.len()),
                    features: x.into_iter().map(Value::Num).collect(),
                    group: k,
                    label,
                    weight: 1.0,
                });
            }
        }
    }
    let [train, validation, pool] = parts;
    let slices = names
        .iter()
        .map(|n| SlicePredicate::new(vec![Literal::eq("slice", Value::cat(n.clone()))]))
        .collect::<Result<Vec<_>>>()?;
    Ok(SlicePool {
        train: Dataset::new(schema.clone(), train)?,
        validation: Dataset::new(schema.clone(), validation)?,
        pool: Dataset::new(schema, pool)?,
        slices,
    })
}
