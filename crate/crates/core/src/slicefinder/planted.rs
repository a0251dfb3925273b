use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, Example, FeatureDecl, Literal, Schema, SlicePredicate, Value};
use crate::error::Result;
use crate::model::sigmoid;
use crate::rng;

pub const AGE_BINS: [f64; 3] = [30.0, 45.0, 60.0];
pub const REGIONS: [&str; 4] = ["N", "E", "S", "W"];

/// `Gender=M AND Age in [45, 60)`.
pub fn default_plant() -> SlicePredicate {
    SlicePredicate::new(vec![
        Literal::bin("Age", 2),
        Literal::eq("Gender", Value::cat("M")),
    ])
    .expect("distinct features")
}

/// `Region=N AND Age in [45, 60)`, which overlaps [`default_plant`].
pub fn second_plant() -> SlicePredicate {
    SlicePredicate::new(vec![
        Literal::bin("Age", 2),
        Literal::eq("Region", Value::cat("N")),
    ])
    .expect("distinct features")
}

/// Rows with a binned `Age`, a categorical `Region`, two numeric signals
/// `x0`, `x1` and sensitive `Gender`. Labels follow `σ(2(x0 + x1))`, and are
/// inverted inside every planted slice, so a single model fits those rows
/// badly.
pub fn gen_planted(n: usize, plants: &[SlicePredicate], seed: u64) -> Result<Dataset> {
    let schema = Schema::new(
        vec![
            FeatureDecl::binned("Age", AGE_BINS.to_vec()),
            FeatureDecl::categorical("Region", REGIONS),
            FeatureDecl::numeric("x0"),
            FeatureDecl::numeric("x1"),
        ],
        "Gender",
        &["F", "M"],
        "y",
    )
    .with_id("id");
    let mut r = rng::seeded(seed);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let age = r.random_range(18.0..75.0f64).floor();
        let region = REGIONS[r.random_range(0..REGIONS.len())];
        let x0: f64 = StandardNormal.sample(&mut r);
        let x1: f64 = StandardNormal.sample(&mut r);
        let label = u8::from(r.random::<f64>() < sigmoid(2.0 * (x0 + x1)));
        examples.push(Example {
            id: i.to_string(),
            features: vec![
                Value::Num(age),
                Value::cat(region),
                Value::Num(x0),
                Value::Num(x1),
            ],
            group: r.random_range(0..2),
            label,
            weight: 1.0,
        });
    }
    let d = Dataset::new(schema, examples)?;
    let compiled = plants
        .iter()
        .map(|p| p.compile(&d))
        .collect::<Result<Vec<_>>>()?;
    let flipped = d
        .examples()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if compiled.iter().any(|c| c.matches(&e)) {
                e.label = 1 - e.label;
            }
            e
        })
        .collect();
    d.with_examples(flipped)
}
