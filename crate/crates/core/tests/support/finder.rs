use std::collections::BTreeSet;

use rand::Rng;

use raikit::dataset::{Dataset, Example, FeatureDecl, Literal, Schema, SlicePredicate, Value};
use raikit::model::{train_vanilla, TrainConfig};
use raikit::rng;
use raikit::slicefinder::*;

/// Threshold that separates a planted conjunction (effect ≈ 2.2-2.5) from its
/// one-literal parents (≤ 1.1), whose impact matches the plant's in expectation.
pub const PLANT_T: f64 = 1.5;

/// Three categorical features with three values each, rows drawn at random.
pub fn cube(n: usize, seed: u64) -> Dataset {
    let vals = ["a", "b", "c"];
    let schema = Schema::new(
        vec![
            FeatureDecl::categorical("f0", vals),
            FeatureDecl::categorical("f1", vals),
            FeatureDecl::categorical("f2", vals),
        ],
        "z",
        &["g0", "g1"],
        "y",
    );
    let mut r = rng::seeded(seed);
    let examples = (0..n)
        .map(|i| Example {
            id: i.to_string(),
            features: (0..3)
                .map(|_| Value::cat(vals[r.random_range(0..3)]))
                .collect(),
            group: r.random_range(0..2),
            label: r.random_range(0..2),
            weight: 1.0,
        })
        .collect();
    Dataset::new(schema, examples).unwrap()
}

/// Losses with a raised block on `f0=a AND f1=b` and a mild one on `f2=c`.
pub fn cube_losses(d: &Dataset, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed ^ 0xabc);
    d.examples()
        .iter()
        .map(|e| {
            let cat = |j: usize| e.features[j].as_cat().unwrap();
            let mut l = r.random::<f64>() * 0.6;
            if cat(0) == "a" && cat(1) == "b" {
                l += 0.5;
            }
            if cat(2) == "c" {
                l += 0.1;
            }
            l
        })
        .collect()
}

/// Independent enumeration: every subset of features, every value combination.
pub fn oracle(
    d: &Dataset,
    losses: &[f64],
    cfg: &SearchConfig,
) -> (usize, Vec<(String, usize, f64, f64, f64)>) {
    let vals = ["a", "b", "c"];
    let mut rows = Vec::new();
    let mut tested = 0;
    for mask in 1u32..8 {
        let feats: Vec<usize> = (0..3).filter(|j| mask & (1 << j) != 0).collect();
        if feats.len() > cfg.max_literals {
            continue;
        }
        for combo in 0..3usize.pow(feats.len() as u32) {
            let lits: Vec<Literal> = feats
                .iter()
                .enumerate()
                .map(|(k, &j)| {
                    Literal::eq(
                        format!("f{j}"),
                        Value::cat(vals[combo / 3usize.pow(k as u32) % 3]),
                    )
                })
                .collect();
            let p = SlicePredicate::new(lits).unwrap();
            let c = p.compile(d).unwrap();
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                (0..d.len()).partition(|&i| c.matches(&d.examples()[i]));
            if inside.len() < cfg.min_size {
                continue;
            }
            let a: Vec<f64> = inside.iter().map(|&i| losses[i]).collect();
            let b: Vec<f64> = outside.iter().map(|&i| losses[i]).collect();
            if a.len() < 2 || b.len() < 2 {
                continue;
            }
            tested += 1;
            let phi = effect_size(&a, &b).unwrap();
            let pv = significance_test(&a, &b).unwrap();
            let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            let impact = a.len() as f64 * (mean(&a) - mean(&b));
            rows.push((p, a.len(), phi, pv, impact));
        }
    }
    let mut hits: Vec<_> = rows
        .into_iter()
        .filter(|r| r.2 >= cfg.effect_threshold && r.3 <= cfg.alpha / tested as f64)
        .collect();
    hits.sort_by(|x, y| {
        y.4.total_cmp(&x.4)
            .then(x.0.len().cmp(&y.0.len()))
            .then_with(|| x.0.to_string().cmp(&y.0.to_string()))
    });
    hits.truncate(cfg.max_results);
    (
        tested,
        hits.into_iter()
            .map(|r| (r.0.to_string(), r.1, r.2, r.3, r.4))
            .collect(),
    )
}

pub fn planted_losses(plants: &[SlicePredicate], seed: u64) -> (Dataset, Vec<f64>) {
    let d = gen_planted(3000, plants, seed).unwrap();
    let m = train_vanilla(
        &d,
        &TrainConfig {
            seed,
            epochs: 30,
            ..Default::default()
        },
    )
    .unwrap();
    let probs = raikit::model::predict(&m, &d).unwrap();
    let losses = raikit::metrics::per_example_losses(&probs, &d).unwrap();
    (d, losses)
}

pub fn disjoint(slices: &[CandidateSlice]) -> bool {
    let mut seen = BTreeSet::new();
    slices
        .iter()
        .all(|s| s.members.iter().all(|&i| seen.insert(i)))
}
