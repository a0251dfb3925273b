use super::{Dataset, Example, FeatureDecl, Schema, Value};

/// 0-based positions flipped to Y=0 in the poisoned threshold-classifier
/// fixture (the fifth and seventh individuals).
pub const FIG2_POISONED_POSITIONS: [usize; 2] = [4, 6];

// (race, label) for individuals ordered by X = 1..10.
const FIG2: [(&str, u8); 10] = [
    ("w", 0),
    ("b", 0),
    ("w", 0),
    ("w", 0),
    ("w", 1),
    ("b", 1),
    ("b", 1),
    ("b", 1),
    ("w", 1),
    ("b", 1),
];

/// Ten individuals of two races on one feature `X = 1..10`.
///
/// The arrangement reproduces every statistic of the worked example: the
/// accurate cut (after position 4) has positive rates 0.4 / 0.8, the DP=1 cut
/// after position 2 misclassifies two white individuals, and after flipping
/// positions 5 and 7 the best DP=1 cut is after position 8.
pub fn fig2_fixture() -> Dataset {
    let schema =
        Schema::new(vec![FeatureDecl::numeric("X")], "race", &["w", "b"], "y").with_id("id");
    let examples = FIG2
        .iter()
        .enumerate()
        .map(|(i, &(race, label))| Example {
            id: (i + 1).to_string(),
            features: vec![Value::Num((i + 1) as f64)],
            group: if race == "w" { 0 } else { 1 },
            label,
            weight: 1.0,
        })
        .collect();
    Dataset::new(schema, examples).expect("fixture is valid")
}

/// [`fig2_fixture`] with the fifth and seventh labels flipped to 0.
pub fn poisoned_fig2_fixture() -> Dataset {
    let clean = fig2_fixture();
    let mut examples = clean.examples().to_vec();
    for &i in &FIG2_POISONED_POSITIONS {
        examples[i].label = 0;
    }
    clean.with_examples(examples).expect("fixture is valid")
}

/// The six-person cleaning example: e2/e3 are duplicates and e6 has an
/// impossible age. Age bins are `[25, 35)` edges.
pub fn table1_fixture() -> Dataset {
    let schema = Schema {
        features: vec![
            FeatureDecl::categorical("Name", ["Joe", "John", "Joseph", "Sally"]),
            FeatureDecl::binned("Age", vec![25.0, 35.0]),
        ],
        sensitive: "Gender".into(),
        groups: vec!["M".into(), "F".into()],
        label: "Label".into(),
        id: Some("ID".into()),
        weight: "Weight".into(),
    };
    let rows = [
        ("e1", "John", 0, 20.0, 1),
        ("e2", "Joe", 0, 20.0, 0),
        ("e3", "Joseph", 0, 20.0, 0),
        ("e4", "Sally", 1, 30.0, 1),
        ("e5", "Sally", 1, 40.0, 0),
        ("e6", "Sally", 1, 300.0, 1),
    ];
    let examples = rows
        .iter()
        .map(|&(id, name, group, age, label)| Example {
            id: id.into(),
            features: vec![Value::cat(name), Value::Num(age)],
            group,
            label,
            weight: 1.0,
        })
        .collect();
    Dataset::new(schema, examples).expect("fixture is valid")
}
