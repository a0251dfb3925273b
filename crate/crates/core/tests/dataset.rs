use proptest::prelude::*;
use raikit::dataset::*;

fn table1_csv() -> &'static str {
    "ID,Name,Gender,Age,Label\n\
     e1,John,M,20,1\n\
     e2,Joe,M,20,0\n\
     e3,Joseph,M,20,0\n\
     e4,Sally,F,30,1\n\
     e5,Sally,F,40,0\n\
     e6,Sally,F,300,1\n"
}

fn ids(d: &Dataset, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| d.examples()[i].id.clone()).collect()
}

#[test]
fn table1_csv_loads_with_unit_weights() {
    let schema = table1_fixture().schema().clone();
    let d = read_csv(table1_csv().as_bytes(), &schema).unwrap();
    assert_eq!(d.len(), 6);
    assert!(d.weights().iter().all(|&w| w == 1.0));
    assert_eq!(d, table1_fixture());
}

#[test]
fn header_only_csv_is_empty() {
    let schema = table1_fixture().schema().clone();
    let d = read_csv("ID,Name,Gender,Age,Label\n".as_bytes(), &schema).unwrap();
    assert!(d.is_empty());
}

#[test]
fn bad_label_names_the_row() {
    let schema = table1_fixture().schema().clone();
    let text = "ID,Name,Gender,Age,Label\ne1,John,M,20,1\ne2,Joe,M,20,2\n";
    let err = read_csv(text.as_bytes(), &schema).unwrap_err();
    assert!(
        matches!(err, raikit::Error::MalformedRow { row: 2, .. }),
        "{err}"
    );
}

#[test]
fn csv_round_trip_keeps_weights() {
    let d = gen_synthetic(&SyntheticParams::two_groups([7, 9], [0.5, 0.5], 3, 1.0), 2).unwrap();
    let mut ex = d.examples().to_vec();
    ex[3].weight = 2.5;
    let d = d.with_examples(ex).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&d, &path).unwrap();
    assert_eq!(load_csv(&path, d.schema()).unwrap(), d);
}

#[test]
fn table1_slices() {
    let d = table1_fixture();
    let male = SlicePredicate::new(vec![Literal::eq("Gender", Value::cat("M"))]).unwrap();
    let (s, rest) = apply_slice(&d, &male).unwrap();
    assert_eq!(ids(&d, &s.members), ["e1", "e2", "e3"]);
    assert_eq!(ids(&d, &rest), ["e4", "e5", "e6"]);

    // Age 20 falls in bin 0 of the [25, 35) edges.
    let young_male = male.and(Literal::bin("Age", 0)).unwrap();
    assert_eq!(
        ids(&d, &apply_slice(&d, &young_male).unwrap().0.members),
        ["e1", "e2", "e3"]
    );

    let (all, none) = apply_slice(&d, &SlicePredicate::all()).unwrap();
    assert_eq!(all.size(), 6);
    assert!(none.is_empty());

    let unknown = SlicePredicate::new(vec![Literal::eq("Height", Value::Num(1.0))]).unwrap();
    assert!(apply_slice(&d, &unknown).is_err());
}

#[test]
fn fig2_fixture_layout() {
    let clean = fig2_fixture();
    let poisoned = poisoned_fig2_fixture();
    assert_eq!(clean.len(), 10);
    assert_eq!(clean.group_members(0).len(), 5);
    assert_eq!(clean.group_members(1).len(), 5);
    let xs: Vec<f64> = clean
        .examples()
        .iter()
        .map(|e| e.features[0].as_num().unwrap())
        .collect();
    assert_eq!(xs, (1..=10).map(f64::from).collect::<Vec<_>>());
    let diff: Vec<usize> = (0..10)
        .filter(|&i| clean.examples()[i].label != poisoned.examples()[i].label)
        .collect();
    // 0-based positions of the fifth and seventh individuals.
    assert_eq!(diff, FIG2_POISONED_POSITIONS);
    assert_eq!(diff, [4, 6]);
    assert_eq!(flip_labels_at(&clean, &[4, 6]).unwrap(), poisoned);
}

#[test]
fn generator_edge_cases() {
    let d = gen_synthetic(
        &SyntheticParams::two_groups([0, 100], [0.5, 0.5], 2, 1.0),
        0,
    )
    .unwrap();
    assert!(d.examples().iter().all(|e| e.group == 1));
    assert!(gen_synthetic(&SyntheticParams::two_groups([0, 0], [0.5, 0.5], 2, 1.0), 0).is_err());
    assert!(gen_synthetic(&SyntheticParams::two_groups([5, 5], [1.5, 0.5], 2, 1.0), 0).is_err());
}

#[test]
fn generator_label_rate_within_binomial_bound() {
    let p = SyntheticParams::two_groups([500, 500], [0.5, 0.5], 2, 1.0);
    for seed in 0..20 {
        let d = gen_synthetic(&p, seed).unwrap();
        for z in 0..2 {
            let m = d.group_members(z);
            let rate =
                m.iter().filter(|&&i| d.examples()[i].label == 1).count() as f64 / m.len() as f64;
            assert!((rate - 0.5).abs() < 0.1, "seed {seed}, group {z}: {rate}");
        }
    }
}

#[test]
fn poison_extremes() {
    let d = gen_synthetic(
        &SyntheticParams::two_groups([20, 30], [0.3, 0.6], 2, 1.0),
        1,
    )
    .unwrap();
    let (same, mask) = poison_label_flip(&d, 0.0, 3, &FlipStrategy::Uniform).unwrap();
    assert_eq!(same, d);
    assert!(mask.is_empty());
    let (all, mask) = poison_label_flip(&d, 1.0, 3, &FlipStrategy::Uniform).unwrap();
    assert_eq!(mask.len(), d.len());
    assert!(all
        .examples()
        .iter()
        .zip(d.examples())
        .all(|(a, b)| a.label == 1 - b.label));
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (
        1usize..60,
        1usize..60,
        0.0f64..1.0,
        0.0f64..1.0,
        any::<u64>(),
    )
        .prop_map(|(a, b, r0, r1, seed)| {
            gen_synthetic(&SyntheticParams::two_groups([a, b], [r0, r1], 2, 1.0), seed).unwrap()
        })
}

proptest! {
    #[test]
    fn slice_and_complement_partition(d in dataset_strategy(), z in 0usize..2) {
        let p = SlicePredicate::new(vec![Literal::eq("z", Value::cat(format!("z{z}")))]).unwrap();
        let (s, rest) = apply_slice(&d, &p).unwrap();
        let mut all: Vec<usize> = s.members.iter().chain(&rest).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
        prop_assert!(s.members.iter().all(|i| !rest.contains(i)));
        prop_assert!(s.members.iter().all(|&i| d.examples()[i].group == z));
    }

    #[test]
    fn poisoning_only_touches_masked_labels(d in dataset_strategy(), rate in 0.0f64..=1.0, seed: u64, targeted: bool) {
        let strategy = if targeted { FlipStrategy::TargetedGroup("z1".into()) } else { FlipStrategy::Uniform };
        let pool = if targeted { d.group_members(1).len() } else { d.len() };
        let expected = (rate * d.len() as f64).floor() as usize;
        let res = poison_label_flip(&d, rate, seed, &strategy);
        if expected > pool {
            prop_assert!(res.is_err());
            return Ok(());
        }
        let (p, mask) = res.unwrap();
        prop_assert_eq!(mask.len(), expected);
        prop_assert_eq!(p.len(), d.len());
        for (i, (a, b)) in p.examples().iter().zip(d.examples()).enumerate() {
            prop_assert_eq!(&a.features, &b.features);
            prop_assert_eq!(a.weight, b.weight);
            prop_assert_eq!(a.group, b.group);
            prop_assert_eq!(a.label != b.label, mask.contains(&i));
            if targeted && mask.contains(&i) {
                prop_assert_eq!(a.group, 1);
            }
        }
        prop_assert_eq!(poison_label_flip(&d, rate, seed, &strategy).unwrap().0, p);
    }

    #[test]
    fn generators_are_reproducible(seed: u64, n in 1usize..200) {
        let p = SyntheticParams::two_groups([n, n / 2], [0.4, 0.7], 3, 0.5);
        prop_assert_eq!(gen_synthetic(&p, seed).unwrap(), gen_synthetic(&p, seed).unwrap());
        let d = gen_synthetic(&p, seed).unwrap();
        prop_assert_eq!(d.group_members(0).len(), n);
        prop_assert_eq!(d.group_members(1).len(), n / 2);
    }
}
