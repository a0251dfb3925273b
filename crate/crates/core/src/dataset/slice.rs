use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, FeatureKind, Value};
use crate::error::{Error, Result};

/// One feature-value test. Bins refer to the numeric feature's declared edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Test {
    Equals(Value),
    InBin(usize),
    NotEquals(Value),
    NotInBin(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub feature: String,
    pub test: Test,
}

impl Literal {
    pub fn eq(feature: impl Into<String>, value: Value) -> Self {
        Self {
            feature: feature.into(),
            test: Test::Equals(value),
        }
    }

    pub fn bin(feature: impl Into<String>, bin: usize) -> Self {
        Self {
            feature: feature.into(),
            test: Test::InBin(bin),
        }
    }
}

/// A conjunction of literals, at most one per feature. The empty predicate
/// selects everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlicePredicate {
    literals: Vec<Literal>,
}

impl SlicePredicate {
    pub fn new(literals: Vec<Literal>) -> Result<Self> {
        for (i, l) in literals.iter().enumerate() {
            if literals[..i].iter().any(|o| o.feature == l.feature) {
                return Err(Error::invalid(format!(
                    "feature `{}` appears twice in predicate",
                    l.feature
                )));
            }
        }
        Ok(Self { literals })
    }

    pub fn all() -> Self {
        Self::default()
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    /// Conjunction with one more literal.
    pub fn and(&self, lit: Literal) -> Result<Self> {
        let mut literals = self.literals.clone();
        literals.push(lit);
        Self::new(literals)
    }

    /// Resolves feature names against the dataset schema.
    pub fn compile(&self, d: &Dataset) -> Result<CompiledPredicate> {
        let schema = d.schema();
        let mut tests = Vec::with_capacity(self.literals.len());
        for lit in &self.literals {
            let target = if lit.feature == schema.sensitive {
                let group_of = |v: &Value| -> Result<usize> {
                    let name = v.to_string();
                    schema.group_index(&name).ok_or(Error::UnknownGroup(name))
                };
                match &lit.test {
                    Test::Equals(v) => CompiledTest::GroupEq(group_of(v)?, true),
                    Test::NotEquals(v) => CompiledTest::GroupEq(group_of(v)?, false),
                    _ => return Err(Error::invalid("sensitive attribute cannot be binned")),
                }
            } else {
                let j = schema
                    .feature_index(&lit.feature)
                    .ok_or_else(|| Error::UnknownFeature(lit.feature.clone()))?;
                let decl = &schema.features[j];
                match (&lit.test, &decl.kind) {
                    (Test::Equals(v), _) => CompiledTest::ValueEq(j, v.clone(), true),
                    (Test::NotEquals(v), _) => CompiledTest::ValueEq(j, v.clone(), false),
                    (Test::InBin(b) | Test::NotInBin(b), FeatureKind::Numeric { bins }) => {
                        if *b > bins.len() {
                            return Err(Error::invalid(format!(
                                "bin {b} out of range for `{}`",
                                decl.name
                            )));
                        }
                        CompiledTest::Bin(j, bins.clone(), *b, matches!(lit.test, Test::InBin(_)))
                    }
                    _ => return Err(Error::invalid(format!("`{}` has no bins", decl.name))),
                }
            };
            tests.push(target);
        }
        Ok(CompiledPredicate { tests })
    }

    /// Human-readable form, e.g. `Gender=M AND Age in [25, 35)`.
    pub fn describe(&self, d: &Dataset) -> String {
        if self.literals.is_empty() {
            return "ALL".to_string();
        }
        let schema = d.schema();
        let parts: Vec<String> = self
            .literals
            .iter()
            .map(|l| {
                let bins = schema
                    .feature_index(&l.feature)
                    .and_then(|j| match &schema.features[j].kind {
                        FeatureKind::Numeric { bins } => Some(bins.as_slice()),
                        _ => None,
                    })
                    .unwrap_or(&[]);
                match &l.test {
                    Test::Equals(v) => format!("{}={}", l.feature, v),
                    Test::NotEquals(v) => format!("{}!={}", l.feature, v),
                    Test::InBin(b) => format!("{} in {}", l.feature, bin_label(bins, *b)),
                    Test::NotInBin(b) => format!("{} not in {}", l.feature, bin_label(bins, *b)),
                }
            })
            .collect();
        parts.join(" AND ")
    }
}

impl fmt::Display for SlicePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return f.write_str("ALL");
        }
        for (i, l) in self.literals.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            match &l.test {
                Test::Equals(v) => write!(f, "{}={}", l.feature, v)?,
                Test::NotEquals(v) => write!(f, "{}!={}", l.feature, v)?,
                Test::InBin(b) => write!(f, "{}#{}", l.feature, b)?,
                Test::NotInBin(b) => write!(f, "{}!#{}", l.feature, b)?,
            }
        }
        Ok(())
    }
}

fn bin_label(bins: &[f64], b: usize) -> String {
    match (b, bins.len()) {
        (_, 0) => format!("bin {b}"),
        (0, _) => format!("(-inf, {})", bins[0]),
        (b, n) if b == n => format!("[{}, inf)", bins[n - 1]),
        (b, _) => format!("[{}, {})", bins[b - 1], bins[b]),
    }
}

#[derive(Debug, Clone)]
enum CompiledTest {
    GroupEq(usize, bool),
    ValueEq(usize, Value, bool),
    Bin(usize, Vec<f64>, usize, bool),
}

/// A predicate with feature names resolved to column positions.
#[derive(Debug, Clone)]
pub struct CompiledPredicate {
    tests: Vec<CompiledTest>,
}

impl CompiledPredicate {
    pub fn matches(&self, ex: &Example) -> bool {
        self.tests.iter().all(|t| match t {
            CompiledTest::GroupEq(z, want) => (ex.group == *z) == *want,
            CompiledTest::ValueEq(j, v, want) => (&ex.features[*j] == v) == *want,
            CompiledTest::Bin(j, edges, b, want) => {
                let x = ex.features[*j].as_num().unwrap_or(f64::NAN);
                let bin = edges.iter().take_while(|&&e| e <= x).count();
                (bin == *b) == *want
            }
        })
    }
}

/// A predicate together with the indices of the examples it selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub predicate: SlicePredicate,
    pub members: Vec<usize>,
}

impl Slice {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Splits the dataset into the examples satisfying `p` and the rest (the
/// complement, returned as ascending indices).
pub fn apply_slice(d: &Dataset, p: &SlicePredicate) -> Result<(Slice, Vec<usize>)> {
    let compiled = p.compile(d)?;
    let mut members = Vec::new();
    let mut complement = Vec::new();
    for (i, ex) in d.examples().iter().enumerate() {
        if compiled.matches(ex) {
            members.push(i);
        } else {
            complement.push(i);
        }
    }
    Ok((
        Slice {
            predicate: p.clone(),
            members,
        },
        complement,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::table1_fixture;

    #[test]
    fn gender_slice_on_table1() {
        let d = table1_fixture();
        let p = SlicePredicate::new(vec![Literal::eq("Gender", Value::cat("M"))]).unwrap();
        let (s, c) = apply_slice(&d, &p).unwrap();
        assert_eq!(s.members, vec![0, 1, 2]);
        assert_eq!(c, vec![3, 4, 5]);
    }

    #[test]
    fn empty_predicate_selects_all() {
        let d = table1_fixture();
        let (s, c) = apply_slice(&d, &SlicePredicate::all()).unwrap();
        assert_eq!(s.size(), 6);
        assert!(c.is_empty());
    }

    #[test]
    fn conjunction_with_numeric_value() {
        // Rows with Gender=M: e1, e2, e3, all aged 20.
        let d = table1_fixture();
        let p = SlicePredicate::new(vec![
            Literal::eq("Gender", Value::cat("M")),
            Literal::eq("Age", Value::Num(20.0)),
        ])
        .unwrap();
        let (s, _) = apply_slice(&d, &p).unwrap();
        assert_eq!(s.members, vec![0, 1, 2]);
    }

    #[test]
    fn bins_and_negation() {
        let d = table1_fixture();
        let p = SlicePredicate::new(vec![Literal::bin("Age", 2)]).unwrap();
        let (s, _) = apply_slice(&d, &p).unwrap();
        assert_eq!(s.members, vec![4, 5]);
        let p = SlicePredicate::new(vec![Literal {
            feature: "Age".into(),
            test: Test::NotInBin(2),
        }])
        .unwrap();
        assert_eq!(apply_slice(&d, &p).unwrap().0.members, vec![0, 1, 2, 3]);
        assert_eq!(
            SlicePredicate::new(vec![Literal::bin("Age", 1)])
                .unwrap()
                .describe(&d),
            "Age in [25, 35)"
        );
    }

    #[test]
    fn unknown_feature_and_duplicate_literal() {
        let d = table1_fixture();
        let p = SlicePredicate::new(vec![Literal::eq("Height", Value::Num(1.0))]).unwrap();
        assert!(matches!(apply_slice(&d, &p), Err(Error::UnknownFeature(_))));
        assert!(SlicePredicate::new(vec![
            Literal::eq("Age", Value::Num(1.0)),
            Literal::bin("Age", 0)
        ])
        .is_err());
    }
}
