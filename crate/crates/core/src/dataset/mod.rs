//! Data model shared by every mechanism: schema-checked weighted examples with
//! a designated sensitive attribute, CSV ingestion, and conjunctive slicing.

mod csvio;
mod fixtures;
mod poison;
mod slice;
mod synth;

pub use csvio::{load_csv, read_csv, write_csv, write_csv_to};
pub use fixtures::{fig2_fixture, poisoned_fig2_fixture, table1_fixture, FIG2_POISONED_POSITIONS};
pub use poison::{flip_labels_at, poison_label_flip, FlipStrategy};
pub use slice::{apply_slice, CompiledPredicate, Literal, Slice, SlicePredicate, Test};
pub use synth::{gen_synthetic, GroupParams, SyntheticParams};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a feature is stored and sliced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    /// Token-valued; `vocab` fixes the one-hot layout. An empty vocabulary is
    /// filled from the data (sorted) when the dataset is built.
    Categorical {
        #[serde(default)]
        vocab: Vec<String>,
    },
    /// Finite real; `bins` are ascending edges used only for slicing.
    Numeric {
        #[serde(default)]
        bins: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureDecl {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric { bins: Vec::new() },
        }
    }

    pub fn binned(name: impl Into<String>, bins: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric { bins },
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        vocab: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                vocab: vocab.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric { .. })
    }

    /// Bin index of `x`: the number of edges `<= x`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        match &self.kind {
            FeatureKind::Numeric { bins } if !bins.is_empty() => {
                Some(bins.iter().take_while(|&&e| e <= x).count())
            }
            _ => None,
        }
    }
}

/// Schema plus column roles. This is also the JSON sidecar format read next
/// to a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureDecl>,
    /// Column holding the sensitive attribute Z.
    pub sensitive: String,
    /// Group vocabulary; index 0 is "Z=0". Inferred (sorted) when empty.
    #[serde(default)]
    pub groups: Vec<String>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default = "default_weight_column")]
    pub weight: String,
}

fn default_weight_column() -> String {
    "weight".to_string()
}

impl Schema {
    pub fn new(features: Vec<FeatureDecl>, sensitive: &str, groups: &[&str], label: &str) -> Self {
        Self {
            features,
            sensitive: sensitive.to_string(),
            groups: groups.iter().map(|g| g.to_string()).collect(),
            label: label.to_string(),
            id: None,
            weight: default_weight_column(),
        }
    }

    pub fn with_id(mut self, column: &str) -> Self {
        self.id = Some(column.to_string());
        self
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A feature value: a categorical token or a finite real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn cat(s: impl Into<String>) -> Self {
        Value::Cat(s.into())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

/// One weighted, labeled record. `features` is aligned with the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub features: Vec<Value>,
    /// Index into the schema's group list.
    pub group: usize,
    pub label: u8,
    pub weight: f64,
}

/// An ordered, schema-validated collection of examples. Immutable once built;
/// every transformation produces a new dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    examples: Vec<Example>,
}

impl Dataset {
    /// Validates every example against `schema`. Empty categorical vocabularies
    /// and an empty group list are not allowed here; see [`Dataset::infer`].
    pub fn new(schema: Schema, examples: Vec<Example>) -> Result<Self> {
        if schema.groups.is_empty() {
            return Err(Error::Schema("group set is empty".into()));
        }
        let unique: BTreeSet<&String> = schema.groups.iter().collect();
        if unique.len() != schema.groups.len() {
            return Err(Error::Schema("duplicate group names".into()));
        }
        let mut names = BTreeSet::new();
        for f in &schema.features {
            if f.name == schema.sensitive
                || f.name == schema.label
                || !names.insert(f.name.as_str())
            {
                return Err(Error::Schema(format!(
                    "feature `{}` declared twice or clashes with a role column",
                    f.name
                )));
            }
            if let FeatureKind::Numeric { bins } = &f.kind {
                if bins.windows(2).any(|w| w[0] >= w[1]) || bins.iter().any(|b| !b.is_finite()) {
                    return Err(Error::Schema(format!(
                        "bin edges of `{}` must be finite and strictly ascending",
                        f.name
                    )));
                }
            }
        }
        for (i, ex) in examples.iter().enumerate() {
            check_example(&schema, ex)
                .map_err(|reason| Error::MalformedRow { row: i + 1, reason })?;
        }
        Ok(Self { schema, examples })
    }

    /// Like [`Dataset::new`] but fills empty categorical vocabularies (sorted
    /// distinct values) first.
    pub fn infer(mut schema: Schema, examples: Vec<Example>) -> Result<Self> {
        for (j, f) in schema.features.iter_mut().enumerate() {
            if let FeatureKind::Categorical { vocab } = &mut f.kind {
                if vocab.is_empty() {
                    let seen: BTreeSet<String> = examples
                        .iter()
                        .filter_map(|e| {
                            e.features
                                .get(j)
                                .and_then(|v| v.as_cat())
                                .map(str::to_string)
                        })
                        .collect();
                    *vocab = seen.into_iter().collect();
                }
            }
        }
        Self::new(schema, examples)
    }

    /// Same schema, different rows.
    pub fn with_examples(&self, examples: Vec<Example>) -> Result<Self> {
        Self::new(self.schema.clone(), examples)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.schema.groups.len()
    }

    pub fn group_name(&self, z: usize) -> &str {
        &self.schema.groups[z]
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.examples.iter().map(|e| e.weight).sum()
    }

    /// Indices of examples in group `z` with label `y`.
    pub fn cell(&self, z: usize, y: u8) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.group == z && e.label == y)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn group_members(&self, z: usize) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.group == z)
            .map(|(i, _)| i)
            .collect()
    }

    /// Appends rows from another dataset with an identical schema.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.schema != other.schema {
            return Err(Error::Schema(
                "cannot concatenate datasets with different schemas".into(),
            ));
        }
        let mut examples = self.examples.clone();
        examples.extend(other.examples.iter().cloned());
        Ok(Self {
            schema: self.schema.clone(),
            examples,
        })
    }
}

fn check_example(schema: &Schema, ex: &Example) -> std::result::Result<(), String> {
    if ex.features.len() != schema.features.len() {
        return Err(format!(
            "expected {} feature values, got {}",
            schema.features.len(),
            ex.features.len()
        ));
    }
    for (decl, v) in schema.features.iter().zip(&ex.features) {
        match (&decl.kind, v) {
            (FeatureKind::Numeric { .. }, Value::Num(x)) if x.is_finite() => {}
            (FeatureKind::Numeric { .. }, _) => {
                return Err(format!("`{}` must be a finite number", decl.name))
            }
            (FeatureKind::Categorical { vocab }, Value::Cat(s)) => {
                if !vocab.iter().any(|t| t == s) {
                    return Err(format!("`{}`: value `{s}` not in vocabulary", decl.name));
                }
            }
            (FeatureKind::Categorical { .. }, Value::Num(_)) => {
                return Err(format!("`{}` must be categorical", decl.name))
            }
        }
    }
    if ex.group >= schema.groups.len() {
        return Err(format!("group index {} out of range", ex.group));
    }
    if ex.label > 1 {
        return Err(format!("label {} not in {{0,1}}", ex.label));
    }
    if !(ex.weight.is_finite() && ex.weight >= 0.0) {
        return Err(format!("weight {} must be finite and >= 0", ex.weight));
    }
    Ok(())
}
