use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Column {
    /// Standardized numeric column.
    Numeric { name: String, mean: f64, scale: f64 },
    /// One indicator per vocabulary entry.
    Categorical { name: String, vocab: Vec<String> },
    /// One indicator per group of the sensitive attribute.
    Sensitive { name: String, groups: Vec<String> },
}

/// Maps examples to dense numeric rows: numeric features standardized with
/// the training mean/sd, categoricals one-hot over the declared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<Column>,
}

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn from_rows(cols: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged design rows");
            data.extend_from_slice(r);
        }
        Self { cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl Encoder {
    /// Fits standardization statistics on `d`. With `include_sensitive` the
    /// group indicator is appended as extra columns.
    pub fn fit(d: &Dataset, include_sensitive: bool) -> Self {
        let schema = d.schema();
        let mut columns = Vec::new();
        for (j, f) in schema.features.iter().enumerate() {
            match &f.kind {
                FeatureKind::Numeric { .. } => {
                    let n = d.len().max(1) as f64;
                    let xs = d.examples().iter().filter_map(|e| e.features[j].as_num());
                    let mean = xs.clone().sum::<f64>() / n;
                    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    columns.push(Column::Numeric {
                        name: f.name.clone(),
                        mean,
                        scale: if sd > 1e-12 { sd } else { 1.0 },
                    });
                }
                FeatureKind::Categorical { vocab } => columns.push(Column::Categorical {
                    name: f.name.clone(),
                    vocab: vocab.clone(),
                }),
            }
        }
        if include_sensitive {
            columns.push(Column::Sensitive {
                name: schema.sensitive.clone(),
                groups: schema.groups.clone(),
            });
        }
        Self { columns }
    }

    pub fn dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                Column::Numeric { .. } => 1,
                Column::Categorical { vocab, .. } => vocab.len(),
                Column::Sensitive { groups, .. } => groups.len(),
            })
            .sum()
    }

    /// Encodes every example of `d`; fails when `d` lacks a column this
    /// encoder was fitted on.
    pub fn encode(&self, d: &Dataset) -> Result<Design> {
        let schema = d.schema();
        let mut lookups = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let idx = match c {
                Column::Numeric { name, .. } | Column::Categorical { name, .. } => Some(
                    schema
                        .feature_index(name)
                        .ok_or_else(|| Error::UnknownFeature(name.clone()))?,
                ),
                Column::Sensitive { name, .. } => {
                    if *name != schema.sensitive {
                        return Err(Error::UnknownFeature(name.clone()));
                    }
                    None
                }
            };
            lookups.push(idx);
        }
        let cols = self.dim();
        let mut data = Vec::with_capacity(d.len() * cols);
        for e in d.examples() {
            for (c, idx) in self.columns.iter().zip(&lookups) {
                match c {
                    Column::Numeric { mean, scale, name } => {
                        let x = e.features[idx.unwrap()]
                            .as_num()
                            .ok_or_else(|| Error::Schema(format!("`{name}` is not numeric")))?;
                        data.push((x - mean) / scale);
                    }
                    Column::Categorical { vocab, .. } => {
                        let v = &e.features[idx.unwrap()];
                        data.extend(vocab.iter().map(|t| match v {
                            Value::Cat(s) if s == t => 1.0,
                            _ => 0.0,
                        }));
                    }
                    Column::Sensitive { groups, .. } => {
                        let g = d.group_name(e.group);
                        data.extend(groups.iter().map(|t| if t == g { 1.0 } else { 0.0 }));
                    }
                }
            }
        }
        Ok(Design { cols, data })
    }
}
