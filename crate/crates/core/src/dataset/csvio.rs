use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Example, FeatureKind, Schema, Value};
use crate::error::{Error, Result};

enum Column {
    Feature(usize),
    Sensitive,
    Label,
    Id,
    Weight,
}

/// Reads a header-first CSV file laid out according to `schema`.
///
/// The weight column is optional (every weight defaults to 1.0). Errors name
/// the 1-based data row.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut columns = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let col = if let Some(j) = schema.feature_index(h) {
            Column::Feature(j)
        } else if h == schema.sensitive {
            Column::Sensitive
        } else if h == schema.label {
            Column::Label
        } else if schema.id.as_deref() == Some(h) {
            Column::Id
        } else if h == schema.weight {
            Column::Weight
        } else {
            return Err(Error::Schema(format!("unexpected column `{h}` in header")));
        };
        columns.push(col);
    }
    for f in &schema.features {
        if !headers.iter().any(|h| h == f.name) {
            return Err(Error::Schema(format!("missing column `{}`", f.name)));
        }
    }
    for role in [&schema.sensitive, &schema.label] {
        if !headers.iter().any(|h| h == role) {
            return Err(Error::Schema(format!("missing column `{role}`")));
        }
    }

    struct Raw {
        id: Option<String>,
        features: Vec<Value>,
        group: String,
        label: u8,
        weight: f64,
    }

    let mut raws = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let bad = |reason: String| Error::MalformedRow { row, reason };
        if record.len() != columns.len() {
            return Err(bad(format!(
                "expected {} fields, got {}",
                columns.len(),
                record.len()
            )));
        }
        let mut features = vec![Value::Num(0.0); schema.features.len()];
        let mut raw = Raw {
            id: None,
            features: Vec::new(),
            group: String::new(),
            label: 0,
            weight: 1.0,
        };
        for (col, field) in columns.iter().zip(record.iter()) {
            match col {
                Column::Feature(j) => {
                    features[*j] = match schema.features[*j].kind {
                        FeatureKind::Numeric { .. } => {
                            let x: f64 = field
                                .parse()
                                .map_err(|_| bad(format!("cannot parse `{field}` as a number")))?;
                            if !x.is_finite() {
                                return Err(bad(format!("non-finite value `{field}`")));
                            }
                            Value::Num(x)
                        }
                        FeatureKind::Categorical { .. } => Value::cat(field),
                    }
                }
                Column::Sensitive => raw.group = field.to_string(),
                Column::Label => {
                    raw.label = match field {
                        "0" => 0,
                        "1" => 1,
                        other => return Err(bad(format!("label `{other}` not in {{0,1}}"))),
                    }
                }
                Column::Id => raw.id = Some(field.to_string()),
                Column::Weight => {
                    raw.weight = field
                        .parse()
                        .map_err(|_| bad(format!("cannot parse weight `{field}`")))?;
                }
            }
        }
        raw.features = features;
        raws.push(raw);
    }

    let mut schema = schema.clone();
    if schema.groups.is_empty() {
        let seen: BTreeSet<&str> = raws.iter().map(|r| r.group.as_str()).collect();
        schema.groups = seen.into_iter().map(str::to_string).collect();
        if schema.groups.is_empty() {
            return Err(Error::Schema(
                "group set is empty and no rows to infer it from".into(),
            ));
        }
    }
    let mut examples = Vec::with_capacity(raws.len());
    for (i, raw) in raws.into_iter().enumerate() {
        let group = schema
            .group_index(&raw.group)
            .ok_or_else(|| Error::MalformedRow {
                row: i + 1,
                reason: format!("unknown group `{}`", raw.group),
            })?;
        examples.push(Example {
            id: raw.id.unwrap_or_else(|| (i + 1).to_string()),
            features: raw.features,
            group,
            label: raw.label,
            weight: raw.weight,
        });
    }
    Dataset::infer(schema, examples)
}

/// Writes the dataset with every column, including weights.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(d, file)
}

pub fn write_csv_to<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let schema = d.schema();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = Vec::new();
    if let Some(id) = &schema.id {
        header.push(id);
    }
    header.extend(schema.features.iter().map(|f| f.name.as_str()));
    header.push(&schema.sensitive);
    header.push(&schema.label);
    header.push(&schema.weight);
    w.write_record(&header)?;
    for ex in d.examples() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if schema.id.is_some() {
            rec.push(ex.id.clone());
        }
        rec.extend(ex.features.iter().map(|v| v.to_string()));
        rec.push(d.group_name(ex.group).to_string());
        rec.push(ex.label.to_string());
        rec.push(ex.weight.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
