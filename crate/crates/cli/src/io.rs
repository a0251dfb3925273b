use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use raikit::dataset::{load_csv, write_csv, write_csv_to, Dataset, Schema};
use raikit::plotdata::{emit_plot_data, PlotKind, Trace};

use crate::DataArgs;

/// `dir/stem.csv` + `suffix` → `dir/stem.suffix`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn load_dataset(args: &DataArgs) -> Result<Dataset> {
    let schema_path = args
        .schema
        .clone()
        .unwrap_or_else(|| sibling(&args.data, "schema.json"));
    let schema = Schema::from_json_file(&schema_path)
        .with_context(|| format!("reading schema {}", schema_path.display()))?;
    load_csv(&args.data, &schema).with_context(|| format!("reading {}", args.data.display()))
}

/// CSV to `out` plus its schema sidecar, or CSV alone to stdout.
pub fn emit_dataset(out: Option<&Path>, d: &Dataset) -> Result<()> {
    match out {
        Some(p) => {
            write_csv(d, p).with_context(|| format!("writing {}", p.display()))?;
            write_json(&sibling(p, "schema.json"), d.schema())
        }
        None => Ok(write_csv_to(d, std::io::stdout().lock())?),
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One 0/1 prediction per line after a header line.
pub fn read_predictions(path: &Path) -> Result<Vec<u8>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let v = line.trim();
        if v.is_empty() {
            continue;
        }
        match v {
            "0" => out.push(0),
            "1" => out.push(1),
            other => bail!(
                "{}:{}: prediction `{other}` is not 0 or 1",
                path.display(),
                k + 1
            ),
        }
    }
    Ok(out)
}

pub fn write_plot(path: &Path, trace: Trace<'_>, kind: PlotKind) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(emit_plot_data(trace, kind, f)?)
}
