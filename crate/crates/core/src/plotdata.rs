//! Tidy CSV exports of training and planning traces, one row per point.
//!
//! | kind           | columns                          | source                |
//! |----------------|----------------------------------|-----------------------|
//! | learning-curve | `slice,n,loss`                   | [`PlanTrace`]         |
//! | lambda-path    | `epoch,lambda1,lambda2,disparity`| FairBatch trajectory  |
//! | tradeoff       | `label,accuracy,dp`              | tradeoff points, or FR-Train diagnostics (one row per epoch) |

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairbatch::{write_trajectory_csv, LambdaPoint};
use crate::frtrain::FRDiagnostics;
use crate::slicetuner::PlanTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    LearningCurve,
    LambdaPath,
    Tradeoff,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learning-curve" => Ok(Self::LearningCurve),
            "lambda-path" => Ok(Self::LambdaPath),
            "tradeoff" => Ok(Self::Tradeoff),
            other => Err(Error::invalid(format!("unknown plot kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub label: String,
    pub accuracy: f64,
    pub dp: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Trace<'a> {
    Plan(&'a PlanTrace),
    Lambda(&'a [LambdaPoint]),
    Tradeoff(&'a [TradeoffPoint]),
    FrTrain(&'a FRDiagnostics),
}

impl Trace<'_> {
    fn name(&self) -> &'static str {
        match self {
            Trace::Plan(_) => "acquisition plan",
            Trace::Lambda(_) => "FairBatch trajectory",
            Trace::Tradeoff(_) => "tradeoff points",
            Trace::FrTrain(_) => "FR-Train diagnostics",
        }
    }
}

pub fn emit_plot_data<W: Write>(trace: Trace<'_>, kind: PlotKind, w: W) -> Result<()> {
    match (kind, trace) {
        (PlotKind::LearningCurve, Trace::Plan(plan)) => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["slice", "n", "loss"])?;
            for it in &plan.iterations {
                for (slice, pts) in it.points.iter().enumerate() {
                    for &(n, loss) in pts {
                        out.serialize((slice, n, loss))?;
                    }
                }
            }
            out.flush().map_err(|e| Error::io("<csv>", e))
        }
        (PlotKind::LambdaPath, Trace::Lambda(points)) => write_trajectory_csv(points, w),
        (PlotKind::Tradeoff, Trace::Tradeoff(points)) => {
            let rows = points.iter().map(|p| (p.label.clone(), p.accuracy, p.dp));
            write_tradeoff(rows, w)
        }
        (PlotKind::Tradeoff, Trace::FrTrain(diag)) => {
            let rows = diag
                .epochs
                .iter()
                .map(|e| (e.epoch.to_string(), e.accuracy, e.dp));
            write_tradeoff(rows, w)
        }
        (kind, trace) => Err(Error::invalid(format!(
            "plot kind {kind:?} cannot be drawn from {}",
            trace.name()
        ))),
    }
}

fn write_tradeoff<W: Write>(rows: impl Iterator<Item = (String, f64, f64)>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "accuracy", "dp"])?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}
