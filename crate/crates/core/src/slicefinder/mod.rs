//! Discovery of problematic slices: predicates on which a model's loss is
//! markedly and significantly worse than on the rest of the data.

mod planted;
mod search;
mod stats;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use planted::{default_plant, gen_planted, second_plant, AGE_BINS, REGIONS};
pub use search::{
    decision_tree_search, lattice_search, rank, CandidateSlice, SearchConfig, SearchOutcome,
};
pub use stats::{
    effect_size, effect_size_from, inc_beta, significance_test, student_t_cdf, welch_p_value,
    Alternative, Summary,
};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::metrics::per_example_losses;
use crate::model::{predict, Model};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Tree,
    #[default]
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceReport {
    pub strategy: Strategy,
    pub evaluated: usize,
    pub tested: usize,
    pub count: usize,
    /// Pairs of reported slices that share at least one row.
    pub overlapping_pairs: usize,
    pub slices: Vec<CandidateSlice>,
}

impl SliceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// Fixed-width text table, one slice per line.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<48} {:>6} {:>9} {:>9} {:>8} {:>10} {:>9}\n",
            "slice", "size", "loss", "rest", "effect", "p", "impact"
        );
        for s in &self.slices {
            let _ = writeln!(
                out,
                "{:<48} {:>6} {:>9.4} {:>9.4} {:>8.3} {:>10.3e} {:>9.3}",
                s.description,
                s.size,
                s.slice_loss,
                s.complement_loss,
                s.effect_size,
                s.p_value,
                s.impact
            );
        }
        out
    }
}

fn overlapping_pairs(slices: &[CandidateSlice]) -> usize {
    let sets: Vec<BTreeSet<usize>> = slices
        .iter()
        .map(|s| s.members.iter().copied().collect())
        .collect();
    let mut pairs = 0;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if !sets[i].is_disjoint(&sets[j]) {
                pairs += 1;
            }
        }
    }
    pairs
}

/// Runs one search strategy on precomputed per-example losses.
pub fn find_problematic_with_losses(
    d: &Dataset,
    losses: &[f64],
    cfg: &SearchConfig,
    strategy: Strategy,
) -> Result<SliceReport> {
    let outcome = match strategy {
        Strategy::Tree => decision_tree_search(d, losses, cfg)?,
        Strategy::Lattice => lattice_search(d, losses, cfg)?,
    };
    Ok(SliceReport {
        strategy,
        evaluated: outcome.evaluated,
        tested: outcome.tested,
        count: outcome.slices.len(),
        overlapping_pairs: overlapping_pairs(&outcome.slices),
        slices: outcome.slices,
    })
}

/// Scores `model` on `d` and searches for problematic slices.
pub fn find_problematic(
    d: &Dataset,
    model: &Model,
    cfg: &SearchConfig,
    strategy: Strategy,
) -> Result<SliceReport> {
    let losses = per_example_losses(&predict(model, d)?, d)?;
    find_problematic_with_losses(d, &losses, cfg, strategy)
}

/// How two reports relate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyComparison {
    pub tree: usize,
    pub lattice: usize,
    /// Predicates reported by both.
    pub shared: usize,
    /// (tree slice, lattice slice) pairs sharing at least one row.
    pub overlapping_pairs: usize,
}

pub fn compare_reports(tree: &SliceReport, lattice: &SliceReport) -> StrategyComparison {
    let names: BTreeSet<&str> = lattice
        .slices
        .iter()
        .map(|s| s.description.as_str())
        .collect();
    let lattice_sets: Vec<BTreeSet<usize>> = lattice
        .slices
        .iter()
        .map(|s| s.members.iter().copied().collect())
        .collect();
    let mut overlapping = 0;
    for t in &tree.slices {
        let set: BTreeSet<usize> = t.members.iter().copied().collect();
        overlapping += lattice_sets.iter().filter(|l| !l.is_disjoint(&set)).count();
    }
    StrategyComparison {
        tree: tree.count,
        lattice: lattice.count,
        shared: tree
            .slices
            .iter()
            .filter(|s| names.contains(s.description.as_str()))
            .count(),
        overlapping_pairs: overlapping,
    }
}
