use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{effect_size_from, welch_p_value, Alternative, Summary};
use crate::dataset::{Dataset, FeatureKind, Literal, SlicePredicate, Test, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Most literals in one predicate (lattice level / tree depth).
    pub max_literals: usize,
    pub min_size: usize,
    pub effect_threshold: f64,
    pub alpha: f64,
    pub max_results: usize,
    pub alternative: Alternative,
    /// Offer the sensitive attribute as a slicing column.
    pub include_sensitive: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_literals: 3,
            min_size: 30,
            effect_threshold: 0.4,
            alpha: 0.05,
            max_results: 10,
            alternative: Alternative::TwoSided,
            include_sensitive: true,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.max_literals == 0 || self.min_size == 0 {
            return Err(Error::invalid("max literals and min size must be >= 1"));
        }
        if !(self.effect_threshold > 0.0) {
            return Err(Error::invalid("effect-size threshold must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A tested slice with its loss statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSlice {
    #[serde(skip)]
    pub predicate: SlicePredicate,
    #[serde(rename = "predicate")]
    pub description: String,
    pub size: usize,
    pub slice_loss: f64,
    pub complement_loss: f64,
    /// `+inf`/`-inf` serialize as `null`.
    pub effect_size: f64,
    pub p_value: f64,
    /// `size × (slice_loss − complement_loss)`.
    pub impact: f64,
    /// Row positions of the slice's members.
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// Problematic slices plus how many candidates were looked at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub slices: Vec<CandidateSlice>,
    /// Predicates that met the size floor.
    pub evaluated: usize,
    /// Predicates that got a significance test; the Bonferroni divisor.
    pub tested: usize,
}

/// One slicing column: the sensitive attribute, a categorical feature, or a
/// binned numeric feature. `codes[i]` is the value index of row `i`.
struct Column {
    name: String,
    values: Vec<Value>,
    binned: bool,
    codes: Vec<usize>,
}

const NO_VALUE: usize = usize::MAX;

impl Column {
    fn eq(&self, v: usize) -> Literal {
        if self.binned {
            Literal::bin(self.name.clone(), v)
        } else {
            Literal::eq(self.name.clone(), self.values[v].clone())
        }
    }

    fn not_eq(&self, v: usize) -> Literal {
        Literal {
            feature: self.name.clone(),
            test: if self.binned {
                Test::NotInBin(v)
            } else {
                Test::NotEquals(self.values[v].clone())
            },
        }
    }
}

fn columns(d: &Dataset, include_sensitive: bool) -> Result<Vec<Column>> {
    let schema = d.schema();
    let mut cols = Vec::new();
    for (j, f) in schema.features.iter().enumerate() {
        let col = match &f.kind {
            FeatureKind::Categorical { vocab } => Column {
                name: f.name.clone(),
                values: vocab.iter().map(|v| Value::cat(v.clone())).collect(),
                binned: false,
                codes: d
                    .examples()
                    .iter()
                    .map(|e| {
                        e.features[j]
                            .as_cat()
                            .and_then(|s| vocab.iter().position(|v| v == s))
                            .unwrap_or(NO_VALUE)
                    })
                    .collect(),
            },
            FeatureKind::Numeric { bins } if !bins.is_empty() => Column {
                name: f.name.clone(),
                values: (0..=bins.len()).map(|b| Value::Num(b as f64)).collect(),
                binned: true,
                codes: d
                    .examples()
                    .iter()
                    .map(|e| {
                        e.features[j]
                            .as_num()
                            .and_then(|x| f.bin_of(x))
                            .unwrap_or(NO_VALUE)
                    })
                    .collect(),
            },
            FeatureKind::Numeric { .. } => continue,
        };
        cols.push(col);
    }
    if include_sensitive {
        cols.push(Column {
            name: schema.sensitive.clone(),
            values: schema
                .groups
                .iter()
                .map(|g| Value::cat(g.clone()))
                .collect(),
            binned: false,
            codes: d.examples().iter().map(|e| e.group).collect(),
        });
    }
    if cols.is_empty() {
        return Err(Error::invalid(
            "no categorical or binned columns to slice on",
        ));
    }
    Ok(cols)
}

struct Scored {
    candidate: CandidateSlice,
    tested: bool,
}

fn score(
    d: &Dataset,
    losses: &[f64],
    lits: Vec<Literal>,
    members: Vec<usize>,
    alt: Alternative,
) -> Result<Scored> {
    let mut inside = vec![false; losses.len()];
    for &i in &members {
        inside[i] = true;
    }
    let slice: Vec<f64> = members.iter().map(|&i| losses[i]).collect();
    let rest: Vec<f64> = (0..losses.len())
        .filter(|&i| !inside[i])
        .map(|i| losses[i])
        .collect();
    let predicate = SlicePredicate::new(lits)?;
    let description = predicate.describe(d);
    let a = Summary::of(&slice);
    let tested = slice.len() >= 2 && rest.len() >= 2;
    let (b, effect, p) = if rest.is_empty() {
        (
            Summary {
                n: 0,
                mean: f64::NAN,
                var: f64::NAN,
            },
            f64::NAN,
            f64::NAN,
        )
    } else {
        let b = Summary::of(&rest);
        let p = if tested {
            welch_p_value(a, b, alt)
        } else {
            f64::NAN
        };
        (b, effect_size_from(a, b), p)
    };
    Ok(Scored {
        candidate: CandidateSlice {
            predicate,
            description,
            size: members.len(),
            slice_loss: a.mean,
            complement_loss: b.mean,
            effect_size: effect,
            p_value: p,
            impact: members.len() as f64 * (a.mean - b.mean),
            members,
        },
        tested,
    })
}

fn is_problematic(s: &Scored, cfg: &SearchConfig, tested: usize) -> bool {
    s.tested
        && s.candidate.effect_size >= cfg.effect_threshold
        && s.candidate.p_value <= cfg.alpha / tested as f64
}

/// Highest impact first, then fewer literals, then predicate text.
pub fn rank(a: &CandidateSlice, b: &CandidateSlice) -> Ordering {
    b.impact
        .total_cmp(&a.impact)
        .then(a.predicate.len().cmp(&b.predicate.len()))
        .then_with(|| a.predicate.to_string().cmp(&b.predicate.to_string()))
}

fn check_losses(d: &Dataset, losses: &[f64]) -> Result<()> {
    if losses.len() != d.len() {
        return Err(Error::LengthMismatch {
            expected: d.len(),
            got: losses.len(),
        });
    }
    Ok(())
}

struct Node {
    lits: Vec<(usize, usize)>,
    members: Vec<usize>,
}

/// Breadth-first search over conjunctions of column-value equalities. Every
/// predicate with at most `max_literals` literals (columns in schema order)
/// and at least `min_size` members is scored exactly once; smaller ones are
/// pruned together with their refinements.
pub fn lattice_search(d: &Dataset, losses: &[f64], cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    check_losses(d, losses)?;
    let cols = columns(d, cfg.include_sensitive)?;
    let children = |node: &Node| -> Vec<Node> {
        let start = node.lits.last().map_or(0, |&(c, _)| c + 1);
        let mut out = Vec::new();
        for (c, col) in cols.iter().enumerate().skip(start) {
            for v in 0..col.values.len() {
                let members: Vec<usize> = node
                    .members
                    .iter()
                    .copied()
                    .filter(|&i| col.codes[i] == v)
                    .collect();
                if members.len() >= cfg.min_size {
                    let mut lits = node.lits.clone();
                    lits.push((c, v));
                    out.push(Node { lits, members });
                }
            }
        }
        out
    };
    let root = Node {
        lits: Vec::new(),
        members: (0..d.len()).collect(),
    };
    let mut level = children(&root);
    let mut scored: Vec<Scored> = Vec::new();
    for depth in 1..=cfg.max_literals {
        let batch = level
            .par_iter()
            .map(|n| {
                let lits = n.lits.iter().map(|&(c, v)| cols[c].eq(v)).collect();
                score(d, losses, lits, n.members.clone(), cfg.alternative)
            })
            .collect::<Result<Vec<Scored>>>()?;
        scored.extend(batch);
        if depth == cfg.max_literals {
            break;
        }
        level = level.par_iter().flat_map_iter(children).collect();
    }
    let tested = scored.iter().filter(|s| s.tested).count();
    let evaluated = scored.len();
    let mut slices: Vec<CandidateSlice> = scored
        .iter()
        .filter(|s| is_problematic(s, cfg, tested))
        .map(|s| s.candidate.clone())
        .collect();
    slices.sort_by(rank);
    slices.truncate(cfg.max_results);
    Ok(SearchOutcome {
        slices,
        evaluated,
        tested,
    })
}

struct TreeNode {
    scored: Option<Scored>,
    children: Vec<usize>,
}

fn sse(losses: &[f64], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let mean = members.iter().map(|&i| losses[i]).sum::<f64>() / members.len() as f64;
    members.iter().map(|&i| (losses[i] - mean).powi(2)).sum()
}

/// Greedy binary tree on `column = value` / `column != value` tests chosen by
/// the largest drop in squared deviation of the loss. Each column is used at
/// most once on a path. Reports the shallowest problematic node on every
/// root-to-leaf path, so results never overlap.
pub fn decision_tree_search(
    d: &Dataset,
    losses: &[f64],
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    check_losses(d, losses)?;
    let cols = columns(d, cfg.include_sensitive)?;
    let mut nodes = vec![TreeNode {
        scored: None,
        children: Vec::new(),
    }];
    // (node index, literals, used columns, members, depth)
    let mut stack = vec![(
        0usize,
        Vec::<Literal>::new(),
        vec![false; cols.len()],
        (0..d.len()).collect::<Vec<_>>(),
        0,
    )];
    while let Some((id, lits, used, members, depth)) = stack.pop() {
        if depth == cfg.max_literals {
            continue;
        }
        let parent = sse(losses, &members);
        let best = cols
            .par_iter()
            .enumerate()
            .filter(|(c, _)| !used[*c])
            .flat_map_iter(|(c, col)| (0..col.values.len()).map(move |v| (c, col, v)))
            .filter_map(|(c, col, v)| {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| col.codes[i] == v);
                if left.len() < cfg.min_size || right.len() < cfg.min_size {
                    return None;
                }
                let gain = parent - sse(losses, &left) - sse(losses, &right);
                Some((gain, c, v, left, right))
            })
            .collect::<Vec<_>>()
            .into_iter()
            // First best in column/value order.
            .fold(
                None::<(f64, usize, usize, Vec<usize>, Vec<usize>)>,
                |acc, cand| match acc {
                    Some(a) if a.0 >= cand.0 => Some(a),
                    _ => Some(cand),
                },
            );
        let Some((gain, c, v, left, right)) = best else {
            continue;
        };
        if !(gain > 1e-12 * parent.max(1e-300)) {
            continue;
        }
        let mut used = used;
        used[c] = true;
        for (lit, part) in [(cols[c].eq(v), left), (cols[c].not_eq(v), right)] {
            let mut path = lits.clone();
            path.push(lit);
            let s = score(d, losses, path.clone(), part.clone(), cfg.alternative)?;
            nodes.push(TreeNode {
                scored: Some(s),
                children: Vec::new(),
            });
            let child = nodes.len() - 1;
            nodes[id].children.push(child);
            stack.push((child, path, used.clone(), part, depth + 1));
        }
    }
    let tested = nodes
        .iter()
        .filter(|n| n.scored.as_ref().is_some_and(|s| s.tested))
        .count();
    let mut slices = Vec::new();
    let mut walk = vec![0usize];
    while let Some(id) = walk.pop() {
        match &nodes[id].scored {
            Some(s) if is_problematic(s, cfg, tested) => slices.push(s.candidate.clone()),
            _ => walk.extend(nodes[id].children.iter().copied()),
        }
    }
    slices.sort_by(rank);
    slices.truncate(cfg.max_results);
    Ok(SearchOutcome {
        slices,
        evaluated: nodes.len() - 1,
        tested,
    })
}
