//! Unified cleaning: cluster, drop anomalies, resolve duplicates within each
//! cluster, then reweigh for demographic parity.

mod reweigh;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use reweigh::{
    reweigh_for_dp, reweigh_for_dp_with, weighted_positive_rates, CellFactor, ReweighScheme,
};

use crate::dataset::{Dataset, Example, FeatureKind, Value};
use crate::error::{Error, Result};

/// Examples land in one cluster when they agree on every `block_on` column
/// (and on the first letter of the name, if set) and are linked through a
/// chain of pairs at distance ≤ `threshold`. Distance sums range-normalized
/// numeric gaps and categorical mismatches over `link_features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterRule {
    /// Feature names or the sensitive column.
    pub block_on: Vec<String>,
    pub name_initial: bool,
    pub link_features: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AnomalyRule {
    /// Values outside `[min, max]` are anomalies.
    Range { feature: String, min: f64, max: f64 },
    /// `|x − median| / (1.4826·MAD) > bound` within the cluster.
    RobustZ { feature: String, bound: f64 },
}

/// Two examples of a cluster describe the same entity when their names are
/// at least `name_similarity` alike (normalized Levenshtein) and every
/// `require_equal` field matches. Differing labels block the merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchRule {
    pub name_similarity: f64,
    pub require_equal: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    /// Categorical feature holding the entity name, if any.
    pub name_field: Option<String>,
    pub cluster: ClusterRule,
    pub anomalies: Vec<AnomalyRule>,
    pub matching: MatchRule,
    pub reweigh: ReweighScheme,
    /// Recorded in the report; the default rules do not consult it.
    pub previous_model: Option<String>,
}

impl Default for ClusterRule {
    fn default() -> Self {
        Self {
            block_on: Vec::new(),
            name_initial: true,
            link_features: Vec::new(),
            threshold: 0.0,
        }
    }
}

impl Default for MatchRule {
    fn default() -> Self {
        Self {
            name_similarity: 0.5,
            require_equal: Vec::new(),
        }
    }
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            name_field: Some("Name".into()),
            cluster: ClusterRule::default(),
            anomalies: Vec::new(),
            matching: MatchRule::default(),
            reweigh: ReweighScheme::default(),
            previous_model: None,
        }
    }
}

impl CleanConfig {
    /// Settings for the six-person example: block on gender and name initial,
    /// ages outside [0, 130] are anomalies, duplicates must share an age.
    pub fn people() -> Self {
        Self {
            cluster: ClusterRule {
                block_on: vec!["Gender".into()],
                ..ClusterRule::default()
            },
            anomalies: vec![AnomalyRule::Range {
                feature: "Age".into(),
                min: 0.0,
                max: 130.0,
            }],
            matching: MatchRule {
                require_equal: vec!["Age".into()],
                ..MatchRule::default()
            },
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.matching.name_similarity) {
            return Err(Error::invalid("name similarity must lie in [0, 1]"));
        }
        if !(self.cluster.threshold >= 0.0) {
            return Err(Error::invalid("cluster threshold must be >= 0"));
        }
        for a in &self.anomalies {
            match a {
                AnomalyRule::Range { min, max, .. } if !(min <= max) => {
                    return Err(Error::invalid("anomaly range needs min <= max"))
                }
                AnomalyRule::RobustZ { bound, .. } if !(*bound > 0.0) => {
                    return Err(Error::invalid("robust z bound must be > 0"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedExample {
    pub id: String,
    pub cluster: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub inputs: Vec<String>,
    pub merged_id: String,
    pub weight: f64,
}

/// A name-and-field match that was not merged because the labels differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedMerge {
    pub ids: [String; 2],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweighReport {
    pub scheme: ReweighScheme,
    pub factors: Vec<CellFactor>,
    pub rates_before: BTreeMap<String, f64>,
    pub rates_after: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// Surviving input ids per cluster, before merging.
    pub clusters: Vec<Vec<String>>,
    pub dropped: Vec<DroppedExample>,
    pub merges: Vec<MergeGroup>,
    pub blocked: Vec<BlockedMerge>,
    pub reweigh: Option<ReweighReport>,
    pub previous_model: Option<String>,
}

impl CleaningReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// A column referenced by name: a schema feature or the sensitive attribute.
#[derive(Clone, Copy)]
enum Col {
    Feature(usize),
    Group,
}

fn resolve(d: &Dataset, name: &str) -> Result<Col> {
    if name == d.schema().sensitive {
        return Ok(Col::Group);
    }
    d.schema()
        .feature_index(name)
        .map(Col::Feature)
        .ok_or_else(|| Error::UnknownFeature(name.to_string()))
}

fn cell(e: &Example, c: Col) -> Value {
    match c {
        Col::Feature(j) => e.features[j].clone(),
        Col::Group => Value::Num(e.group as f64),
    }
}

fn numeric(d: &Dataset, name: &str) -> Result<usize> {
    let j = d
        .schema()
        .feature_index(name)
        .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
    if !d.schema().features[j].is_numeric() {
        return Err(Error::invalid(format!("`{name}` is not numeric")));
    }
    Ok(j)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // Smaller index becomes the root so clusters are ordered by first member.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Clusters as lists of row positions, ordered by first member.
fn clusters(d: &Dataset, cfg: &CleanConfig, name: Option<usize>) -> Result<Vec<Vec<usize>>> {
    let block: Vec<Col> = cfg
        .cluster
        .block_on
        .iter()
        .map(|n| resolve(d, n))
        .collect::<Result<_>>()?;
    let link: Vec<Col> = cfg
        .cluster
        .link_features
        .iter()
        .map(|n| resolve(d, n))
        .collect::<Result<_>>()?;
    let ranges: Vec<f64> = link
        .iter()
        .map(|&c| {
            let xs: Vec<f64> = d
                .examples()
                .iter()
                .filter_map(|e| cell(e, c).as_num())
                .collect();
            let (lo, hi) = xs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
                    (l.min(x), h.max(x))
                });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let key = |e: &Example| -> String {
        let mut k: Vec<String> = block.iter().map(|&c| cell(e, c).to_string()).collect();
        if let (true, Some(j)) = (cfg.cluster.name_initial, name) {
            k.push(
                e.features[j]
                    .to_string()
                    .chars()
                    .next()
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
            );
        }
        k.join("\u{1f}")
    };
    let mut blocks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in d.examples().iter().enumerate() {
        blocks.entry(key(e)).or_default().push(i);
    }
    let distance = |a: &Example, b: &Example| -> f64 {
        link.iter()
            .zip(&ranges)
            .map(|(&c, r)| match (cell(a, c), cell(b, c)) {
                (Value::Num(x), Value::Num(y)) => (x - y).abs() / r,
                (x, y) => f64::from(u8::from(x != y)),
            })
            .sum()
    };
    let mut parent: Vec<usize> = (0..d.len()).collect();
    for members in blocks.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                if distance(&d.examples()[i], &d.examples()[j]) <= cfg.cluster.threshold {
                    union(&mut parent, i, j);
                }
            }
        }
    }
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..d.len() {
        let r = find(&mut parent, i);
        out.entry(r).or_default().push(i);
    }
    Ok(out.into_values().collect())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Reason the example at `i` is anomalous within its cluster, if it is.
fn anomaly(
    d: &Dataset,
    rules: &[(usize, &AnomalyRule)],
    members: &[usize],
    i: usize,
) -> Option<String> {
    let e = &d.examples()[i];
    for &(j, rule) in rules {
        let x = e.features[j].as_num()?;
        match rule {
            AnomalyRule::Range { feature, min, max } => {
                if !(x >= *min && x <= *max) {
                    return Some(format!("{feature}={x} outside [{min}, {max}]"));
                }
            }
            AnomalyRule::RobustZ { feature, bound } => {
                let mut xs: Vec<f64> = members
                    .iter()
                    .filter_map(|&k| d.examples()[k].features[j].as_num())
                    .collect();
                if xs.len() < 3 {
                    continue;
                }
                let med = median(&mut xs);
                let mut dev: Vec<f64> = xs.iter().map(|v| (v - med).abs()).collect();
                let mad = 1.4826 * median(&mut dev);
                if mad > 0.0 && (x - med).abs() / mad > *bound {
                    return Some(format!(
                        "{feature}={x} robust z {:.2} above {bound}",
                        (x - med).abs() / mad
                    ));
                }
            }
        }
    }
    None
}

fn merged_id(ids: &[&str]) -> String {
    let head = |s: &str| {
        s.chars()
            .take_while(|c| !c.is_ascii_digit())
            .collect::<String>()
    };
    let h = head(ids[0]);
    if ids.iter().all(|s| head(s) == h && s.len() > h.len()) {
        let mut out = h.clone();
        for s in ids {
            out.push_str(&s[h.len()..]);
        }
        out
    } else {
        ids.join("+")
    }
}

/// Collapses `group` (same label) into one example at its first position.
fn survivor(d: &Dataset, group: &[usize], name: Option<usize>) -> Example {
    let ex: Vec<&Example> = group.iter().map(|&i| &d.examples()[i]).collect();
    let weight: f64 = ex.iter().map(|e| e.weight).sum();
    let ids: Vec<&str> = ex.iter().map(|e| e.id.as_str()).collect();
    let features = d
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if Some(j) == name {
                return ex
                    .iter()
                    .map(|e| &e.features[j])
                    .min_by(|a, b| a.to_string().cmp(&b.to_string()))
                    .expect("non-empty group")
                    .clone();
            }
            match f.kind {
                FeatureKind::Numeric { .. } => {
                    let w: f64 = ex.iter().map(|e| e.weight).sum();
                    let mean = if w > 0.0 {
                        ex.iter()
                            .map(|e| e.weight * e.features[j].as_num().unwrap_or(f64::NAN))
                            .sum::<f64>()
                            / w
                    } else {
                        ex.iter()
                            .map(|e| e.features[j].as_num().unwrap_or(f64::NAN))
                            .sum::<f64>()
                            / ex.len() as f64
                    };
                    Value::Num(mean)
                }
                FeatureKind::Categorical { .. } => {
                    mode(ex.iter().map(|e| e.features[j].to_string()))
                        .map(Value::Cat)
                        .expect("non-empty group")
                }
            }
        })
        .collect();
    let group_id = mode(ex.iter().map(|e| e.group)).expect("non-empty group");
    Example {
        id: merged_id(&ids),
        features,
        group: group_id,
        label: ex[0].label,
        weight,
    }
}

/// Most frequent item; ties go to the smallest.
fn mode<T: Ord>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for it in items {
        *counts.entry(it).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(k, _)| k)
}

struct ClusterOutcome {
    kept: Vec<usize>,
    dropped: Vec<(usize, String)>,
    /// Row groups to merge, each sorted, in order of first member.
    groups: Vec<Vec<usize>>,
    blocked: Vec<(usize, usize)>,
}

fn clean_cluster(
    d: &Dataset,
    cfg: &CleanConfig,
    rules: &[(usize, &AnomalyRule)],
    name: Option<usize>,
    equal: &[Col],
    members: &[usize],
) -> ClusterOutcome {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &i in members {
        match anomaly(d, rules, members, i) {
            Some(reason) => dropped.push((i, reason)),
            None => kept.push(i),
        }
    }
    let mut parent: Vec<usize> = (0..kept.len()).collect();
    let mut blocked = Vec::new();
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            let (ea, eb) = (&d.examples()[kept[a]], &d.examples()[kept[b]]);
            let names_match = match name {
                Some(j) => {
                    strsim::normalized_levenshtein(
                        &ea.features[j].to_string(),
                        &eb.features[j].to_string(),
                    ) >= cfg.matching.name_similarity
                }
                None => true,
            };
            if !names_match || equal.iter().any(|&c| cell(ea, c) != cell(eb, c)) {
                continue;
            }
            if ea.label != eb.label {
                blocked.push((kept[a], kept[b]));
            } else {
                union(&mut parent, a, b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..kept.len() {
        let r = find(&mut parent, k);
        groups.entry(r).or_default().push(kept[k]);
    }
    ClusterOutcome {
        kept,
        dropped,
        groups: groups.into_values().collect(),
        blocked,
    }
}

/// Cluster, drop anomalies within clusters, and merge duplicates within
/// clusters (weights add up). Nothing is matched across clusters.
pub fn sanitize_and_clean(d: &Dataset, cfg: &CleanConfig) -> Result<(Dataset, CleaningReport)> {
    cfg.validate()?;
    let name = match &cfg.name_field {
        Some(n) => Some(
            d.schema()
                .feature_index(n)
                .ok_or_else(|| Error::UnknownFeature(n.clone()))?,
        ),
        None => None,
    };
    let rules: Vec<(usize, &AnomalyRule)> = cfg
        .anomalies
        .iter()
        .map(|r| {
            let f = match r {
                AnomalyRule::Range { feature, .. } | AnomalyRule::RobustZ { feature, .. } => {
                    feature
                }
            };
            Ok((numeric(d, f)?, r))
        })
        .collect::<Result<_>>()?;
    let equal: Vec<Col> = cfg
        .matching
        .require_equal
        .iter()
        .map(|n| resolve(d, n))
        .collect::<Result<_>>()?;
    let clusters = clusters(d, cfg, name)?;
    let outcomes: Vec<ClusterOutcome> = clusters
        .par_iter()
        .map(|m| clean_cluster(d, cfg, &rules, name, &equal, m))
        .collect();

    let id = |i: usize| d.examples()[i].id.clone();
    let mut report = CleaningReport {
        previous_model: cfg.previous_model.clone(),
        ..CleaningReport::default()
    };
    // Survivors keyed by the position of their first member, to keep input order.
    let mut out: BTreeMap<usize, Example> = BTreeMap::new();
    let mut taken: std::collections::BTreeSet<String> =
        d.examples().iter().map(|e| e.id.clone()).collect();
    for (c, o) in outcomes.iter().enumerate() {
        report
            .clusters
            .push(o.kept.iter().map(|&i| id(i)).collect());
        for (i, reason) in &o.dropped {
            report.dropped.push(DroppedExample {
                id: id(*i),
                cluster: c,
                reason: reason.clone(),
            });
        }
        for &(a, b) in &o.blocked {
            report.blocked.push(BlockedMerge {
                ids: [id(a), id(b)],
                reason: "labels differ".into(),
            });
        }
        for g in &o.groups {
            if g.len() == 1 {
                out.insert(g[0], d.examples()[g[0]].clone());
            } else {
                let mut merged = survivor(d, g, name);
                if taken.contains(&merged.id) {
                    // The compact id would be ambiguous in the audit.
                    let ids: Vec<String> = g.iter().map(|&i| id(i)).collect();
                    merged.id = ids.join("+");
                    let mut k = 1;
                    while taken.contains(&merged.id) {
                        merged.id = format!("{}#{k}", ids.join("+"));
                        k += 1;
                    }
                }
                taken.insert(merged.id.clone());
                report.merges.push(MergeGroup {
                    inputs: g.iter().map(|&i| id(i)).collect(),
                    merged_id: merged.id.clone(),
                    weight: merged.weight,
                });
                out.insert(g[0], merged);
            }
        }
    }
    report.clusters.retain(|c| !c.is_empty());
    Ok((d.with_examples(out.into_values().collect())?, report))
}

/// Cleaning first, then reweighing for demographic parity.
pub fn mlclean_pipeline(d: &Dataset, cfg: &CleanConfig) -> Result<(Dataset, CleaningReport)> {
    let (cleaned, mut report) = sanitize_and_clean(d, cfg)?;
    let rates_before = weighted_positive_rates(&cleaned);
    let (out, factors) = reweigh_for_dp_with(&cleaned, cfg.reweigh)?;
    report.reweigh = Some(ReweighReport {
        scheme: cfg.reweigh,
        factors,
        rates_before,
        rates_after: weighted_positive_rates(&out),
    });
    Ok((out, report))
}
