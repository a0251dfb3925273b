use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alloc::{
    baseline_uniform, baseline_waterfilling, imbalance_ratio, integerize, optimize_allocation,
    AcquisitionProblem, Allocation, SliceState,
};
use super::curve::{fit_learning_curve, CurveFit};
use crate::dataset::{CompiledPredicate, Dataset, Example, SlicePredicate};
use crate::error::{Error, Result};
use crate::metrics::{equalized_error_rate_gap, log_loss};
use crate::model::{predict, train_vanilla, TrainConfig};
use crate::rng;

/// Supplies new labeled examples for a slice on demand.
pub trait Provider {
    /// Up to `count` examples of slice `slice`; fewer means the source ran dry.
    fn acquire(&mut self, slice: usize, count: usize) -> Vec<Example>;
}

/// Serves examples from a held-out pool, in pool order, each example going to
/// the first slice whose predicate it matches.
#[derive(Debug, Clone)]
pub struct PoolProvider {
    queues: Vec<VecDeque<Example>>,
}

impl PoolProvider {
    pub fn new(pool: &Dataset, slices: &[SlicePredicate]) -> Result<Self> {
        let mut queues = vec![VecDeque::new(); slices.len()];
        for (ex, s) in pool.examples().iter().zip(assign_slices(pool, slices)?) {
            if let Some(s) = s {
                queues[s].push_back(ex.clone());
            }
        }
        Ok(Self { queues })
    }

    pub fn remaining(&self, slice: usize) -> usize {
        self.queues[slice].len()
    }
}

impl Provider for PoolProvider {
    fn acquire(&mut self, slice: usize, count: usize) -> Vec<Example> {
        let q = &mut self.queues[slice];
        let k = count.min(q.len());
        q.drain(..k).collect()
    }
}

/// Index of the first matching slice for every example.
pub fn assign_slices(d: &Dataset, slices: &[SlicePredicate]) -> Result<Vec<Option<usize>>> {
    let compiled = slices
        .iter()
        .map(|p| p.compile(d))
        .collect::<Result<Vec<CompiledPredicate>>>()?;
    Ok(d.examples()
        .iter()
        .map(|ex| compiled.iter().position(|c| c.matches(ex)))
        .collect())
}

fn slice_sizes(d: &Dataset, slices: &[SlicePredicate]) -> Result<Vec<usize>> {
    let mut sizes = vec![0; slices.len()];
    for s in assign_slices(d, slices)?.into_iter().flatten() {
        sizes[s] += 1;
    }
    Ok(sizes)
}

fn mean_slice_loss(probs: &[f64], d: &Dataset, members: &[usize]) -> f64 {
    members
        .iter()
        .map(|&i| log_loss(probs[i], d.examples()[i].label))
        .sum::<f64>()
        / members.len() as f64
}

fn validation_members(validation: &Dataset, slices: &[SlicePredicate]) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); slices.len()];
    for (i, s) in assign_slices(validation, slices)?.into_iter().enumerate() {
        if let Some(s) = s {
            members[s].push(i);
        }
    }
    if let Some(s) = members.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!(
            "validation set has no examples of slice {s}"
        )));
    }
    Ok(members)
}

/// Mean validation log loss of slice `slice` after training on `d` with
/// nested seeded subsamples of that slice (other examples kept in full).
/// Returns one `(size, loss)` point per requested size, averaged over trials.
#[allow(clippy::too_many_arguments)]
pub fn measure_learning_points(
    d: &Dataset,
    validation: &Dataset,
    slices: &[SlicePredicate],
    slice: usize,
    cfg: &TrainConfig,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if slice >= slices.len() {
        return Err(Error::invalid(format!("slice index {slice} out of range")));
    }
    let assignment = assign_slices(d, slices)?;
    let members: Vec<usize> = (0..d.len())
        .filter(|&i| assignment[i] == Some(slice))
        .collect();
    if let Some(&n) = sizes.iter().find(|&&n| n > members.len()) {
        return Err(Error::invalid(format!(
            "subset size {n} exceeds slice size {}",
            members.len()
        )));
    }
    let val_members = validation_members(validation, slices)?.swap_remove(slice);
    let orders: Vec<Vec<usize>> = (0..trials)
        .map(|t| {
            let mut order = members.clone();
            order.shuffle(&mut rng::seeded(rng::derive(seed, t as u64)));
            order
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..trials)
        .flat_map(|t| sizes.iter().map(move |&n| (t, n)))
        .collect();
    let losses = tasks
        .par_iter()
        .map(|&(t, n)| {
            let mut keep = vec![true; d.len()];
            for &i in &members {
                keep[i] = false;
            }
            for &i in &orders[t][..n] {
                keep[i] = true;
            }
            let idx: Vec<usize> = (0..d.len()).filter(|&i| keep[i]).collect();
            let model = train_vanilla(&d.subset(&idx), cfg)?;
            let probs = predict(&model, validation)?;
            Ok(mean_slice_loss(&probs, validation, &val_members))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mean = (0..trials)
                .map(|t| losses[t * sizes.len() + k])
                .sum::<f64>()
                / trials as f64;
            (n as f64, mean)
        })
        .collect())
}

/// Trains on `d` and reports the mean validation log loss of every slice.
pub fn evaluate_slices(
    d: &Dataset,
    validation: &Dataset,
    slices: &[SlicePredicate],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let members = validation_members(validation, slices)?;
    let model = train_vanilla(d, cfg)?;
    let probs = predict(&model, validation)?;
    Ok(members
        .iter()
        .map(|m| mean_slice_loss(&probs, validation, m))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Slices smaller than this are topped up before any curve is fit.
    pub min_slice_size: usize,
    /// Relative change of the imbalance ratio that triggers a re-fit.
    pub tau: f64,
    /// Examples acquired per round before the imbalance check.
    pub batch: usize,
    /// Fractions of the current slice size at which learning points are measured.
    pub curve_fractions: Vec<f64>,
    pub trials: usize,
    pub lambda: f64,
    /// Per-slice unit costs; empty means 1 for every slice.
    pub costs: Vec<f64>,
    pub max_iterations: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            min_slice_size: 30,
            tau: 0.2,
            batch: 10,
            curve_fractions: vec![0.25, 0.5, 0.75, 1.0],
            trials: 2,
            lambda: 1.0,
            costs: Vec::new(),
            max_iterations: 50,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PlannerConfig {
    fn costs_for(&self, n: usize) -> Result<Vec<f64>> {
        if self.costs.is_empty() {
            return Ok(vec![1.0; n]);
        }
        if self.costs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.costs.len(),
            });
        }
        if self.costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("slice costs must be > 0"));
        }
        Ok(self.costs.clone())
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(Error::invalid("tau must be >= 0"));
        }
        if self.batch == 0 || self.trials == 0 {
            return Err(Error::invalid("batch and trials must be >= 1"));
        }
        if self.curve_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::invalid("curve fractions must lie in (0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanIteration {
    pub sizes: Vec<usize>,
    pub points: Vec<Vec<(f64, f64)>>,
    pub curves: Vec<CurveFit>,
    pub average_loss: f64,
    pub allocation: Vec<f64>,
    pub target: Vec<usize>,
    pub acquired: Vec<usize>,
    pub imbalance_start: f64,
    pub imbalance_end: f64,
    /// The imbalance ratio moved by more than the threshold before the target was met.
    pub refit_triggered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub budget: f64,
    pub topup: Vec<usize>,
    pub iterations: Vec<PlanIteration>,
    pub final_sizes: Vec<usize>,
    pub final_losses: Vec<f64>,
    pub gap: f64,
    pub spent: f64,
    pub diagnostics: Vec<String>,
}

impl PlanTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace is plain data")
    }
}

/// Result of a planner or baseline run: the trace plus the enlarged dataset.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub trace: PlanTrace,
    pub data: Dataset,
}

struct Acquirer<'a> {
    provider: &'a mut dyn Provider,
    costs: Vec<f64>,
    remaining: f64,
    added: Vec<Example>,
    sizes: Vec<usize>,
    exhausted: Vec<bool>,
    diagnostics: Vec<String>,
}

impl Acquirer<'_> {
    fn take(&mut self, slice: usize, count: usize) -> usize {
        if count == 0 || self.exhausted[slice] {
            return 0;
        }
        let got = self.provider.acquire(slice, count);
        let n = got.len();
        self.added.extend(got);
        self.sizes[slice] += n;
        self.remaining -= n as f64 * self.costs[slice];
        if n < count {
            self.exhausted[slice] = true;
            self.diagnostics.push(format!(
                "provider exhausted for slice {slice}: asked {count}, got {n}"
            ));
        }
        n
    }

    fn any_exhausted(&self) -> bool {
        self.exhausted.iter().any(|&e| e)
    }

    fn affordable(&self, slice: usize) -> usize {
        ((self.remaining + 1e-9) / self.costs[slice])
            .floor()
            .max(0.0) as usize
    }
}

fn split_round(target_left: &[usize], round: usize) -> Vec<usize> {
    let total: usize = target_left.iter().sum();
    if total <= round {
        return target_left.to_vec();
    }
    let shares: Vec<f64> = target_left
        .iter()
        .map(|&t| t as f64 * round as f64 / total as f64)
        .collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&i, &j| {
        (shares[j] - shares[j].floor())
            .total_cmp(&(shares[i] - shares[i].floor()))
            .then(i.cmp(&j))
    });
    let mut left = round - counts.iter().sum::<usize>();
    for &i in &order {
        if left == 0 {
            break;
        }
        if counts[i] < target_left[i] {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

fn curve_sizes(size: usize, fractions: &[f64]) -> Vec<usize> {
    let mut sizes: Vec<usize> = fractions
        .iter()
        .map(|f| ((size as f64 * f).round() as usize).clamp(1, size))
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
}

/// Iterative acquisition: top up small slices, then repeatedly fit learning
/// curves, solve for an allocation, and acquire in rounds until either the
/// target is met or the imbalance ratio has shifted by more than `tau`
/// relative to the start of the iteration. Stops when the budget no longer
/// covers a single example or the provider runs dry.
pub fn plan_acquisition(
    d: &Dataset,
    validation: &Dataset,
    slices: &[SlicePredicate],
    budget: f64,
    cfg: &PlannerConfig,
    provider: &mut dyn Provider,
) -> Result<PlanOutcome> {
    cfg.validate()?;
    if slices.is_empty() {
        return Err(Error::invalid("no slices"));
    }
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::invalid("budget must be finite and >= 0"));
    }
    let costs = cfg.costs_for(slices.len())?;
    let min_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let sizes = slice_sizes(d, slices)?;
    let mut acq = Acquirer {
        provider,
        costs: costs.clone(),
        remaining: budget,
        added: Vec::new(),
        sizes,
        exhausted: vec![false; slices.len()],
        diagnostics: Vec::new(),
    };

    let mut topup = vec![0; slices.len()];
    for s in 0..slices.len() {
        let need = cfg.min_slice_size.saturating_sub(acq.sizes[s]);
        let k = need.min(acq.affordable(s));
        topup[s] = acq.take(s, k);
        if acq.sizes[s] < cfg.min_slice_size {
            acq.diagnostics.push(format!(
                "slice {s} holds {} examples, below the minimum of {}",
                acq.sizes[s], cfg.min_slice_size
            ));
        }
    }

    let mut data = extend(d, &mut acq.added)?;
    let mut iterations = Vec::new();
    while acq.remaining + 1e-9 >= min_cost
        && !acq.any_exhausted()
        && iterations.len() < cfg.max_iterations
    {
        if let Some(s) = acq.sizes.iter().position(|&n| n == 0) {
            acq.diagnostics
                .push(format!("slice {s} is empty; cannot fit a learning curve"));
            break;
        }
        let k = iterations.len() as u64;
        let mut points = Vec::with_capacity(slices.len());
        let mut curves = Vec::with_capacity(slices.len());
        for s in 0..slices.len() {
            let seed = rng::derive(cfg.seed, (k << 16) | s as u64);
            let sizes = curve_sizes(acq.sizes[s], &cfg.curve_fractions);
            let pts = measure_learning_points(
                &data, validation, slices, s, &cfg.train, &sizes, cfg.trials, seed,
            )?;
            curves.push(fit_learning_curve(&pts, 2).or_else(|_| {
                // Too few distinct sizes: fall back to a flat curve.
                fit_learning_curve(&[(1.0, pts[0].1), (2.0, pts[0].1)], 2)
            })?);
            points.push(pts);
        }
        let problem = AcquisitionProblem {
            slices: (0..slices.len())
                .map(|s| SliceState {
                    size: acq.sizes[s] as f64,
                    curve: curves[s].curve,
                    cost: costs[s],
                })
                .collect(),
            budget: acq.remaining,
            lambda: cfg.lambda,
        };
        let allocation = optimize_allocation(&problem)?;
        let target = integerize(&allocation, &costs, acq.remaining);
        let start_sizes = acq.sizes.clone();
        let ir_start = imbalance_ratio(&to_f64(&start_sizes))?;
        let mut acquired = vec![0; slices.len()];
        let mut refit_triggered = false;
        loop {
            let left: Vec<usize> = (0..slices.len()).map(|s| target[s] - acquired[s]).collect();
            if left.iter().all(|&n| n == 0) || acq.any_exhausted() {
                break;
            }
            for (s, &n) in split_round(&left, cfg.batch).iter().enumerate() {
                acquired[s] += acq.take(s, n);
            }
            let ir = imbalance_ratio(&to_f64(&acq.sizes))?;
            if (ir - ir_start).abs() / ir_start > cfg.tau {
                refit_triggered = true;
                break;
            }
        }
        data = extend(&data, &mut acq.added)?;
        iterations.push(PlanIteration {
            sizes: start_sizes,
            points,
            curves,
            average_loss: problem.average_loss(),
            allocation: allocation.amounts,
            target,
            acquired: acquired.clone(),
            imbalance_start: ir_start,
            imbalance_end: imbalance_ratio(&to_f64(&acq.sizes))?,
            refit_triggered,
        });
        if acquired.iter().all(|&n| n == 0) {
            break;
        }
    }
    if iterations.len() == cfg.max_iterations && acq.remaining + 1e-9 >= min_cost {
        acq.diagnostics
            .push(format!("stopped after {} iterations", cfg.max_iterations));
    }

    let final_losses = evaluate_slices(&data, validation, slices, &cfg.train)?;
    let trace = PlanTrace {
        budget,
        topup,
        iterations,
        final_sizes: acq.sizes.clone(),
        gap: equalized_error_rate_gap(&final_losses)?,
        final_losses,
        spent: budget - acq.remaining,
        diagnostics: std::mem::take(&mut acq.diagnostics),
    };
    Ok(PlanOutcome { trace, data })
}

fn to_f64(sizes: &[usize]) -> Vec<f64> {
    sizes.iter().map(|&n| n as f64).collect()
}

fn extend(d: &Dataset, added: &mut Vec<Example>) -> Result<Dataset> {
    if added.is_empty() {
        return Ok(d.clone());
    }
    let mut all = d.examples().to_vec();
    all.append(added);
    d.with_examples(all)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Uniform,
    Waterfilling,
}

/// Acquires the whole budget in one shot following a baseline allocation,
/// then trains and evaluates like the planner does.
pub fn run_baseline(
    kind: Baseline,
    d: &Dataset,
    validation: &Dataset,
    slices: &[SlicePredicate],
    budget: f64,
    cfg: &PlannerConfig,
    provider: &mut dyn Provider,
) -> Result<PlanOutcome> {
    let costs = cfg.costs_for(slices.len())?;
    let sizes = slice_sizes(d, slices)?;
    let sizes_f = to_f64(&sizes);
    let allocation: Allocation = match kind {
        Baseline::Uniform => baseline_uniform(&sizes_f, budget, &costs),
        Baseline::Waterfilling => baseline_waterfilling(&sizes_f, budget, &costs),
    };
    let target = integerize(&allocation, &costs, budget);
    let mut acq = Acquirer {
        provider,
        costs,
        remaining: budget,
        added: Vec::new(),
        sizes: sizes.clone(),
        exhausted: vec![false; slices.len()],
        diagnostics: Vec::new(),
    };
    let acquired: Vec<usize> = (0..slices.len()).map(|s| acq.take(s, target[s])).collect();
    let data = extend(d, &mut acq.added)?;
    let final_losses = evaluate_slices(&data, validation, slices, &cfg.train)?;
    let trace = PlanTrace {
        budget,
        topup: vec![0; slices.len()],
        iterations: vec![PlanIteration {
            imbalance_start: imbalance_ratio(&sizes_f).unwrap_or(f64::NAN),
            imbalance_end: imbalance_ratio(&to_f64(&acq.sizes)).unwrap_or(f64::NAN),
            sizes,
            points: Vec::new(),
            curves: Vec::new(),
            average_loss: f64::NAN,
            allocation: allocation.amounts,
            target,
            acquired,
            refit_triggered: false,
        }],
        final_sizes: acq.sizes.clone(),
        gap: equalized_error_rate_gap(&final_losses)?,
        final_losses,
        spent: budget - acq.remaining,
        diagnostics: std::mem::take(&mut acq.diagnostics),
    };
    Ok(PlanOutcome { trace, data })
}
