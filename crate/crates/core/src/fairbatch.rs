//! Adaptive batch selection for fairness.
//!
//! The inner loop is ordinary SGD; the outer loop re-balances, once per epoch,
//! how much of each label's share of a batch comes from group `Z=0`, based on
//! the current model's fairness on the training data. Plugging it in only
//! means handing [`FairBatchSampler`] to [`crate::model::train_sgd`].

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::FairnessReport;
use crate::model::BatchSampler;
use crate::rng::{self, Rng};

/// Per-label share of group `Z=0` in a batch, plus the fixed label split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRates {
    /// `lambda[y]` = fraction of the label-`y` portion drawn from `Z=0`.
    /// `lambda[0]` is λ1 and `lambda[1]` is λ2.
    pub lambda: [f64; 2],
    /// Fraction of the batch with `Y=0`; held at the dataset prior.
    pub label0_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FairnessTarget {
    #[default]
    EqualizedOdds,
    DemographicParity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairBatchConfig {
    pub target: FairnessTarget,
    /// Step applied to each λ per epoch.
    pub alpha: f64,
    /// Clip bounds for λ, within [0, 1].
    pub clip: (f64, f64),
    pub batch_size: usize,
}

impl Default for FairBatchConfig {
    fn default() -> Self {
        Self {
            target: FairnessTarget::EqualizedOdds,
            alpha: 0.005,
            clip: (0.0, 1.0),
            batch_size: 32,
        }
    }
}

impl FairBatchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be >= 0"));
        }
        let (lo, hi) = self.clip;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(
                "clip bounds must satisfy 0 <= lo <= hi <= 1",
            ));
        }
        if self.batch_size < 4 {
            return Err(Error::invalid("batch size must be >= 4"));
        }
        Ok(())
    }
}

/// Indices of the four (group, label) cells, indexed `[z][y]`. Errors on an
/// empty cell or a non-binary group set.
fn cells(d: &Dataset) -> Result<[[Vec<usize>; 2]; 2]> {
    if d.n_groups() != 2 {
        return Err(Error::invalid("binary sensitive attribute required"));
    }
    let out = [[d.cell(0, 0), d.cell(0, 1)], [d.cell(1, 0), d.cell(1, 1)]];
    for z in 0..2 {
        for y in 0..2 {
            if out[z][y].is_empty() {
                return Err(Error::EmptyCell {
                    group: d.group_name(z).to_string(),
                    label: y as u8,
                });
            }
        }
    }
    Ok(out)
}

/// Empirical starting point: λ_y = P(Z=0 | Y=y).
pub fn init_rates(d: &Dataset) -> Result<SamplingRates> {
    let c = cells(d)?;
    let n = |z: usize, y: usize| c[z][y].len() as f64;
    let y0 = n(0, 0) + n(1, 0);
    let y1 = n(0, 1) + n(1, 1);
    Ok(SamplingRates {
        lambda: [n(0, 0) / y0, n(0, 1) / y1],
        label0_share: y0 / (y0 + y1),
    })
}

/// One signed step per λ toward the underperforming group.
///
/// Equalized odds: for each label, if `Z=0` is less accurate than `Z=1`, its
/// share grows by α, and shrinks by α in the opposite case. Demographic
/// parity: if `Z=0` has the lower positive-prediction rate, its share of the
/// positive portion grows and of the negative portion shrinks (and vice
/// versa).
pub fn update_rates(
    rates: &SamplingRates,
    report: &FairnessReport,
    cfg: &FairBatchConfig,
) -> SamplingRates {
    let (lo, hi) = cfg.clip;
    let sign = |a: f64, b: f64| -> f64 {
        if a < b {
            1.0
        } else if a > b {
            -1.0
        } else {
            0.0
        }
    };
    let mut next = *rates;
    match cfg.target {
        FairnessTarget::EqualizedOdds => {
            for y in 0..2 {
                let s = sign(report.cell_accuracy[0][y], report.cell_accuracy[1][y]);
                next.lambda[y] = (rates.lambda[y] + s * cfg.alpha).clamp(lo, hi);
            }
        }
        FairnessTarget::DemographicParity => {
            let s = sign(report.positive_rates[0], report.positive_rates[1]);
            next.lambda[1] = (rates.lambda[1] + s * cfg.alpha).clamp(lo, hi);
            next.lambda[0] = (rates.lambda[0] - s * cfg.alpha).clamp(lo, hi);
        }
    }
    next
}

/// Per-cell batch counts `[z][y]` by largest remainder, summing to
/// `batch_size`. Remainder ties go to the earlier cell in (y, z) order.
pub fn cell_counts(rates: &SamplingRates, batch_size: usize) -> [[usize; 2]; 2] {
    let share = |z: usize, y: usize| {
        let label = if y == 0 {
            rates.label0_share
        } else {
            1.0 - rates.label0_share
        };
        let group = if z == 0 {
            rates.lambda[y]
        } else {
            1.0 - rates.lambda[y]
        };
        batch_size as f64 * label * group
    };
    let order = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let exact: Vec<f64> = order.iter().map(|&(z, y)| share(z, y)).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut by_rem: Vec<usize> = (0..4).collect();
    by_rem.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in by_rem.iter().take(batch_size.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    let mut out = [[0; 2]; 2];
    for (k, &(z, y)) in order.iter().enumerate() {
        out[z][y] = counts[k];
    }
    out
}

/// Draws a batch with the given per-cell counts, uniformly with replacement
/// inside each cell, in (y, z) cell order.
fn draw(cells: &[[Vec<usize>; 2]; 2], counts: &[[usize; 2]; 2], rng: &mut Rng) -> Vec<usize> {
    let mut batch = Vec::new();
    for &(z, y) in &[(0, 0), (1, 0), (0, 1), (1, 1)] {
        let cell = &cells[z][y];
        for _ in 0..counts[z][y] {
            batch.push(cell[rng.random_range(0..cell.len())]);
        }
    }
    batch
}

/// One row of the λ trajectory: the rates used during `epoch` and the ED
/// disparity of the model at that epoch's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub epoch: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub disparity: f64,
}

/// Stateful sampler bound to one training run.
#[derive(Debug, Clone)]
pub struct FairBatchSampler {
    cfg: FairBatchConfig,
    cells: [[Vec<usize>; 2]; 2],
    rates: SamplingRates,
    steps: usize,
    rng: Rng,
    trajectory: Vec<LambdaPoint>,
}

impl FairBatchSampler {
    pub fn rates(&self) -> &SamplingRates {
        &self.rates
    }

    pub fn trajectory(&self) -> &[LambdaPoint] {
        &self.trajectory
    }
}

pub fn make_fairbatch_sampler(
    d: &Dataset,
    cfg: &FairBatchConfig,
    seed: u64,
) -> Result<FairBatchSampler> {
    cfg.validate()?;
    Ok(FairBatchSampler {
        cfg: cfg.clone(),
        cells: cells(d)?,
        rates: init_rates(d)?,
        steps: d.len().div_ceil(cfg.batch_size),
        rng: rng::seeded(seed),
        trajectory: Vec::new(),
    })
}

impl BatchSampler for FairBatchSampler {
    fn steps_per_epoch(&self) -> usize {
        self.steps
    }

    fn wants_feedback(&self) -> bool {
        true
    }

    fn next_batch(
        &mut self,
        epoch: usize,
        step: usize,
        feedback: Option<&FairnessReport>,
    ) -> Result<Vec<usize>> {
        if step == 0 {
            if epoch > 0 {
                if let Some(report) = feedback {
                    self.rates = update_rates(&self.rates, report, &self.cfg);
                }
            }
            self.trajectory.push(LambdaPoint {
                epoch,
                lambda1: self.rates.lambda[0],
                lambda2: self.rates.lambda[1],
                disparity: feedback.map_or(f64::NAN, |r| r.eo_disparity),
            });
        }
        let counts = cell_counts(&self.rates, self.cfg.batch_size);
        Ok(draw(&self.cells, &counts, &mut self.rng))
    }
}

/// Fixed-proportion stratified sampling at the empirical cell rates; the
/// α = 0 limit of [`FairBatchSampler`].
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    cells: [[Vec<usize>; 2]; 2],
    counts: [[usize; 2]; 2],
    steps: usize,
    rng: Rng,
}

impl StratifiedSampler {
    pub fn new(d: &Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        let rates = init_rates(d)?;
        Ok(Self {
            cells: cells(d)?,
            counts: cell_counts(&rates, batch_size),
            steps: d.len().div_ceil(batch_size.max(1)),
            rng: rng::seeded(seed),
        })
    }
}

impl BatchSampler for StratifiedSampler {
    fn steps_per_epoch(&self) -> usize {
        self.steps
    }

    fn next_batch(
        &mut self,
        _epoch: usize,
        _step: usize,
        _feedback: Option<&FairnessReport>,
    ) -> Result<Vec<usize>> {
        Ok(draw(&self.cells, &self.counts, &mut self.rng))
    }
}

/// Writes `epoch,lambda1,lambda2,disparity` rows.
pub fn write_trajectory_csv<W: Write>(points: &[LambdaPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "lambda1", "lambda2", "disparity"])?;
    for p in points {
        out.serialize((p.epoch, p.lambda1, p.lambda2, p.disparity))?;
    }
    out.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticParams};

    fn report(cell_accuracy: [[f64; 2]; 2], positive_rates: [f64; 2]) -> FairnessReport {
        FairnessReport {
            groups: ["a".into(), "b".into()],
            dp: 1.0,
            eo_disparity: 0.0,
            accuracy: 1.0,
            positive_rates,
            cell_accuracy,
        }
    }

    fn rates(l1: f64, l2: f64) -> SamplingRates {
        SamplingRates {
            lambda: [l1, l2],
            label0_share: 0.5,
        }
    }

    #[test]
    fn balanced_init_is_half() {
        let p = SyntheticParams::two_groups([200, 200], [0.5, 0.5], 1, 1.0);
        // Force exact balance by construction of cells.
        let d = gen_synthetic(&p, 0).unwrap();
        let mut ex = d.examples().to_vec();
        for (i, e) in ex.iter_mut().enumerate() {
            e.group = i % 2;
            e.label = ((i / 2) % 2) as u8;
        }
        let d = d.with_examples(ex).unwrap();
        let r = init_rates(&d).unwrap();
        assert_eq!(r.lambda, [0.5, 0.5]);
        assert_eq!(init_rates(&d).unwrap(), r);
    }

    #[test]
    fn init_matches_definition() {
        let d = gen_synthetic(
            &SyntheticParams::two_groups([300, 700], [0.3, 0.6], 1, 1.0),
            2,
        )
        .unwrap();
        let r = init_rates(&d).unwrap();
        let z0y1 = d.cell(0, 1).len() as f64;
        let y1 = z0y1 + d.cell(1, 1).len() as f64;
        assert_eq!(r.lambda[1], z0y1 / y1);
    }

    #[test]
    fn update_rules() {
        let cfg = FairBatchConfig {
            alpha: 0.1,
            ..Default::default()
        };
        let r = rates(0.4, 0.4);
        assert_eq!(
            update_rates(&r, &report([[0.8, 0.7], [0.8, 0.7]], [0.5, 0.5]), &cfg),
            r
        );
        let up = update_rates(&r, &report([[0.8, 0.5], [0.8, 0.9]], [0.5, 0.5]), &cfg);
        assert!((up.lambda[1] - 0.5).abs() < 1e-15);
        assert_eq!(up.lambda[0], 0.4);
        let down = update_rates(&r, &report([[0.9, 0.7], [0.8, 0.7]], [0.5, 0.5]), &cfg);
        assert!((down.lambda[0] - 0.3).abs() < 1e-15);
        let capped = update_rates(
            &rates(0.4, 1.0),
            &report([[0.8, 0.5], [0.8, 0.9]], [0.5, 0.5]),
            &cfg,
        );
        assert_eq!(capped.lambda[1], 1.0);
    }

    #[test]
    fn dp_mode_moves_both() {
        let cfg = FairBatchConfig {
            alpha: 0.1,
            target: FairnessTarget::DemographicParity,
            ..Default::default()
        };
        let r = update_rates(&rates(0.5, 0.5), &report([[0.8; 2]; 2], [0.2, 0.6]), &cfg);
        assert!((r.lambda[1] - 0.6).abs() < 1e-15);
        assert!((r.lambda[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn counts_sum_to_batch() {
        for (l1, l2, p0) in [(0.3, 0.7, 0.5), (0.33, 0.1, 0.77), (0.0, 1.0, 0.2)] {
            for bs in [4, 7, 32, 33] {
                let c = cell_counts(
                    &SamplingRates {
                        lambda: [l1, l2],
                        label0_share: p0,
                    },
                    bs,
                );
                assert_eq!(c.iter().flatten().sum::<usize>(), bs);
            }
        }
    }

    #[test]
    fn trajectory_csv_header_only_when_empty() {
        let mut buf = Vec::new();
        write_trajectory_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,lambda1,lambda2,disparity\n"
        );
    }

    #[test]
    fn rejects_tiny_batch_and_empty_cell() {
        let d = gen_synthetic(
            &SyntheticParams::two_groups([50, 50], [0.5, 0.5], 1, 1.0),
            2,
        )
        .unwrap();
        let cfg = FairBatchConfig {
            batch_size: 3,
            ..Default::default()
        };
        assert!(make_fairbatch_sampler(&d, &cfg, 0).is_err());
        let d = gen_synthetic(
            &SyntheticParams::two_groups([50, 50], [0.0, 0.5], 1, 1.0),
            2,
        )
        .unwrap();
        assert!(matches!(
            init_rates(&d),
            Err(Error::EmptyCell { label: 1, .. })
        ));
    }
}
