//! FR-Train: a classifier trained against two discriminators.
//!
//! The fairness discriminator tries to recover the sensitive group from the
//! classifier's probability. The robustness discriminator tries to tell
//! training tuples `(x, ŷ, y)` from tuples drawn out of a small clean
//! validation set. Its clean-probability doubles as a per-example weight that
//! is ramped in as training progresses.
//!
//! Each mini-batch runs three steps in a fixed order: fairness discriminator,
//! robustness discriminator, classifier. Every step only writes its own
//! network.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{
    descend_on_logits, predict_design, to_labels, vanilla_sampler_seed, Architecture, BatchSampler,
    Design, Model, Network, ShuffleSampler, TrainConfig,
};
use crate::rng;

/// Linear ramp of the reweighting strength, 0 up to `start` and 1 from `full`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: usize,
    pub full: usize,
}

impl Ramp {
    /// Strength used while training epoch `t`.
    pub fn at(&self, t: usize) -> f64 {
        if t <= self.start {
            0.0
        } else if t >= self.full {
            1.0
        } else {
            (t - self.start) as f64 / (self.full - self.start) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FRConfig {
    /// Classifier settings: learning rate, epochs, batch size, seed, decay,
    /// architecture and whether Z is an input.
    pub train: TrainConfig,
    pub lambda_fair: f64,
    pub lambda_robust: f64,
    /// `None` keeps every weight at 1.
    pub ramp: Option<Ramp>,
    pub fair_learning_rate: f64,
    pub robust_learning_rate: f64,
    pub fair_hidden: Option<usize>,
    pub robust_hidden: Option<usize>,
    /// Also feed the true label to the fairness discriminator (equalized-odds
    /// flavour). Off means demographic parity.
    pub fair_uses_label: bool,
    pub min_weight: f64,
    /// Discriminator steps per classifier step.
    pub disc_steps: usize,
}

impl Default for FRConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            lambda_fair: 0.5,
            lambda_robust: 0.1,
            ramp: Some(Ramp {
                start: 10,
                full: 30,
            }),
            fair_learning_rate: 0.1,
            robust_learning_rate: 0.1,
            fair_hidden: None,
            robust_hidden: None,
            fair_uses_label: false,
            min_weight: 0.1,
            disc_steps: 1,
        }
    }
}

impl FRConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for (name, v) in [
            ("lambda_fair", self.lambda_fair),
            ("lambda_robust", self.lambda_robust),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be a finite value >= 0"
                )));
            }
        }
        for (name, v) in [
            ("fair_learning_rate", self.fair_learning_rate),
            ("robust_learning_rate", self.robust_learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.min_weight > 0.0 && self.min_weight <= 1.0) {
            return Err(Error::invalid("min_weight must lie in (0, 1]"));
        }
        if let Some(r) = self.ramp {
            if !(r.start <= r.full && r.full <= self.train.epochs) {
                return Err(Error::invalid(format!(
                    "ramp needs start <= full <= epochs, got {} / {} / {}",
                    r.start, r.full, self.train.epochs
                )));
            }
        }
        if self.disc_steps == 0 {
            return Err(Error::invalid("disc_steps must be >= 1"));
        }
        Ok(())
    }

    fn fair_active(&self) -> bool {
        self.lambda_fair > 0.0
    }

    fn robust_active(&self) -> bool {
        self.lambda_robust > 0.0 || self.ramp.is_some()
    }
}

/// One row of the per-epoch diagnostics, measured on the training set after
/// the epoch's last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub accuracy: f64,
    pub dp: f64,
    /// Accuracy of the fairness discriminator at predicting Z; NaN when it is
    /// not trained.
    pub fair_disc_accuracy: f64,
    /// Balanced accuracy of the robustness discriminator over training vs
    /// validation tuples; NaN when it is not trained.
    pub robust_disc_accuracy: f64,
    pub ramp: f64,
    pub weight_mean: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub flipped_weight: Option<f64>,
    pub clean_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FRDiagnostics {
    pub epochs: Vec<EpochDiagnostics>,
    /// Weights after the last epoch, computed at the ramp strength the next
    /// epoch would use.
    pub final_weights: Vec<f64>,
}

impl FRDiagnostics {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "epoch",
            "accuracy",
            "dp",
            "fair_disc_accuracy",
            "robust_disc_accuracy",
            "ramp",
            "weight_mean",
            "weight_min",
            "weight_max",
            "flipped_weight",
            "clean_weight",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            out.write_record([
                e.epoch.to_string(),
                e.accuracy.to_string(),
                e.dp.to_string(),
                e.fair_disc_accuracy.to_string(),
                e.robust_disc_accuracy.to_string(),
                e.ramp.to_string(),
                e.weight_mean.to_string(),
                e.weight_min.to_string(),
                e.weight_max.to_string(),
                opt(e.flipped_weight),
                opt(e.clean_weight),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Mean final weight over `positions` and over the rest.
    pub fn split_weights(&self, positions: &[usize]) -> (Option<f64>, Option<f64>) {
        split_mean(&self.final_weights, positions)
    }
}

fn split_mean(w: &[f64], positions: &[usize]) -> (Option<f64>, Option<f64>) {
    let mut inside = vec![false; w.len()];
    for &i in positions {
        if i < w.len() {
            inside[i] = true;
        }
    }
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (i, &v) in w.iter().enumerate() {
        if inside[i] {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    (mean(s_in, n_in), mean(s_out, n_out))
}

/// [`train_frtrain_with_mask`] without a flip mask.
pub fn train_frtrain(
    train: &Dataset,
    validation: &Dataset,
    cfg: &FRConfig,
) -> Result<(Model, FRDiagnostics)> {
    train_frtrain_with_mask(train, validation, cfg, None)
}

/// Trains the classifier on `train` (possibly poisoned) using `validation`
/// as the clean reference. A known flip mask only feeds the diagnostics.
///
/// The batch order and classifier initialization are the ones
/// [`crate::model::train_vanilla`] uses, and with both adversaries off and no
/// ramp nothing else touches the classifier, so the parameters match it bit
/// for bit.
pub fn train_frtrain_with_mask(
    train: &Dataset,
    validation: &Dataset,
    cfg: &FRConfig,
    flip_mask: Option<&[usize]>,
) -> Result<(Model, FRDiagnostics)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    if train.schema() != validation.schema() {
        return Err(Error::Schema(
            "training and validation schemas differ".into(),
        ));
    }
    if cfg.fair_active() && train.n_groups() != 2 {
        return Err(Error::invalid(
            "the fairness discriminator needs exactly two groups",
        ));
    }

    let tc = &cfg.train;
    let mut model = Model::init(train, tc);
    let x = model.encode(train)?;
    let xv = model.encode(validation)?;
    let labels = train.labels();
    let base = train.weights();
    let groups: Vec<f64> = train
        .examples()
        .iter()
        .map(|e| (e.group == 1) as u8 as f64)
        .collect();
    let vlabels = validation.labels();

    let fair_dim = 1 + usize::from(cfg.fair_uses_label);
    let robust_dim = x.cols() + 3;
    let mut fair = cfg.fair_active().then(|| {
        let arch = disc_arch(fair_dim, cfg.fair_hidden, tc);
        Network::init(arch, rng::derive(tc.seed, 10))
    });
    let mut robust = cfg.robust_active().then(|| {
        let arch = disc_arch(robust_dim, cfg.robust_hidden, tc);
        Network::init(arch, rng::derive(tc.seed, 11))
    });
    let mut val_rng = rng::seeded(rng::derive(tc.seed, 12));

    let mut sampler =
        ShuffleSampler::new(train.len(), tc.batch_size, vanilla_sampler_seed(tc.seed));
    let mut w = vec![1.0; train.len()];
    let mut diagnostics = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        let ramp = cfg.ramp.map_or(0.0, |r| r.at(epoch));
        if ramp > 0.0 {
            if let Some(r) = &robust {
                w = reweigh(r, &model.network, &x, &labels, ramp, cfg.min_weight);
            }
        }
        for step in 0..sampler.steps_per_epoch() {
            let batch = sampler.next_batch(epoch, step, None)?;
            let net = &model.network;
            let probs: Vec<f64> = batch.iter().map(|&i| net.prob(x.row(i))).collect();
            let diverged = || Error::NonFinite { epoch, step };

            let fair_in = fair.as_ref().map(|_| {
                let rows: Vec<Vec<f64>> = batch
                    .iter()
                    .zip(&probs)
                    .map(|(&i, &p)| fair_input(p, labels[i], cfg.fair_uses_label))
                    .collect();
                Design::from_rows(fair_dim, &rows)
            });
            if let (Some(f), Some(fx)) = (fair.as_mut(), fair_in.as_ref()) {
                let targets: Vec<f64> = batch.iter().map(|&i| groups[i]).collect();
                for _ in 0..cfg.disc_steps {
                    if !disc_step(f, fx, &targets, cfg.fair_learning_rate) {
                        return Err(diverged());
                    }
                }
            }

            let robust_in = robust.as_ref().map(|_| {
                let rows: Vec<Vec<f64>> = batch
                    .iter()
                    .zip(&probs)
                    .map(|(&i, &p)| robust_input(x.row(i), p, labels[i]))
                    .collect();
                Design::from_rows(robust_dim, &rows)
            });
            if let (Some(r), Some(rx)) = (robust.as_mut(), robust_in.as_ref()) {
                for _ in 0..cfg.disc_steps {
                    // Validation tuples are redrawn with replacement on every step.
                    let mut rows: Vec<Vec<f64>> =
                        (0..rx.rows()).map(|k| rx.row(k).to_vec()).collect();
                    let mut targets = vec![0.0; rows.len()];
                    for _ in 0..batch.len() {
                        let j = val_rng.random_range(0..validation.len());
                        rows.push(robust_input(xv.row(j), net.prob(xv.row(j)), vlabels[j]));
                        targets.push(1.0);
                    }
                    let design = Design::from_rows(robust_dim, &rows);
                    if !disc_step(r, &design, &targets, cfg.robust_learning_rate) {
                        return Err(diverged());
                    }
                }
            }

            let mut dlogit: Vec<f64> = batch
                .iter()
                .zip(&probs)
                .map(|(&i, &p)| base[i] * w[i] * (p - f64::from(labels[i])))
                .collect();
            if let (Some(f), Some(fx)) = (fair.as_ref(), fair_in.as_ref()) {
                for (k, &i) in batch.iter().enumerate() {
                    let dp = adversary_grad(f, fx.row(k), groups[i])[0];
                    dlogit[k] -= cfg.lambda_fair * dp * probs[k] * (1.0 - probs[k]);
                }
            }
            if cfg.lambda_robust > 0.0 {
                if let (Some(r), Some(rx)) = (robust.as_ref(), robust_in.as_ref()) {
                    for (k, &i) in batch.iter().enumerate() {
                        let g = adversary_grad(r, rx.row(k), 0.0);
                        let sign = 2.0 * f64::from(labels[i]) - 1.0;
                        let dp = g[robust_dim - 3] + g[robust_dim - 1] * sign;
                        dlogit[k] -= cfg.lambda_robust * dp * probs[k] * (1.0 - probs[k]);
                    }
                }
            }
            if !descend_on_logits(
                &mut model.network,
                &x,
                &batch,
                &dlogit,
                tc.learning_rate,
                tc.weight_decay,
            ) {
                return Err(diverged());
            }
        }
        diagnostics.push(epoch_diagnostics(
            epoch,
            train,
            &model.network,
            &x,
            &xv,
            &vlabels,
            fair.as_ref(),
            robust.as_ref(),
            cfg,
            ramp,
            &w,
            flip_mask,
        )?);
    }

    let final_ramp = cfg.ramp.map_or(0.0, |r| r.at(tc.epochs));
    let final_weights = match (&robust, final_ramp > 0.0) {
        (Some(r), true) => reweigh(r, &model.network, &x, &labels, final_ramp, cfg.min_weight),
        _ => w,
    };
    Ok((
        model,
        FRDiagnostics {
            epochs: diagnostics,
            final_weights,
        },
    ))
}

fn disc_arch(input_dim: usize, hidden: Option<usize>, tc: &TrainConfig) -> Architecture {
    Architecture {
        input_dim,
        hidden,
        activation: tc.activation,
    }
}

fn fair_input(p: f64, y: u8, with_label: bool) -> Vec<f64> {
    if with_label {
        vec![p, f64::from(y)]
    } else {
        vec![p]
    }
}

/// `(x, ŷ, y)` plus the agreement `y·ŷ + (1−y)(1−ŷ)`. A linear discriminator
/// cannot see a flipped label from `ŷ` and `y` alone; the agreement term
/// gives it that interaction.
fn robust_input(x: &[f64], p: f64, y: u8) -> Vec<f64> {
    let y = f64::from(y);
    let mut v = Vec::with_capacity(x.len() + 3);
    v.extend_from_slice(x);
    v.push(p);
    v.push(y);
    v.push(y * p + (1.0 - y) * (1.0 - p));
    v
}

/// One cross-entropy descent step of a discriminator towards `targets`.
fn disc_step(net: &mut Network, x: &Design, targets: &[f64], lr: f64) -> bool {
    let rows: Vec<usize> = (0..x.rows()).collect();
    let dlogit: Vec<f64> = rows
        .iter()
        .map(|&k| net.prob(x.row(k)) - targets[k])
        .collect();
    descend_on_logits(net, x, &rows, &dlogit, lr, 0.0)
}

/// Gradient of the discriminator's cross-entropy on `input` (true target
/// `target`) with respect to its input.
fn adversary_grad(net: &Network, input: &[f64], target: f64) -> Vec<f64> {
    let mut scratch = vec![0.0; net.params().len()];
    let mut g = vec![0.0; input.len()];
    net.backprop(input, net.prob(input) - target, &mut scratch, Some(&mut g));
    g
}

fn reweigh(
    robust: &Network,
    classifier: &Network,
    x: &Design,
    labels: &[u8],
    ramp: f64,
    min_weight: f64,
) -> Vec<f64> {
    (0..x.rows())
        .map(|i| {
            let p_clean = robust.prob(&robust_input(
                x.row(i),
                classifier.prob(x.row(i)),
                labels[i],
            ));
            (ramp * p_clean + (1.0 - ramp)).clamp(min_weight, 1.0)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn epoch_diagnostics(
    epoch: usize,
    train: &Dataset,
    net: &Network,
    x: &Design,
    xv: &Design,
    vlabels: &[u8],
    fair: Option<&Network>,
    robust: Option<&Network>,
    cfg: &FRConfig,
    ramp: f64,
    w: &[f64],
    flip_mask: Option<&[usize]>,
) -> Result<EpochDiagnostics> {
    let probs = predict_design(net, x);
    let preds = to_labels(&probs, 0.5);
    let labels = train.labels();
    let accuracy = metrics::accuracy(&preds, train, false)?;
    let dp = if train.n_groups() == 2 {
        metrics::demographic_parity(&preds, train)?
    } else {
        f64::NAN
    };
    let fair_disc_accuracy = fair.map_or(f64::NAN, |f| {
        let hits = train
            .examples()
            .iter()
            .zip(&probs)
            .filter(|(e, &p)| {
                (f.prob(&fair_input(p, e.label, cfg.fair_uses_label)) > 0.5) == (e.group == 1)
            })
            .count();
        hits as f64 / train.len() as f64
    });
    let robust_disc_accuracy = robust.map_or(f64::NAN, |r| {
        let train_hits = (0..x.rows())
            .filter(|&i| r.prob(&robust_input(x.row(i), probs[i], labels[i])) <= 0.5)
            .count();
        let val_hits = (0..xv.rows())
            .filter(|&j| r.prob(&robust_input(xv.row(j), net.prob(xv.row(j)), vlabels[j])) > 0.5)
            .count();
        0.5 * (train_hits as f64 / x.rows() as f64 + val_hits as f64 / xv.rows() as f64)
    });
    let (flipped_weight, clean_weight) = match flip_mask {
        Some(m) => split_mean(w, m),
        None => (None, None),
    };
    Ok(EpochDiagnostics {
        epoch,
        accuracy,
        dp,
        fair_disc_accuracy,
        robust_disc_accuracy,
        ramp,
        weight_mean: w.iter().sum::<f64>() / w.len() as f64,
        weight_min: w.iter().copied().fold(f64::INFINITY, f64::min),
        weight_max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        flipped_weight,
        clean_weight,
    })
}

/// `(accuracy, demographic parity)` of the model on a clean test set, at
/// threshold 0.5.
pub fn evaluate_tradeoff(model: &Model, clean_test: &Dataset) -> Result<(f64, f64)> {
    let preds = to_labels(&crate::model::predict(model, clean_test)?, 0.5);
    tradeoff_of_predictions(&preds, clean_test)
}

/// [`evaluate_tradeoff`] for any hard predictions.
pub fn tradeoff_of_predictions(preds: &[u8], clean_test: &Dataset) -> Result<(f64, f64)> {
    if clean_test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    Ok((
        metrics::accuracy(preds, clean_test, false)?,
        metrics::demographic_parity(preds, clean_test)?,
    ))
}

/// True when `a` is at least as good as `b` on both axes and strictly better
/// on one.
pub fn pareto_dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticParams};

    fn data(seed: u64) -> Dataset {
        gen_synthetic(
            &SyntheticParams::two_groups([120, 180], [0.3, 0.6], 2, 1.0),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn ramp_shape() {
        let r = Ramp { start: 2, full: 6 };
        let v: Vec<f64> = (0..8).map(|t| r.at(t)).collect();
        assert_eq!(v, vec![0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0]);
        assert_eq!(Ramp { start: 3, full: 3 }.at(3), 0.0);
        assert_eq!(Ramp { start: 3, full: 3 }.at(4), 1.0);
    }

    #[test]
    fn config_checks() {
        let mut cfg = FRConfig::default();
        cfg.ramp = Some(Ramp { start: 5, full: 2 });
        assert!(cfg.validate().is_err());
        cfg.ramp = Some(Ramp { start: 5, full: 60 });
        assert!(cfg.validate().is_err());
        cfg.ramp = None;
        cfg.lambda_fair = -1.0;
        assert!(cfg.validate().is_err());
        cfg.lambda_fair = 0.0;
        cfg.min_weight = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn disc_step_only_moves_its_network() {
        let d = data(0);
        let m = Model::init(&d, &TrainConfig::default());
        let x = m.encode(&d).unwrap();
        let before = m.network.clone();
        let mut f = Network::init(Architecture::logistic(1), 3);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![m.network.prob(x.row(i))]).collect();
        let fx = Design::from_rows(1, &rows);
        let f0 = f.clone();
        assert!(disc_step(&mut f, &fx, &[1.0; 10], 0.5));
        assert_ne!(f, f0);
        assert_eq!(m.network, before);
    }

    #[test]
    fn agreement_feature() {
        assert_eq!(robust_input(&[2.0], 0.75, 1), vec![2.0, 0.75, 1.0, 0.75]);
        assert_eq!(robust_input(&[2.0], 0.75, 0), vec![2.0, 0.75, 0.0, 0.25]);
    }

    #[test]
    fn adversary_grad_matches_finite_difference() {
        let net = Network::init(Architecture::mlp(3, 4), 7);
        let input = [0.3, -0.2, 0.9];
        let loss = |v: &[f64]| {
            let z = net.logit(v);
            crate::model::softplus(z) - z
        };
        let g = adversary_grad(&net, &input, 1.0);
        for j in 0..3 {
            let h = 1e-6;
            let mut a = input;
            let mut b = input;
            a[j] += h;
            b[j] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn weights_are_one_before_ramp() {
        let d = data(1);
        let cfg = FRConfig {
            train: TrainConfig {
                epochs: 6,
                seed: 2,
                ..Default::default()
            },
            ramp: Some(Ramp { start: 3, full: 6 }),
            ..Default::default()
        };
        let (_, diag) = train_frtrain(&d, &d.subset(&(0..40).collect::<Vec<_>>()), &cfg).unwrap();
        for e in &diag.epochs[..=3] {
            assert_eq!((e.weight_min, e.weight_max), (1.0, 1.0));
        }
        for e in &diag.epochs {
            assert!(e.weight_min >= cfg.min_weight && e.weight_max <= 1.0);
        }
    }

    #[test]
    fn pareto() {
        assert!(pareto_dominates((0.9, 0.8), (0.9, 0.7)));
        assert!(!pareto_dominates((0.9, 0.8), (0.9, 0.8)));
        assert!(!pareto_dominates((0.95, 0.6), (0.9, 0.8)));
    }

    #[test]
    fn csv_header_and_rows() {
        let d = data(2);
        let cfg = FRConfig {
            train: TrainConfig {
                epochs: 3,
                ..Default::default()
            },
            ramp: Some(Ramp { start: 1, full: 2 }),
            ..Default::default()
        };
        let (_, diag) = train_frtrain_with_mask(&d, &d, &cfg, Some(&[0, 1])).unwrap();
        let mut buf = Vec::new();
        diag.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("epoch,accuracy,dp,"));
        assert!(diag.epochs[2].flipped_weight.is_some());
    }
}
