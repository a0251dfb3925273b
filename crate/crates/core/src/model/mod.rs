//! Small trainable classifiers and mini-batch SGD on weighted logistic loss.
//!
//! Training runs single-threaded so that a fixed seed reproduces parameters
//! bit for bit. The batch order comes from a [`BatchSampler`], which is how
//! FairBatch plugs in.

mod encoder;
mod network;
mod sampler;
mod threshold;

pub use encoder::{Design, Encoder};
pub use network::{sigmoid, softplus, Activation, Architecture, Network};
pub use sampler::{BatchSampler, ShuffleSampler};
pub use threshold::{fit_threshold_fair, fit_threshold_max_accuracy, ThresholdClassifier};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::FairnessReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Width of an optional hidden layer; `None` is logistic regression.
    pub hidden: Option<usize>,
    pub activation: Activation,
    /// Feed the sensitive attribute to the model as one-hot columns.
    pub use_sensitive: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
            hidden: None,
            activation: Activation::Tanh,
            use_sensitive: false,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be >= 0"));
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden,
            activation: self.activation,
        }
    }
}

/// A network together with the encoder that turns dataset rows into its
/// inputs. This is the unit that gets saved and loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoder: Encoder,
    pub network: Network,
}

impl Model {
    /// Freshly initialized (untrained) model for `d`.
    pub fn init(d: &Dataset, cfg: &TrainConfig) -> Self {
        let encoder = Encoder::fit(d, cfg.use_sensitive);
        let network = Network::init(cfg.architecture(encoder.dim()), cfg.seed);
        Self { encoder, network }
    }

    pub fn encode(&self, d: &Dataset) -> Result<Design> {
        let x = self.encoder.encode(d)?;
        if x.cols() != self.network.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.network.input_dim(),
                got: x.cols(),
            });
        }
        Ok(x)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// P(Y=1) for every example.
pub fn predict(model: &Model, d: &Dataset) -> Result<Vec<f64>> {
    let x = model.encode(d)?;
    Ok(predict_design(&model.network, &x))
}

pub fn predict_design(net: &Network, x: &Design) -> Vec<f64> {
    (0..x.rows()).map(|i| net.prob(x.row(i))).collect()
}

/// Hard labels: 1 iff probability is strictly above `threshold`.
pub fn classify(model: &Model, d: &Dataset, threshold: f64) -> Result<Vec<u8>> {
    Ok(to_labels(&predict(model, d)?, threshold))
}

pub fn to_labels(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > threshold)).collect()
}

/// Sum over `batch` of `weights[i] * logloss_i` (unclamped, computed from the
/// logit).
pub fn batch_loss(
    net: &Network,
    x: &Design,
    labels: &[u8],
    weights: &[f64],
    batch: &[usize],
) -> f64 {
    batch
        .iter()
        .map(|&i| {
            let z = net.logit(x.row(i));
            weights[i] * (softplus(z) - f64::from(labels[i]) * z)
        })
        .sum()
}

/// Exact gradient of [`batch_loss`] with respect to the network parameters.
pub fn gradient(
    net: &Network,
    x: &Design,
    labels: &[u8],
    weights: &[f64],
    batch: &[usize],
) -> Vec<f64> {
    let mut grad = vec![0.0; net.params().len()];
    for &i in batch {
        let row = x.row(i);
        let dlogit = weights[i] * (net.prob(row) - f64::from(labels[i]));
        net.backprop(row, dlogit, &mut grad, None);
    }
    grad
}

/// One descent step from per-example logit gradients: averages
/// `dlogit[k] * ∂logit(batch[k])/∂θ` over the batch, adds weight decay, and
/// moves by `-learning_rate`. Returns false (leaving `net` untouched) when the
/// step would be non-finite.
pub fn descend_on_logits(
    net: &mut Network,
    x: &Design,
    batch: &[usize],
    dlogit: &[f64],
    learning_rate: f64,
    weight_decay: f64,
) -> bool {
    debug_assert_eq!(batch.len(), dlogit.len());
    if batch.is_empty() {
        return true;
    }
    let mut grad = vec![0.0; net.params().len()];
    for (&i, &g) in batch.iter().zip(dlogit) {
        net.backprop(x.row(i), g, &mut grad, None);
    }
    let scale = 1.0 / batch.len() as f64;
    let params = net.params();
    let next: Vec<f64> = params
        .iter()
        .zip(&grad)
        .map(|(p, g)| p - learning_rate * (g * scale + weight_decay * p))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return false;
    }
    net.params_mut().copy_from_slice(&next);
    true
}

/// Mini-batch SGD on example-weighted logistic loss.
///
/// `epochs == 0` returns the initialized model. The sampler decides batch
/// composition; see [`BatchSampler`] for the feedback contract.
pub fn train_sgd(d: &Dataset, cfg: &TrainConfig, sampler: &mut dyn BatchSampler) -> Result<Model> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut model = Model::init(d, cfg);
    let x = model.encode(d)?;
    let labels = d.labels();
    let weights = d.weights();
    for epoch in 0..cfg.epochs {
        let feedback = if sampler.wants_feedback() {
            let preds = to_labels(&predict_design(&model.network, &x), 0.5);
            Some(FairnessReport::compute(&preds, d)?)
        } else {
            None
        };
        for step in 0..sampler.steps_per_epoch() {
            let batch = sampler.next_batch(epoch, step, feedback.as_ref())?;
            if let Some(&bad) = batch.iter().find(|&&i| i >= d.len()) {
                return Err(Error::invalid(format!(
                    "sampler returned index {bad} out of range"
                )));
            }
            let dlogit: Vec<f64> = batch
                .iter()
                .map(|&i| weights[i] * (model.network.prob(x.row(i)) - f64::from(labels[i])))
                .collect();
            if !descend_on_logits(
                &mut model.network,
                &x,
                &batch,
                &dlogit,
                cfg.learning_rate,
                cfg.weight_decay,
            ) {
                return Err(Error::NonFinite { epoch, step });
            }
        }
    }
    Ok(model)
}

/// [`train_sgd`] with the default shuffling sampler seeded from `cfg.seed`.
pub fn train_vanilla(d: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    let mut sampler = ShuffleSampler::new(d.len(), cfg.batch_size, vanilla_sampler_seed(cfg.seed));
    train_sgd(d, cfg, &mut sampler)
}

/// Seed of the batch-order stream used by [`train_vanilla`].
pub fn vanilla_sampler_seed(seed: u64) -> u64 {
    crate::rng::derive(seed, 1)
}
