//! Logistic regression or a one-hidden-layer perceptron with a sigmoid
//! output, parameters stored in one flat vector.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Width of the optional hidden layer.
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl Architecture {
    pub fn logistic(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: None,
            activation: Activation::Tanh,
        }
    }

    pub fn mlp(input_dim: usize, width: usize) -> Self {
        Self {
            input_dim,
            hidden: Some(width),
            activation: Activation::Tanh,
        }
    }

    pub fn n_params(&self) -> usize {
        match self.hidden {
            None => self.input_dim + 1,
            Some(h) => h * self.input_dim + h + h + 1,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Parameter layout: without a hidden layer `[w (d), b]`; with width `h`
/// `[W1 (h x d, row-major), b1 (h), w2 (h), b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
}

impl Network {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            params: vec![0.0; arch.n_params()],
        }
    }

    /// Weights uniform in [-0.5, 0.5] / sqrt(fan_in); biases zero.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut net = Self::zeros(arch);
        let d = arch.input_dim;
        let mut draw = |fan_in: usize| (rng.random::<f64>() - 0.5) / (fan_in.max(1) as f64).sqrt();
        match arch.hidden {
            None => {
                for j in 0..d {
                    net.params[j] = draw(d);
                }
            }
            Some(h) => {
                for k in 0..h * d {
                    net.params[k] = draw(d);
                }
                let w2 = h * d + h;
                for k in 0..h {
                    net.params[w2 + k] = draw(h);
                }
            }
        }
        net
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.n_params() {
            return Err(Error::LengthMismatch {
                expected: arch.n_params(),
                got: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        let d = self.arch.input_dim;
        let p = &self.params;
        match self.arch.hidden {
            None => dot(&p[..d], x) + p[d],
            Some(h) => {
                let (b1, w2, b2) = (h * d, h * d + h, h * d + 2 * h);
                let mut z = p[b2];
                for k in 0..h {
                    let a = self
                        .arch
                        .activation
                        .apply(dot(&p[k * d..(k + 1) * d], x) + p[b1 + k]);
                    z += p[w2 + k] * a;
                }
                z
            }
        }
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Adds `dlogit * ∂logit/∂θ` to `grad`, and `dlogit * ∂logit/∂x` to
    /// `input_grad` when given.
    pub fn backprop(
        &self,
        x: &[f64],
        dlogit: f64,
        grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) {
        let d = self.arch.input_dim;
        let p = &self.params;
        match self.arch.hidden {
            None => {
                for j in 0..d {
                    grad[j] += dlogit * x[j];
                }
                grad[d] += dlogit;
                if let Some(g) = input_grad {
                    for j in 0..d {
                        g[j] += dlogit * p[j];
                    }
                }
            }
            Some(h) => {
                let (b1, w2, b2) = (h * d, h * d + h, h * d + 2 * h);
                let mut input_grad = input_grad;
                for k in 0..h {
                    let row = &p[k * d..(k + 1) * d];
                    let a = self.arch.activation.apply(dot(row, x) + p[b1 + k]);
                    grad[w2 + k] += dlogit * a;
                    let delta = dlogit * p[w2 + k] * self.arch.activation.derivative(a);
                    if delta != 0.0 {
                        for j in 0..d {
                            grad[k * d + j] += delta * x[j];
                        }
                        grad[b1 + k] += delta;
                        if let Some(g) = input_grad.as_deref_mut() {
                            for j in 0..d {
                                g[j] += delta * row[j];
                            }
                        }
                    }
                }
                grad[b2] += dlogit;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    architecture: Architecture,
    layers: Vec<LayerJson>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.arch.input_dim;
        let p = &self.params;
        let layers = match self.arch.hidden {
            None => vec![LayerJson {
                weights: vec![p[..d].to_vec()],
                bias: vec![p[d]],
            }],
            Some(h) => vec![
                LayerJson {
                    weights: (0..h).map(|k| p[k * d..(k + 1) * d].to_vec()).collect(),
                    bias: p[h * d..h * d + h].to_vec(),
                },
                LayerJson {
                    weights: vec![p[h * d + h..h * d + 2 * h].to_vec()],
                    bias: vec![p[h * d + 2 * h]],
                },
            ],
        };
        NetworkJson {
            architecture: self.arch,
            layers,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = NetworkJson::deserialize(de)?;
        let mut params = Vec::with_capacity(j.architecture.n_params());
        for layer in &j.layers {
            for row in &layer.weights {
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&layer.bias);
        }
        // Hidden layout stores b1 before w2, which the loop above already does.
        Network::from_params(j.architecture, params).map_err(serde::de::Error::custom)
    }
}
