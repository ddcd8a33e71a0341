//! Tied-weight single-hidden-layer autoencoder over the columns of an
//! affinity matrix: `Ŵ = φ(Ψ φ(Ψᵀ W))`, fitted under the quantile-Huber loss
//! by mini-batch SGD with a hand-derived gradient.
//!
//! With the identity activation and `P` hidden units this is the linear
//! low-rank `L Rᵀ` decomposition with `L = Ψ`, `Rᵀ = Ψᵀ W`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::loss::{quantile_huber, quantile_huber_grad, QuantileParams};

const STAGE_INIT: u64 = 11;
const STAGE_SHUFFLE: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Self::Sigmoid),
            "identity" => Ok(Self::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    psi: Array2<f64>,
    activation: Activation,
}

/// On-disk form of a model: weights are row-major `n × p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub p: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
}

impl AutoencoderModel {
    pub fn from_weights(psi: Array2<f64>, activation: Activation) -> Result<Self> {
        let (n, p) = psi.dim();
        if p == 0 || p >= n {
            return Err(Error::Config(format!("hidden dimension must satisfy 1 <= p < n, got p={p}, n={n}")));
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("model weights must be finite".into()));
        }
        Ok(Self { psi, activation })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.psi
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.psi.ncols()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            n: self.input_dim(),
            p: self.hidden_dim(),
            activation: self.activation,
            weights: self.psi.iter().copied().collect(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let psi = Array2::from_shape_vec((c.n, c.p), c.weights)
            .map_err(|e| Error::Input(format!("checkpoint shape: {e}")))?;
        Self::from_weights(psi, c.activation)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_checkpoint(serde_json::from_reader(f)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub quantile: QuantileParams,
    pub epochs: usize,
    /// Clamped to N at training time.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            quantile: QuantileParams { tau: 0.5, kappa: crate::loss::DEFAULT_KAPPA },
            epochs: 1000,
            batch_size: 32,
            learning_rate: 2.0,
            activation: Activation::Sigmoid,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        QuantileParams::new(self.quantile.tau, self.quantile.kappa)?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// `max(2, ⌈N/10⌉)` capped at 64, and always below N.
pub fn default_hidden_dim(n: usize) -> usize {
    n.div_ceil(10).max(2).min(64).min(n.saturating_sub(1)).max(1)
}

/// Weights i.i.d. uniform on `[-s, s]`, `s = sqrt(6 / (n + p))`.
pub fn init_model(n: usize, p: usize, activation: Activation, seed: u64) -> Result<AutoencoderModel> {
    if p == 0 || p >= n {
        return Err(Error::Config(format!("hidden dimension must satisfy 1 <= p < n, got p={p}, n={n}")));
    }
    let s = (6.0 / (n + p) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = Array2::from_shape_simple_fn((n, p), || rng.random_range(-s..=s));
    AutoencoderModel::from_weights(psi, activation)
}

/// Hidden code and reconstruction of one column.
pub fn forward(model: &AutoencoderModel, w_col: ArrayView1<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let act = model.activation;
    let hidden = model.psi.t().dot(&w_col).mapv(|v| act.apply(v));
    let output = model.psi.dot(&hidden).mapv(|v| act.apply(v));
    (hidden, output)
}

fn forward_batch(psi: &Array2<f64>, act: Activation, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
    let hidden = psi.t().dot(&x).mapv(|v| act.apply(v));
    let output = psi.dot(&hidden).mapv(|v| act.apply(v));
    (hidden, output)
}

/// Loss `Σ ρ_τ(X - φ(Ψ φ(Ψᵀ X)))` over the columns of `x` and its gradient in `Ψ`.
pub fn objective_and_gradient(
    model: &AutoencoderModel,
    x: ArrayView2<'_, f64>,
    params: QuantileParams,
) -> (f64, Array2<f64>) {
    let act = model.activation;
    let psi = &model.psi;
    let (hidden, output) = forward_batch(psi, act, x);

    let mut loss = 0.0;
    // dL/dZ at the output pre-activation
    let mut g_out = Array2::zeros(output.raw_dim());
    Zip::from(&mut g_out).and(&x).and(&output).for_each(|g, &xv, &y| {
        let r = xv - y;
        loss += quantile_huber(r, params);
        *g = -quantile_huber_grad(r, params) * act.slope_from_output(y);
    });

    let mut g_hidden = psi.t().dot(&g_out);
    Zip::from(&mut g_hidden)
        .and(&hidden)
        .for_each(|g, &h| *g *= act.slope_from_output(h));

    let mut grad = g_out.dot(&hidden.t());
    grad += &x.dot(&g_hidden.t());
    (loss, grad)
}

/// Objective over every column of `w` without the gradient.
pub fn objective(model: &AutoencoderModel, w: ArrayView2<'_, f64>, params: QuantileParams) -> f64 {
    let (_, output) = forward_batch(&model.psi, model.activation, w);
    w.iter().zip(output.iter()).map(|(&a, &b)| quantile_huber(a - b, params)).sum()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AutoencoderModel,
    /// Summed batch losses per epoch, each measured before that batch's update.
    pub epoch_losses: Vec<f64>,
}

pub fn train(w: &AffinityMatrix, config: &TrainConfig, hidden_dim: usize) -> Result<AutoencoderModel> {
    train_with_history(w, config, hidden_dim).map(|o| o.model)
}

/// Serial mini-batch SGD over shuffled columns; deterministic for a fixed seed.
pub fn train_with_history(w: &AffinityMatrix, config: &TrainConfig, hidden_dim: usize) -> Result<TrainOutcome> {
    config.validate()?;
    let w = w.matrix();
    let n = w.nrows();
    let mut model = init_model(n, hidden_dim, config.activation, derive_seed(config.seed, STAGE_INIT, 0))?;
    let batch = config.batch_size.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STAGE_SHUFFLE, 0));
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, cols) in order.chunks(batch).enumerate() {
            let x = w.select(Axis(1), cols);
            let (loss, grad) = objective_and_gradient(&model, x.view(), config.quantile);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch, batch: b });
            }
            epoch_loss += loss;
            model.psi.scaled_add(-config.learning_rate / cols.len() as f64, &grad);
        }
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Column-wise reconstruction, symmetrized as `(Ŵ + Ŵᵀ) / 2`.
pub fn reconstruct(model: &AutoencoderModel, w: &AffinityMatrix) -> Result<Array2<f64>> {
    let n = w.len();
    if model.input_dim() != n {
        return Err(Error::Input(format!("model expects {} nodes, affinity has {n}", model.input_dim())));
    }
    let (_, out) = forward_batch(&model.psi, model.activation, w.matrix().view());
    let sym = (&out + &out.t()) * 0.5;
    Ok(sym)
}
