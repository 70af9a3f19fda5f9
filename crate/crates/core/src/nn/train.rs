use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dense, Network, Normalization, DEFAULT_HIDDEN_SIZES};
use crate::error::{Error, Result};
use crate::gaze::{GazeClass, NUM_CLASSES};
use crate::ocular::NUM_FEATURES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: DEFAULT_HIDDEN_SIZES.to_vec(),
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch size must be at least 1".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Parameter("hidden layers must have at least one unit".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean training loss of each epoch, accumulated over its minibatches.
    pub loss_trace: Vec<f64>,
}

/// Minibatch SGD with momentum from a He-initialized network.
///
/// Normalization constants are fitted on `features`. The run is fully
/// determined by the seed and the order of the input rows.
pub fn train(features: &[[f64; NUM_FEATURES]], labels: &[GazeClass], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Parameter(format!("{} feature rows but {} labels", features.len(), labels.len())));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("training features must be finite".into()));
    }

    let normalization = Normalization::fit(features)?;
    let inputs: Vec<[f64; NUM_FEATURES]> = features.iter().map(|x| normalization.apply(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::new(he_init(&config.hidden_sizes, &mut rng), normalization)?;
    let mut velocity: Vec<Dense> = network.layers().iter().map(|l| Dense::zeros(l.rows, l.cols)).collect();

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut batch_x = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_x.extend(chunk.iter().map(|&i| inputs[i]));
            batch_y.extend(chunk.iter().map(|&i| labels[i]));
            let (loss, grads) = network.loss_and_gradients(&batch_x, &batch_y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            for ((layer, v), g) in network.layers_mut().iter_mut().zip(&mut velocity).zip(&grads) {
                v.weights.iter_mut().chain(v.bias.iter_mut()).for_each(|x| *x *= config.momentum);
                v.add_scaled(g, -config.learning_rate);
                layer.add_scaled(v, 1.0);
            }
        }
        let mean = epoch_loss / inputs.len() as f64;
        let params_finite = network.layers().iter().all(|l| l.weights.iter().chain(&l.bias).all(|p| p.is_finite()));
        if !mean.is_finite() || !params_finite {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        loss_trace.push(mean);
    }
    Ok(TrainOutcome { network, loss_trace })
}

/// Weights drawn from N(0, 2 / fan_in), biases zero, layers in order.
fn he_init(hidden_sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Dense> {
    let mut dims = vec![NUM_FEATURES];
    dims.extend_from_slice(hidden_sizes);
    dims.push(NUM_CLASSES);
    dims.windows(2)
        .map(|d| {
            let (fan_in, fan_out) = (d[0], d[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive stdev");
            let mut layer = Dense::zeros(fan_out, fan_in);
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
            layer
        })
        .collect()
}
