//! Small fully connected classifier: affine layers with ReLU between them,
//! log-softmax on the output, trained with mean negative log-likelihood.
//!
//! Everything is plain `f64` vectors; the network has a few thousand
//! parameters so there is nothing to gain from a tensor library.

mod model_file;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{GazeClass, NUM_CLASSES};
use crate::ocular::{OcularFeatureVector, NUM_FEATURES};

pub use model_file::FORMAT_VERSION;
pub use train::{train, TrainConfig, TrainOutcome};

pub const DEFAULT_HIDDEN_SIZES: [usize; 3] = [32, 24, 16];

/// Affine layer `y = W x + b` with `W` stored row-major, `rows` outputs by `cols` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn is_well_formed(&self) -> bool {
        self.rows > 0
            && self.cols > 0
            && self.weights.len() == self.rows * self.cols
            && self.bias.len() == self.rows
            && self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn add_scaled(&mut self, other: &Dense, scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&other.bias) {
            *b += scale * g;
        }
    }
}

/// Per-feature z-score constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
}

impl Normalization {
    pub fn identity() -> Self {
        Self { means: vec![0.0; NUM_FEATURES], stdevs: vec![1.0; NUM_FEATURES] }
    }

    /// Population mean and standard deviation per column; constant columns get a stdev of 1.
    pub fn fit(samples: &[[f64; NUM_FEATURES]]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("cannot fit normalization on an empty set".into()));
        }
        let n = samples.len() as f64;
        let mut means = vec![0.0; NUM_FEATURES];
        let mut stdevs = vec![0.0; NUM_FEATURES];
        for j in 0..NUM_FEATURES {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            means[j] = mean;
            stdevs[j] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        }
        Ok(Self { means, stdevs })
    }

    pub fn apply(&self, x: &[f64; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
        std::array::from_fn(|j| (x[j] - self.means[j]) / self.stdevs[j])
    }

    fn validate(&self) -> Result<()> {
        if self.means.len() != NUM_FEATURES || self.stdevs.len() != NUM_FEATURES {
            return Err(Error::Config(format!("normalization needs {NUM_FEATURES} means and stdevs")));
        }
        if self.means.iter().any(|m| !m.is_finite()) || self.stdevs.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("normalization constants must be finite with positive stdevs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: GazeClass,
    pub confidences: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
    normalization: Normalization,
}

impl Network {
    /// Checks that layer shapes chain from the feature vector to the nine classes.
    pub fn new(layers: Vec<Dense>, normalization: Normalization) -> Result<Self> {
        normalization.validate()?;
        let Some(last) = layers.last() else {
            return Err(Error::Config("network has no layers".into()));
        };
        if let Some(bad) = layers.iter().position(|l| !l.is_well_formed()) {
            return Err(Error::Config(format!("layer {bad} has inconsistent or non-finite parameters")));
        }
        if layers[0].cols != NUM_FEATURES {
            return Err(Error::Config(format!("first layer takes {} inputs, expected {NUM_FEATURES}", layers[0].cols)));
        }
        if last.rows != NUM_CLASSES {
            return Err(Error::Config(format!("last layer has {} outputs, expected {NUM_CLASSES}", last.rows)));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].rows != pair[1].cols {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} values but layer {} takes {}",
                    pair[0].rows,
                    i + 1,
                    pair[1].cols
                )));
            }
        }
        Ok(Self { layers, normalization })
    }

    /// All-zero parameters with the given hidden sizes.
    pub fn zeros(hidden_sizes: &[usize]) -> Result<Self> {
        let mut dims = vec![NUM_FEATURES];
        dims.extend_from_slice(hidden_sizes);
        dims.push(NUM_CLASSES);
        let layers = dims.windows(2).map(|d| Dense::zeros(d[1], d[0])).collect();
        Self::new(layers, Normalization::identity())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Direct parameter access; shapes must not be changed.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Logits for an already normalized input.
    pub fn forward(&self, x: &[f64; NUM_FEATURES]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a);
            if i < last {
                a.iter_mut().for_each(|v| *v = relu(*v));
            }
        }
        a
    }

    pub fn predict(&self, features: &OcularFeatureVector) -> Prediction {
        self.predict_normalized(&self.normalization.apply(&features.to_array()))
    }

    pub fn predict_normalized(&self, x: &[f64; NUM_FEATURES]) -> Prediction {
        let logits = self.forward(x);
        let log_probs = log_softmax(&logits);
        let class = GazeClass::from_index(argmax(&logits)).expect("nine outputs");
        Prediction { class, confidences: std::array::from_fn(|k| log_probs[k].exp()) }
    }

    /// Mean NLL over the batch and its gradient with respect to every layer.
    /// Inputs are normalized; ReLU has zero subgradient at zero.
    pub fn loss_and_gradients(&self, xs: &[[f64; NUM_FEATURES]], labels: &[GazeClass]) -> Result<(f64, Vec<Dense>)> {
        check_batch(xs.len(), labels.len())?;
        let n = xs.len() as f64;
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;

        for (x, label) in xs.iter().zip(labels) {
            // activations[i] is the input to layer i; pre[i] its affine output.
            let mut activations = vec![x.to_vec()];
            let mut pre = Vec::with_capacity(self.layers.len());
            for (i, layer) in self.layers.iter().enumerate() {
                let z = layer.forward(activations.last().expect("input present"));
                if i < last {
                    activations.push(z.iter().map(|&v| relu(v)).collect());
                }
                pre.push(z);
            }
            let log_probs = log_softmax(&pre[last]);
            loss -= log_probs[label.index()];

            let mut delta: Vec<f64> = log_probs.iter().map(|lp| lp.exp() / n).collect();
            delta[label.index()] -= 1.0 / n;
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                let input = &activations[i];
                let g = &mut grads[i];
                for r in 0..layer.rows {
                    g.bias[r] += delta[r];
                    let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[r] * a;
                    }
                }
                if i > 0 {
                    delta = (0..layer.cols)
                        .map(|c| {
                            if pre[i - 1][c] > 0.0 {
                                (0..layer.rows).map(|r| layer.weight(r, c) * delta[r]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        Ok((loss / n, grads))
    }

    /// Mean NLL without gradients.
    pub fn loss(&self, xs: &[[f64; NUM_FEATURES]], labels: &[GazeClass]) -> Result<f64> {
        check_batch(xs.len(), labels.len())?;
        let log_probs: Vec<Vec<f64>> = xs.iter().map(|x| log_softmax(&self.forward(x))).collect();
        nll_loss(&log_probs, labels)
    }
}

fn check_batch(n_x: usize, n_y: usize) -> Result<()> {
    if n_x == 0 {
        return Err(Error::Parameter("empty batch".into()));
    }
    if n_x != n_y {
        return Err(Error::Parameter(format!("{n_x} inputs but {n_y} labels")));
    }
    Ok(())
}

pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// `f_k - m - ln Σ exp(f_i - m)` with `m` the largest logit.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|f| (f - m).exp()).sum::<f64>().ln();
    logits.iter().map(|f| f - m - log_sum).collect()
}

/// Mean of the negated true-class log-probabilities.
pub fn nll_loss(log_probs: &[Vec<f64>], labels: &[GazeClass]) -> Result<f64> {
    check_batch(log_probs.len(), labels.len())?;
    let total: f64 = log_probs.iter().zip(labels).map(|(lp, c)| -lp[c.index()]).sum();
    Ok(total / log_probs.len() as f64)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn class(l: u8) -> GazeClass {
        GazeClass::new(l).unwrap()
    }

    fn random_network(seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::zeros(&DEFAULT_HIDDEN_SIZES).unwrap();
        for layer in net.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
            layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        }
        net
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let net = Network::zeros(&DEFAULT_HIDDEN_SIZES).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5, 9.0, -4.0]), vec![0.0; 9]);
        assert_eq!(net.parameter_count(), 32 * 7 + 24 * 33 + 16 * 25 + 9 * 17);
        assert_eq!(net.hidden_sizes(), vec![32, 24, 16]);
    }

    #[test]
    fn identity_path_passes_positive_input() {
        let mut net = Network::zeros(&[6, 6]).unwrap();
        for layer in net.layers_mut() {
            for i in 0..layer.rows.min(layer.cols) {
                layer.weights[i * layer.cols + i] = 1.0;
            }
        }
        let x = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(&net.forward(&x)[..6], &x);
    }

    #[test]
    fn forward_matches_matrix_oracle() {
        let net = random_network(3);
        let x = [0.3, -1.2, 0.8, 2.0, -0.4, 1.1];
        let mut a: Vec<f64> = x.to_vec();
        for (i, l) in net.layers().iter().enumerate() {
            let mut out = vec![0.0; l.rows];
            for r in 0..l.rows {
                let mut s = l.bias[r];
                for c in 0..l.cols {
                    s += l.weights[r * l.cols + c] * a[c];
                }
                out[r] = if i + 1 < net.layers().len() { s.max(0.0) } else { s };
            }
            a = out;
        }
        for (got, want) in net.forward(&x).iter().zip(&a) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_chain_is_validated() {
        let mut layers = Network::zeros(&[4]).unwrap().layers().to_vec();
        layers[1] = Dense::zeros(9, 5);
        assert!(matches!(Network::new(layers, Normalization::identity()), Err(Error::Config(_))));
        assert!(Network::new(vec![Dense::zeros(8, 6)], Normalization::identity()).is_err());
        let bad_norm = Normalization { means: vec![0.0; 6], stdevs: vec![0.0; 6] };
        assert!(Network::new(vec![Dense::zeros(9, 6)], bad_norm).is_err());
    }

    #[test]
    fn log_softmax_cases() {
        let two = log_softmax(&[0.7, 0.7]);
        assert!((two[0] + std::f64::consts::LN_2).abs() < 1e-15);
        let mut big = vec![0.0; 9];
        big[0] = 1000.0;
        let out = log_softmax(&big);
        assert!(out.iter().all(|v| v.is_finite()));
        assert!(out[0].abs() < 1e-12);
        assert!((out[1] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn nll_cases() {
        let perfect = vec![{
            let mut v = vec![f64::NEG_INFINITY; 9];
            v[2] = 0.0;
            v
        }];
        assert_eq!(nll_loss(&perfect, &[class(3)]).unwrap(), 0.0);
        let uniform = vec![vec![-(9f64.ln()); 9]];
        assert!((nll_loss(&uniform, &[class(1)]).unwrap() - 9f64.ln()).abs() < 1e-15);
        let pair = vec![vec![0.5f64.ln(); 9], vec![0.25f64.ln(); 9]];
        let loss = nll_loss(&pair, &[class(1), class(9)]).unwrap();
        assert!((loss - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        assert!((loss - 1.0397).abs() < 1e-4);
        assert!(nll_loss(&[], &[]).is_err());
    }

    #[test]
    fn last_bias_gradient_of_zero_network() {
        let net = Network::zeros(&DEFAULT_HIDDEN_SIZES).unwrap();
        let (loss, grads) = net.loss_and_gradients(&[[0.0; 6]], &[class(4)]).unwrap();
        assert!((loss - 9f64.ln()).abs() < 1e-12);
        let b4 = &grads.last().unwrap().bias;
        for (k, g) in b4.iter().enumerate() {
            let expected = 1.0 / 9.0 - if k == 3 { 1.0 } else { 0.0 };
            assert!((g - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicated_batch_keeps_gradients() {
        let net = random_network(11);
        let xs = [[0.1, 0.2, -0.3, 1.0, -1.0, 0.5], [1.5, -0.2, 0.3, -1.0, 0.0, 0.7]];
        let ys = [class(2), class(8)];
        let (l1, g1) = net.loss_and_gradients(&xs, &ys).unwrap();
        let xs2 = [xs[0], xs[1], xs[0], xs[1]];
        let ys2 = [ys[0], ys[1], ys[0], ys[1]];
        let (l2, g2) = net.loss_and_gradients(&xs2, &ys2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.weights.iter().chain(&a.bias).zip(b.weights.iter().chain(&b.bias)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!((net.loss(&xs, &ys).unwrap() - l1).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        assert_eq!(argmax(&[0.0, 3.0, 3.0, 1.0]), 1);
        let mut logits = vec![0.0; 9];
        logits[6] = 2.0;
        assert_eq!(argmax(&logits), 6);
    }

    #[test]
    fn normalization_fit() {
        let samples = [[1.0, 2.0, 5.0, 0.0, 0.0, 0.0], [3.0, 2.0, 7.0, 0.0, 0.0, 0.0]];
        let n = Normalization::fit(&samples).unwrap();
        assert_eq!(n.means[..3], [2.0, 2.0, 6.0]);
        assert_eq!(n.stdevs[..3], [1.0, 1.0, 1.0]);
        assert_eq!(n.apply(&samples[0])[0], -1.0);
        assert!(Normalization::fit(&[]).is_err());
    }

    proptest! {
        #[test]
        fn log_softmax_is_normalized_and_shift_invariant(
            logits in proptest::collection::vec(-50.0f64..50.0, 9),
            c in -1e3f64..1e3,
        ) {
            let lp = log_softmax(&logits);
            prop_assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
            for (a, b) in lp.iter().zip(log_softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert_eq!(argmax(&logits), argmax(&shifted));
        }

        #[test]
        fn confidences_agree_with_logits(seed in 0u64..50, x in proptest::array::uniform6(-3.0f64..3.0)) {
            let net = random_network(seed);
            let p = net.predict_normalized(&x);
            prop_assert!((p.confidences.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(argmax(&p.confidences), p.class.index());
        }
    }
}
