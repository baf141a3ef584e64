//! The learned distance field: a Fourier-feature MLP with two outputs.
//!
//! The network maps a position (optionally through the frozen [`FourierEncoder`])
//! into `hidden_layers` fully connected layers of `hidden_width` units and a
//! linear two-unit head: signed distance and confidence. Width-preserving
//! hidden blocks can add their input back onto their output (skip
//! connections); the first layer never does. The confidence head is linear by
//! default, which lets a poorly supervised model produce out-of-range
//! confidences exactly as an unsquashed regressor does; a sigmoid variant
//! sits behind `sigmoid_confidence` for the corrected behavior.
//!
//! Training is plain backpropagation with per-parameter Adam; gradients are
//! exact and are checked against central finite differences in the tests.

mod checkpoint;
mod encoder;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encoder::{EncoderConfig, FourierEncoder, ENCODED_DIM, FREQUENCY_ROWS};
pub use train::{
    adam_step, batch_loss, gradients, huber, train, AdamState, Gradients, LayerGradient,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::Point3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
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

/// Architecture of the fully connected trunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub skip_connections: bool,
    /// Squash the confidence head through a sigmoid instead of leaving it
    /// linear.
    pub sigmoid_confidence: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_width: 64,
            activation: Activation::Tanh,
            skip_connections: false,
            sigmoid_confidence: false,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_layers == 0 {
            return Err(ModelError::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.hidden_width == 0 {
            return Err(ModelError::InvalidConfig("hidden_width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub huber_delta: f64,
    /// Weight of the confidence-head term in the loss.
    pub confidence_loss_weight: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.4,
            huber_delta: 1.0,
            confidence_loss_weight: 1.0,
            batch_size: 256,
            epochs: 200,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("huber_delta", self.huber_delta),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.confidence_loss_weight < 0.0 || !self.confidence_loss_weight.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "confidence_loss_weight must be >= 0, got {}",
                self.confidence_loss_weight
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One dense layer, row-major weights of shape (out_dim, in_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn seeded(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            weights,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// y = W x + b
    fn forward_into(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            y.push(acc);
        }
    }
}

/// The trained field: optional encoder plus dense trunk and two-unit head.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfModel {
    pub encoder: Option<FourierEncoder>,
    pub layers: Vec<Layer>,
    pub config: MlpConfig,
}

impl SdfModel {
    /// Seeded initialization: layer weights and biases are drawn in layer
    /// order from a generator seeded with `config.seed`.
    pub fn new(encoder: Option<FourierEncoder>, config: &MlpConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let in_dim = encoder.as_ref().map_or(3, |_| ENCODED_DIM);
        let w = config.hidden_width;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        layers.push(Layer::seeded(in_dim, w, &mut rng));
        for _ in 1..config.hidden_layers {
            layers.push(Layer::seeded(w, w, &mut rng));
        }
        layers.push(Layer::seeded(w, 2, &mut rng));
        Ok(Self {
            encoder,
            layers,
            config: *config,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Expected layer shapes (out, in) for this config and input width.
    pub fn expected_shapes(config: &MlpConfig, in_dim: usize) -> Vec<(usize, usize)> {
        let w = config.hidden_width;
        let mut shapes = vec![(w, in_dim)];
        for _ in 1..config.hidden_layers {
            shapes.push((w, w));
        }
        shapes.push((2, w));
        shapes
    }

    fn input_features(&self, p: &Point3) -> Vec<f64> {
        match &self.encoder {
            Some(enc) => enc.encode(p).to_vec(),
            None => vec![p.x, p.y, p.z],
        }
    }

    /// Evaluate the field: (signed distance, confidence).
    pub fn forward(&self, p: &Point3) -> (f64, f64) {
        let x = self.input_features(p);
        let mut h = x;
        let mut next = Vec::new();
        let trunk_end = self.layers.len() - 1;
        for (i, layer) in self.layers[..trunk_end].iter().enumerate() {
            layer.forward_into(&h, &mut next);
            for v in next.iter_mut() {
                *v = self.config.activation.apply(*v);
            }
            if self.config.skip_connections && i > 0 {
                for (v, prev) in next.iter_mut().zip(&h) {
                    *v += prev;
                }
            }
            std::mem::swap(&mut h, &mut next);
        }
        let head = &self.layers[trunk_end];
        head.forward_into(&h, &mut next);
        let sdf = next[0];
        let conf = if self.config.sigmoid_confidence {
            sigmoid(next[1])
        } else {
            next[1]
        };
        (sdf, conf)
    }

    /// Forward pass keeping every intermediate needed for backpropagation.
    pub(crate) fn forward_trace(&self, p: &Point3) -> ForwardTrace {
        let x = self.input_features(p);
        let trunk_end = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(trunk_end);
        let mut block_outputs: Vec<Vec<f64>> = Vec::with_capacity(trunk_end);
        let mut h = x.clone();
        let mut next = Vec::new();
        for (i, layer) in self.layers[..trunk_end].iter().enumerate() {
            layer.forward_into(&h, &mut next);
            for v in next.iter_mut() {
                *v = self.config.activation.apply(*v);
            }
            activations.push(next.clone());
            if self.config.skip_connections && i > 0 {
                for (v, prev) in next.iter_mut().zip(&h) {
                    *v += prev;
                }
            }
            block_outputs.push(next.clone());
            std::mem::swap(&mut h, &mut next);
        }
        let head = &self.layers[trunk_end];
        let mut out = Vec::new();
        head.forward_into(&h, &mut out);
        let conf = if self.config.sigmoid_confidence {
            sigmoid(out[1])
        } else {
            out[1]
        };
        ForwardTrace {
            input: x,
            activations,
            block_outputs,
            output: (out[0], conf),
        }
    }

    pub fn all_parameters_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intermediates of one forward pass.
pub(crate) struct ForwardTrace {
    pub input: Vec<f64>,
    /// Post-activation values per trunk layer, before any skip addition.
    pub activations: Vec<Vec<f64>>,
    /// Trunk layer outputs after skip addition (what the next layer sees).
    pub block_outputs: Vec<Vec<f64>>,
    pub output: (f64, f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(config: &MlpConfig, with_encoder: bool) -> SdfModel {
        let encoder = with_encoder.then(|| FourierEncoder::new(1.0, 3).unwrap());
        SdfModel::new(encoder, config).unwrap()
    }

    #[test]
    fn zeroed_head_outputs_zero_everywhere() {
        let mut m = model(&MlpConfig::default(), true);
        let head = m.layers.last_mut().unwrap();
        head.weights.iter_mut().for_each(|w| *w = 0.0);
        head.bias.iter_mut().for_each(|b| *b = 0.0);
        for p in [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, -2.0, 3.0),
            Point3::new(-7.5, 0.25, 9.0),
        ] {
            assert_eq!(m.forward(&p), (0.0, 0.0));
        }
    }

    #[test]
    fn forward_is_pure() {
        let m = model(&MlpConfig::default(), true);
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(m.forward(&p), m.forward(&p));
    }

    #[test]
    fn zeroed_skip_blocks_are_identity() {
        // A deep skip model whose width-to-width blocks are all zero must
        // collapse to its one-layer counterpart: act(0) = 0 for both
        // activations, so each zeroed block passes its input straight through.
        for activation in [Activation::Tanh, Activation::Relu] {
            let shallow_config = MlpConfig {
                hidden_layers: 1,
                hidden_width: 16,
                activation,
                skip_connections: false,
                seed: 5,
                ..MlpConfig::default()
            };
            let deep_config = MlpConfig {
                hidden_layers: 4,
                skip_connections: true,
                ..shallow_config
            };
            let shallow = model(&shallow_config, true);
            let mut deep = model(&deep_config, true);
            deep.layers[0] = shallow.layers[0].clone();
            *deep.layers.last_mut().unwrap() = shallow.layers[1].clone();
            for layer in &mut deep.layers[1..4] {
                layer.weights.iter_mut().for_each(|w| *w = 0.0);
                layer.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            for p in [
                Point3::new(0.3, -0.8, 0.5),
                Point3::new(2.0, 1.0, -1.0),
                Point3::new(-4.0, 0.0, 7.0),
            ] {
                assert_eq!(deep.forward(&p), shallow.forward(&p));
            }
        }
    }

    #[test]
    fn parameter_count_formula() {
        for hidden_layers in [1usize, 3, 20] {
            for width in [8usize, 64] {
                let config = MlpConfig {
                    hidden_layers,
                    hidden_width: width,
                    ..MlpConfig::default()
                };
                let m = model(&config, true);
                let expected =
                    64 * width + width + (hidden_layers - 1) * (width * width + width) + 2 * width + 2;
                assert_eq!(m.parameter_count(), expected);
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let config = MlpConfig {
            seed: 42,
            ..MlpConfig::default()
        };
        let a = model(&config, true);
        let b = model(&config, true);
        assert_eq!(a, b);
        for layer in &a.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|v| v.abs() <= bound));
        }
        let c = model(
            &MlpConfig {
                seed: 43,
                ..config
            },
            true,
        );
        assert_ne!(a, c);
    }

    #[test]
    fn tanh_field_is_smooth() {
        let m = model(&MlpConfig::default(), true);
        let h = 1e-5;
        for p in [
            Point3::new(0.1, 0.2, 0.3),
            Point3::new(-1.0, 2.0, 0.5),
            Point3::new(4.0, -3.0, 1.0),
        ] {
            let plus = m.forward(&Point3::new(p.x + h, p.y, p.z)).0;
            let minus = m.forward(&Point3::new(p.x - h, p.y, p.z)).0;
            let derivative = (plus - minus) / (2.0 * h);
            assert!(derivative.is_finite());
        }
    }

    #[test]
    fn sigmoid_head_stays_in_unit_interval() {
        let config = MlpConfig {
            sigmoid_confidence: true,
            ..MlpConfig::default()
        };
        let m = model(&config, true);
        for i in 0..100 {
            let p = Point3::new(i as f64 * 0.37 - 18.0, (i % 7) as f64, (i % 3) as f64 - 1.0);
            let (_, conf) = m.forward(&p);
            assert!(conf > 0.0 && conf < 1.0);
        }
    }

    #[test]
    fn no_encoder_takes_raw_coordinates() {
        let m = model(&MlpConfig::default(), false);
        assert_eq!(m.input_dim(), 3);
        let (sdf, conf) = m.forward(&Point3::new(1.0, 2.0, 3.0));
        assert!(sdf.is_finite() && conf.is_finite());
    }

    #[test]
    fn config_validation() {
        assert!(MlpConfig {
            hidden_layers: 0,
            ..MlpConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: -0.1,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sigmoid_matches_closed_form() {
        assert_abs_diff_eq!(sigmoid(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(2.0), 1.0 / (1.0 + (-2.0f64).exp()), epsilon = 1e-15);
    }
}
