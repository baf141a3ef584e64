//! Random Fourier feature encoding of spatial positions.
//!
//! A frozen 32x3 matrix of Gaussian frequencies maps a position to 32 phases;
//! the encoding is their sines followed by their cosines, 64 features total.
//! The matrix is drawn once from a seeded generator and never trained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::pointcloud::Point3;

use super::ModelError;

/// Number of frequency rows; the encoding is twice this wide.
pub const FREQUENCY_ROWS: usize = 32;
/// Encoder output dimensionality.
pub const ENCODED_DIM: usize = 2 * FREQUENCY_ROWS;

/// Construction parameters of a [`FourierEncoder`], enough to rebuild its
/// matrix exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Standard deviation of the frequency entries, per meter.
    pub freq_scale: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            freq_scale: 1.0,
            seed: 0,
        }
    }
}

/// Frozen sin/cos feature map from R^3 to R^64.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoder {
    /// Row-major 32x3 frequency matrix.
    frequencies: Vec<f64>,
    config: EncoderConfig,
}

impl FourierEncoder {
    pub fn new(freq_scale: f64, seed: u64) -> Result<Self, ModelError> {
        Self::from_config(&EncoderConfig { freq_scale, seed })
    }

    pub fn from_config(config: &EncoderConfig) -> Result<Self, ModelError> {
        if !(config.freq_scale > 0.0) || !config.freq_scale.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "freq_scale must be > 0, got {}",
                config.freq_scale
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let frequencies = (0..FREQUENCY_ROWS * 3)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * config.freq_scale
            })
            .collect();
        Ok(Self {
            frequencies,
            config: *config,
        })
    }

    /// Rebuild an encoder around an explicit matrix (checkpoint restore).
    pub(crate) fn from_parts(config: EncoderConfig, frequencies: Vec<f64>) -> Result<Self, ModelError> {
        if frequencies.len() != FREQUENCY_ROWS * 3 {
            return Err(ModelError::ShapeMismatch(format!(
                "frequency matrix has {} entries, expected {}",
                frequencies.len(),
                FREQUENCY_ROWS * 3
            )));
        }
        Ok(Self {
            frequencies,
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// sin(2*pi*F*p) followed by cos(2*pi*F*p).
    pub fn encode(&self, p: &Point3) -> [f64; ENCODED_DIM] {
        let mut out = [0.0; ENCODED_DIM];
        for row in 0..FREQUENCY_ROWS {
            let f = &self.frequencies[row * 3..row * 3 + 3];
            let phase = std::f64::consts::TAU * (f[0] * p.x + f[1] * p.y + f[2] * p.z);
            out[row] = phase.sin();
            out[FREQUENCY_ROWS + row] = phase.cos();
        }
        out
    }
}
