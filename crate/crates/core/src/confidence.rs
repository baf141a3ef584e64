//! Reliability weights for signed-distance labels.
//!
//! LiDAR only sees the visible side of an obstacle, so the deeper a sample
//! sits beyond a ray's termination point the less its negative label can be
//! trusted. The weight is exactly 1 for non-negative distances and decays
//! from 1 + 1e-7 at zero penetration to 1e-7 at the configured maximum:
//!
//! ```text
//! C = (b^w - 1) / (b - 1) + 1e-7,    w = 1 - d / d_max
//! ```
//!
//! with `b > 1` controlling how sharply the decay bends. An alternate
//! reading, `b^(w-1) / (b - 1) + 1e-7`, is kept for side-by-side plots; it
//! misses both endpoint requirements and is not used by the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::SampleSpec;

/// Additive floor keeping every weight strictly positive.
pub const CONFIDENCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("shape parameter b must be > 1, got {0}")]
    InvalidShape(f64),
    #[error("d_max must be > 0, got {0}")]
    InvalidDmax(f64),
    #[error("penetration depth {d} outside [0, {d_max}]")]
    DepthOutOfRange { d: f64, d_max: f64 },
}

/// Shape and normalization of the confidence decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceParams {
    /// Decay shape, > 1.
    pub b: f64,
    /// Largest penetration depth any sample can have, > 0.
    pub d_max: f64,
    /// Fixed additive floor.
    pub epsilon: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self {
            b: 10.0,
            d_max: 3.0,
            epsilon: CONFIDENCE_EPSILON,
        }
    }
}

impl ConfidenceParams {
    pub fn new(b: f64, d_max: f64) -> Result<Self, ConfidenceError> {
        let params = Self {
            b,
            d_max,
            epsilon: CONFIDENCE_EPSILON,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ConfidenceError> {
        if !(self.b > 1.0) || !self.b.is_finite() {
            return Err(ConfidenceError::InvalidShape(self.b));
        }
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(ConfidenceError::InvalidDmax(self.d_max));
        }
        Ok(())
    }
}

/// Confidence of a labeled sample.
///
/// `d` is the penetration depth behind the surface along the ray and only
/// matters when `sdf` is negative; non-negative samples always get 1.
pub fn confidence_value(sdf: f64, d: f64, params: &ConfidenceParams) -> Result<f64, ConfidenceError> {
    params.validate()?;
    if sdf >= 0.0 {
        return Ok(1.0);
    }
    if d < 0.0 || d > params.d_max {
        return Err(ConfidenceError::DepthOutOfRange {
            d,
            d_max: params.d_max,
        });
    }
    let w = 1.0 - d / params.d_max;
    Ok((params.b.powf(w) - 1.0) / (params.b - 1.0) + params.epsilon)
}

/// Alternate typeset reading of the decay, exposed for comparison plots only:
/// at d = 0 it yields 1/(b-1) instead of 1, and at d = d_max it yields
/// 1/(b(b-1)) instead of 0.
pub fn confidence_value_alternate(
    sdf: f64,
    d: f64,
    params: &ConfidenceParams,
) -> Result<f64, ConfidenceError> {
    params.validate()?;
    if sdf >= 0.0 {
        return Ok(1.0);
    }
    if d < 0.0 || d > params.d_max {
        return Err(ConfidenceError::DepthOutOfRange {
            d,
            d_max: params.d_max,
        });
    }
    let w = 1.0 - d / params.d_max;
    Ok(params.b.powf(w - 1.0) / (params.b - 1.0) + params.epsilon)
}

/// The largest penetration depth a dataset built from `spec` can contain,
/// which is its negative-point truncation.
pub fn dmax_from_dataset(spec: &SampleSpec) -> f64 {
    spec.truncation_dmax
}
