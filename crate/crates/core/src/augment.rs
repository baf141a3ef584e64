//! Ray-based training-sample generation.
//!
//! Every obstacle return defines a ray from the sensor origin to the hit
//! point. Positive samples are drawn on the free segment before the hit,
//! negative samples beyond it up to a truncation depth, either uniformly or
//! from a Gaussian centered on the termination point. Each sample's distance
//! magnitude comes from the nearest surface point anywhere in the scene,
//! its sign from which side of the hit it was drawn on, and its confidence
//! from the penetration depth. The hit points themselves enter the dataset
//! with distance 0 and confidence 1.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{self, ConfidenceParams};
use crate::pointcloud::{Point3, PointCloud};
use crate::spatial::{self, SurfaceIndex};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("obstacle point {index} coincides with the sensor origin")]
    ZeroLengthRay { index: usize },
    #[error("empty obstacle cloud")]
    EmptyCloud,
    #[error("invalid sample spec: {0}")]
    InvalidSpec(String),
    #[error("tagged point references ray {ray} but only {count} rays exist")]
    RayOutOfRange { ray: usize, count: usize },
    #[error(transparent)]
    Confidence(#[from] crate::confidence::ConfidenceError),
    #[error(transparent)]
    Spatial(#[from] crate::spatial::SpatialError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed dataset line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
}

/// A LiDAR ray from the sensor origin through a surface hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3,
    /// Unit vector toward the hit point.
    pub direction: Point3,
    /// Ray parameter of the hit point, > 0.
    pub t_hit: f64,
}

impl Ray {
    pub fn point_at(&self, t: f64) -> Point3 {
        Point3::new(
            self.origin.x + t * self.direction.x,
            self.origin.y + t * self.direction.y,
            self.origin.z + t * self.direction.z,
        )
    }
}

/// How many samples to draw per ray and where.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    pub n_positive: usize,
    pub n_negative: usize,
    /// Maximum penetration beyond the hit point, in meters.
    pub truncation_dmax: f64,
    /// Standard deviation of the Gaussian scheme, in meters.
    pub gaussian_sigma: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            n_positive: 4,
            n_negative: 4,
            truncation_dmax: 3.0,
            gaussian_sigma: 0.5,
            seed: 0,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.truncation_dmax > 0.0) || !self.truncation_dmax.is_finite() {
            return Err(AugmentError::InvalidSpec(format!(
                "truncation_dmax must be > 0, got {}",
                self.truncation_dmax
            )));
        }
        if !(self.gaussian_sigma > 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(AugmentError::InvalidSpec(format!(
                "gaussian_sigma must be > 0, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }
}

/// Sampling scheme along each ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Uniform,
    Gaussian,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Uniform => write!(f, "uniform"),
            Method::Gaussian => write!(f, "gaussian"),
        }
    }
}

/// Which side of the termination point a sample came from. The sign of its
/// distance label depends on this tag alone, never on the magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

/// A sampled position before labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedPoint {
    pub position: Point3,
    /// Ray parameter the sample was drawn at.
    pub t: f64,
    pub side: Side,
    pub ray_index: usize,
}

/// One training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub position: Point3,
    /// Signed distance in meters; negative means beyond/inside a surface.
    pub sdf: f64,
    pub confidence: f64,
    pub source_ray: usize,
}

/// A full training set: surface points first, augmented samples after.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub spec: SampleSpec,
    pub method: Method,
    pub surface_count: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The surface subset (distance 0, confidence 1).
    pub fn surface_samples(&self) -> &[LabeledSample] {
        &self.samples[..self.surface_count]
    }

    /// The ray-augmented subset.
    pub fn augmented_samples(&self) -> &[LabeledSample] {
        &self.samples[self.surface_count..]
    }
}

/// One ray per obstacle point: origin at the sensor, direction toward the
/// point, hit parameter at its distance.
pub fn rays_from_cloud(obstacles: &PointCloud) -> Result<Vec<Ray>, AugmentError> {
    if obstacles.is_empty() {
        return Err(AugmentError::EmptyCloud);
    }
    let origin = obstacles.sensor_origin;
    let mut rays = Vec::with_capacity(obstacles.len());
    for (index, p) in obstacles.points.iter().enumerate() {
        let dx = p.position.x - origin.x;
        let dy = p.position.y - origin.y;
        let dz = p.position.z - origin.z;
        let t_hit = (dx * dx + dy * dy + dz * dz).sqrt();
        if t_hit == 0.0 {
            return Err(AugmentError::ZeroLengthRay { index });
        }
        rays.push(Ray {
            origin,
            direction: Point3::new(dx / t_hit, dy / t_hit, dz / t_hit),
            t_hit,
        });
    }
    Ok(rays)
}

/// Draw `n_positive` parameters uniformly on (0, t_hit) and `n_negative`
/// uniformly on (t_hit, t_hit + truncation_dmax). Exact endpoint draws are
/// rejected and redrawn so tags stay unambiguous.
pub fn sample_uniform(ray: &Ray, spec: &SampleSpec, rng: &mut ChaCha8Rng) -> Vec<TaggedPoint> {
    let mut out = Vec::with_capacity(spec.n_positive + spec.n_negative);
    for _ in 0..spec.n_positive {
        let t = loop {
            let t = rng.gen_range(0.0..ray.t_hit);
            if t > 0.0 {
                break t;
            }
        };
        out.push(TaggedPoint {
            position: ray.point_at(t),
            t,
            side: Side::Positive,
            ray_index: 0,
        });
    }
    for _ in 0..spec.n_negative {
        let hi = ray.t_hit + spec.truncation_dmax;
        let t = loop {
            let t = rng.gen_range(ray.t_hit..hi);
            if t > ray.t_hit {
                break t;
            }
        };
        out.push(TaggedPoint {
            position: ray.point_at(t),
            t,
            side: Side::Negative,
            ray_index: 0,
        });
    }
    out
}

/// Draw `n_positive + n_negative` parameters from a Gaussian centered on the
/// termination point, redrawing anything outside (0, t_hit + truncation_dmax],
/// and tag each draw by the side of the hit it landed on.
pub fn sample_gaussian(ray: &Ray, spec: &SampleSpec, rng: &mut ChaCha8Rng) -> Vec<TaggedPoint> {
    let total = spec.n_positive + spec.n_negative;
    let normal = Normal::new(ray.t_hit, spec.gaussian_sigma).expect("validated sigma");
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        let t = loop {
            let t = normal.sample(rng);
            if t > 0.0 && t <= ray.t_hit + spec.truncation_dmax {
                break t;
            }
        };
        let side = if t <= ray.t_hit {
            Side::Positive
        } else {
            Side::Negative
        };
        out.push(TaggedPoint {
            position: ray.point_at(t),
            t,
            side,
            ray_index: 0,
        });
    }
    out
}

/// Label tagged samples: magnitude from the nearest indexed surface point,
/// sign from the ray tag, confidence from the penetration magnitude.
///
/// The magnitude used for confidence is the labeled |distance| itself, which
/// never exceeds the geometric penetration depth and therefore stays within
/// the truncation bound.
pub fn label_samples(
    positions: &[TaggedPoint],
    index: &SurfaceIndex,
    rays: &[Ray],
    spec: &SampleSpec,
    conf_params: &ConfidenceParams,
) -> Result<Vec<LabeledSample>, AugmentError> {
    spec.validate()?;
    conf_params.validate()?;
    let mut out = Vec::with_capacity(positions.len());
    for tagged in positions {
        if tagged.ray_index >= rays.len() {
            return Err(AugmentError::RayOutOfRange {
                ray: tagged.ray_index,
                count: rays.len(),
            });
        }
        let magnitude = index.nearest(&tagged.position).distance;
        let sdf = match tagged.side {
            Side::Positive => magnitude,
            Side::Negative => -magnitude,
        };
        let confidence = match tagged.side {
            Side::Positive => 1.0,
            Side::Negative => confidence_value_for(sdf, magnitude, conf_params)?,
        };
        out.push(LabeledSample {
            position: tagged.position,
            sdf,
            confidence,
            source_ray: tagged.ray_index,
        });
    }
    Ok(out)
}

fn confidence_value_for(
    sdf: f64,
    magnitude: f64,
    conf_params: &ConfidenceParams,
) -> Result<f64, AugmentError> {
    Ok(confidence::confidence_value(sdf, magnitude, conf_params)?)
}

/// Build the full training set for an obstacle cloud.
///
/// Surface points come first with distance 0 and confidence 1, then the
/// augmented samples ray by ray. Each ray draws from its own generator seeded
/// with `spec.seed ^ ray_index`, so the result is a pure function of the
/// inputs regardless of evaluation order.
pub fn build_dataset(
    obstacles: &PointCloud,
    spec: &SampleSpec,
    method: Method,
    conf_params: &ConfidenceParams,
) -> Result<Dataset, AugmentError> {
    spec.validate()?;
    conf_params.validate()?;
    let rays = rays_from_cloud(obstacles)?;
    let points = obstacles.positions();
    let index = spatial::build_index(&points, spatial::default_leaf_capacity(points.len()))?;

    let mut samples: Vec<LabeledSample> = points
        .iter()
        .enumerate()
        .map(|(i, p)| LabeledSample {
            position: *p,
            sdf: 0.0,
            confidence: 1.0,
            source_ray: i,
        })
        .collect();
    let surface_count = samples.len();

    let mut tagged = Vec::with_capacity(rays.len() * (spec.n_positive + spec.n_negative));
    for (ray_index, ray) in rays.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ray_index as u64);
        let mut drawn = match method {
            Method::Uniform => sample_uniform(ray, spec, &mut rng),
            Method::Gaussian => sample_gaussian(ray, spec, &mut rng),
        };
        for t in drawn.iter_mut() {
            t.ray_index = ray_index;
        }
        tagged.extend(drawn);
    }
    samples.extend(label_samples(&tagged, &index, &rays, spec, conf_params)?);

    Ok(Dataset {
        samples,
        spec: *spec,
        method,
        surface_count,
    })
}

/// The dataset's text form: a header comment with the generation parameters,
/// then one `x y z sdf confidence` record per line at 9 significant digits.
pub fn dataset_text(dataset: &Dataset) -> String {
    let mut out = String::new();
    let s = &dataset.spec;
    out.push_str(&format!(
        "# dataset method={} n_positive={} n_negative={} truncation_dmax={:.9e} gaussian_sigma={:.9e} seed={} surface_count={}\n",
        dataset.method, s.n_positive, s.n_negative, s.truncation_dmax, s.gaussian_sigma, s.seed,
        dataset.surface_count
    ));
    out.push_str("# x y z sdf confidence\n");
    for rec in &dataset.samples {
        out.push_str(&format!(
            "{:.8e} {:.8e} {:.8e} {:.8e} {:.8e}\n",
            rec.position.x, rec.position.y, rec.position.z, rec.sdf, rec.confidence
        ));
    }
    out
}

/// Write [`dataset_text`] to a file.
pub fn save_dataset<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<(), AugmentError> {
    let path_str = path.as_ref().display().to_string();
    let mut file = fs::File::create(&path).map_err(|source| AugmentError::Io {
        path: path_str.clone(),
        source,
    })?;
    file.write_all(dataset_text(dataset).as_bytes())
        .map_err(|source| AugmentError::Io {
            path: path_str,
            source,
        })
}

/// Read a dataset written by [`save_dataset`].
pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<Dataset, AugmentError> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path).map_err(|source| AugmentError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut spec = SampleSpec::default();
    let mut method = Method::Uniform;
    let mut surface_count = 0usize;
    let mut samples = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(fields) = rest.strip_prefix("dataset") {
                for kv in fields.split_whitespace() {
                    let Some((key, value)) = kv.split_once('=') else {
                        continue;
                    };
                    let bad = |reason: String| AugmentError::MalformedLine {
                        path: path_str.clone(),
                        line: lineno + 1,
                        reason,
                    };
                    match key {
                        "method" => {
                            method = match value {
                                "uniform" => Method::Uniform,
                                "gaussian" => Method::Gaussian,
                                _ => return Err(bad(format!("unknown method {value:?}"))),
                            }
                        }
                        "n_positive" => {
                            spec.n_positive =
                                value.parse().map_err(|_| bad(format!("bad {key}")))?
                        }
                        "n_negative" => {
                            spec.n_negative =
                                value.parse().map_err(|_| bad(format!("bad {key}")))?
                        }
                        "truncation_dmax" => {
                            spec.truncation_dmax =
                                value.parse().map_err(|_| bad(format!("bad {key}")))?
                        }
                        "gaussian_sigma" => {
                            spec.gaussian_sigma =
                                value.parse().map_err(|_| bad(format!("bad {key}")))?
                        }
                        "seed" => {
                            spec.seed = value.parse().map_err(|_| bad(format!("bad {key}")))?
                        }
                        "surface_count" => {
                            surface_count =
                                value.parse().map_err(|_| bad(format!("bad {key}")))?
                        }
                        _ => {}
                    }
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(AugmentError::MalformedLine {
                path: path_str.clone(),
                line: lineno + 1,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 5];
        for (slot, f) in vals.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| AugmentError::MalformedLine {
                path: path_str.clone(),
                line: lineno + 1,
                reason: format!("not a number: {f:?}"),
            })?;
        }
        samples.push(LabeledSample {
            position: Point3::new(vals[0], vals[1], vals[2]),
            sdf: vals[3],
            confidence: vals[4],
            source_ray: 0,
        });
    }
    let surface_count = surface_count.min(samples.len());
    Ok(Dataset {
        samples,
        spec,
        method,
        surface_count,
    })
}
