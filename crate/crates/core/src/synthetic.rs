//! Analytic scenes with exact signed distances and a simulated scanner.
//!
//! Scenes are unions of spheres, axis-aligned boxes, and vertical cylinders.
//! The union distance is the member minimum, exact everywhere as long as the
//! primitives are disjoint, which the benchmark scenes keep to. The scanner
//! sphere-traces one ray per (elevation, azimuth) pair and reports hit points
//! as a point cloud, which makes the whole training pipeline checkable
//! against exact ground truth.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, Dataset, Method, SampleSpec};
use crate::confidence::ConfidenceParams;
use crate::pointcloud::{CloudPoint, Point3, PointCloud};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("scene has no primitives")]
    EmptyScene,
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("scan origin is inside an obstacle (distance {0})")]
    OriginInsideObstacle(f64),
    #[error("invalid scan config: {0}")]
    InvalidScan(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scene file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}

/// An analytic solid with an exact signed distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
    /// Vertical-axis cylinder.
    Cylinder {
        center: [f64; 3],
        radius: f64,
        half_height: f64,
    },
}

impl Primitive {
    pub fn sdf(&self, p: &Point3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => {
                let dx = p.x - center[0];
                let dy = p.y - center[1];
                let dz = p.z - center[2];
                (dx * dx + dy * dy + dz * dz).sqrt() - radius
            }
            Primitive::Box {
                center,
                half_extents,
            } => {
                let q = [
                    (p.x - center[0]).abs() - half_extents[0],
                    (p.y - center[1]).abs() - half_extents[1],
                    (p.z - center[2]).abs() - half_extents[2],
                ];
                let outside = (q[0].max(0.0).powi(2)
                    + q[1].max(0.0).powi(2)
                    + q[2].max(0.0).powi(2))
                .sqrt();
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                outside + inside
            }
            Primitive::Cylinder {
                center,
                radius,
                half_height,
            } => {
                let dx = p.x - center[0];
                let dy = p.y - center[1];
                let radial = (dx * dx + dy * dy).sqrt() - radius;
                let axial = (p.z - center[2]).abs() - half_height;
                let outside =
                    (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt();
                let inside = radial.max(axial).min(0.0);
                outside + inside
            }
        }
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        let ok = match self {
            Primitive::Sphere { radius, .. } => *radius > 0.0,
            Primitive::Box { half_extents, .. } => half_extents.iter().all(|&h| h > 0.0),
            Primitive::Cylinder {
                radius,
                half_height,
                ..
            } => *radius > 0.0 && *half_height > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SyntheticError::InvalidPrimitive(format!("{self:?}")))
        }
    }
}

/// A union of primitives; the scene distance is the member minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self, SyntheticError> {
        if primitives.is_empty() {
            return Err(SyntheticError::EmptyScene);
        }
        for p in &primitives {
            p.validate()?;
        }
        Ok(Self { primitives })
    }

    /// The desk-scale benchmark: a sphere and a box in front of the sensor,
    /// far enough apart that the union distance is exact everywhere.
    pub fn two_obstacle_street() -> Self {
        Self {
            primitives: vec![
                Primitive::Sphere {
                    center: [6.0, 2.0, 0.0],
                    radius: 1.0,
                },
                Primitive::Box {
                    center: [8.0, -3.0, 0.0],
                    half_extents: [2.0, 1.0, 1.0],
                },
            ],
        }
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, SyntheticError> {
        let path_str = path.as_ref().display().to_string();
        let text = fs::read_to_string(&path).map_err(|source| SyntheticError::Io {
            path: path_str.clone(),
            source,
        })?;
        let scene: Scene = serde_json::from_str(&text).map_err(|source| SyntheticError::Parse {
            path: path_str,
            source,
        })?;
        Scene::new(scene.primitives)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), SyntheticError> {
        let path_str = path.as_ref().display().to_string();
        let text = serde_json::to_string_pretty(self).expect("scene serializes");
        fs::write(&path, text).map_err(|source| SyntheticError::Io {
            path: path_str,
            source,
        })
    }
}

/// Exact signed distance from `p` to the scene.
pub fn analytic_sdf(scene: &Scene, p: &Point3) -> f64 {
    scene
        .primitives
        .iter()
        .map(|prim| prim.sdf(p))
        .fold(f64::INFINITY, f64::min)
}

/// Outward surface normal of the scene field at `p`, from central
/// differences of the exact distance.
pub fn analytic_normal(scene: &Scene, p: &Point3) -> Point3 {
    let h = 1e-5;
    let dx = analytic_sdf(scene, &Point3::new(p.x + h, p.y, p.z))
        - analytic_sdf(scene, &Point3::new(p.x - h, p.y, p.z));
    let dy = analytic_sdf(scene, &Point3::new(p.x, p.y + h, p.z))
        - analytic_sdf(scene, &Point3::new(p.x, p.y - h, p.z));
    let dz = analytic_sdf(scene, &Point3::new(p.x, p.y, p.z + h))
        - analytic_sdf(scene, &Point3::new(p.x, p.y, p.z - h));
    let norm = (dx * dx + dy * dy + dz * dz).sqrt();
    if norm == 0.0 {
        return Point3::new(0.0, 0.0, 1.0);
    }
    Point3::new(dx / norm, dy / norm, dz / norm)
}

/// Spinning-scanner geometry: a full azimuth revolution per elevation ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub azimuth_steps: usize,
    /// Elevation angles in radians, one ring each.
    pub elevations: Vec<f64>,
    pub max_range: f64,
    pub origin: [f64; 3],
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            azimuth_steps: 128,
            elevations: equally_spaced_elevations(16, -10f64.to_radians(), 10f64.to_radians()),
            max_range: 50.0,
            origin: [0.0, 0.0, 0.0],
        }
    }
}

/// `count` elevation angles evenly covering [lo, hi].
pub fn equally_spaced_elevations(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.azimuth_steps == 0 {
            return Err(SyntheticError::InvalidScan("azimuth_steps must be >= 1".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(SyntheticError::InvalidScan("max_range must be > 0".into()));
        }
        Ok(())
    }

    pub fn origin_point(&self) -> Point3 {
        Point3::new(self.origin[0], self.origin[1], self.origin[2])
    }
}

/// Termination threshold of the sphere tracer, in meters.
pub const TRACE_SURFACE_THRESHOLD: f64 = 1e-4;

const TRACE_MAX_STEPS: usize = 10_000;

/// Sphere-trace every (elevation, azimuth) ray and collect the hit points.
///
/// Each step advances by the current distance, so a ray can never cross a
/// surface; it terminates once the distance drops below
/// [`TRACE_SURFACE_THRESHOLD`] or the accumulated range exceeds `max_range`.
/// Misses produce nothing. Output order is (elevation index, azimuth index).
pub fn simulate_scan(scene: &Scene, config: &ScanConfig) -> Result<PointCloud, SyntheticError> {
    config.validate()?;
    let origin = config.origin_point();
    let origin_sdf = analytic_sdf(scene, &origin);
    if origin_sdf <= 0.0 {
        return Err(SyntheticError::OriginInsideObstacle(origin_sdf));
    }
    let mut points = Vec::new();
    for &elevation in &config.elevations {
        let (sin_e, cos_e) = elevation.sin_cos();
        for az_step in 0..config.azimuth_steps {
            let azimuth = std::f64::consts::TAU * az_step as f64 / config.azimuth_steps as f64;
            let (sin_a, cos_a) = azimuth.sin_cos();
            let dir = Point3::new(cos_e * cos_a, cos_e * sin_a, sin_e);
            if let Some(hit) = trace_ray(scene, &origin, &dir, config.max_range) {
                points.push(CloudPoint::bare(hit));
            }
        }
    }
    Ok(PointCloud::new(points, origin))
}

fn trace_ray(scene: &Scene, origin: &Point3, dir: &Point3, max_range: f64) -> Option<Point3> {
    let mut t = 0.0f64;
    for _ in 0..TRACE_MAX_STEPS {
        let p = Point3::new(
            origin.x + t * dir.x,
            origin.y + t * dir.y,
            origin.z + t * dir.z,
        );
        let s = analytic_sdf(scene, &p);
        if s < TRACE_SURFACE_THRESHOLD {
            return Some(p);
        }
        t += s;
        if t > max_range {
            return None;
        }
    }
    None
}

/// A dataset built by the real pipeline plus the exact distance at every
/// sample, for label-vs-truth audits.
#[derive(Debug, Clone)]
pub struct OracleDataset {
    pub dataset: Dataset,
    /// `analytic_sdf` at each sample position, aligned with `dataset.samples`.
    pub true_sdf: Vec<f64>,
}

/// Run simulate → augment and record the analytic distance alongside every
/// sample label.
pub fn oracle_dataset(
    scene: &Scene,
    config: &ScanConfig,
    spec: &SampleSpec,
    method: Method,
    conf_params: &ConfidenceParams,
) -> Result<OracleDataset, SyntheticError> {
    let cloud = simulate_scan(scene, config)?;
    let dataset = augment::build_dataset(&cloud, spec, method, conf_params)?;
    let true_sdf = dataset
        .samples
        .iter()
        .map(|s| analytic_sdf(scene, &s.position))
        .collect();
    Ok(OracleDataset { dataset, true_sdf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sphere(center: [f64; 3], radius: f64) -> Scene {
        Scene::new(vec![Primitive::Sphere { center, radius }]).unwrap()
    }

    #[test]
    fn sphere_sdf_examples() {
        let s = sphere([0.0, 0.0, 0.0], 1.0);
        assert_eq!(analytic_sdf(&s, &Point3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(analytic_sdf(&s, &Point3::new(0.0, 0.0, 0.0)), -1.0);
    }

    #[test]
    fn box_corner_distance() {
        let s = Scene::new(vec![Primitive::Box {
            center: [0.0, 0.0, 0.0],
            half_extents: [1.0, 1.0, 1.0],
        }])
        .unwrap();
        assert_abs_diff_eq!(
            analytic_sdf(&s, &Point3::new(2.0, 2.0, 0.0)),
            2.0f64.sqrt(),
            epsilon = 1e-12
        );
        // Inside: the largest component governs.
        assert_eq!(analytic_sdf(&s, &Point3::new(0.5, 0.0, 0.0)), -0.5);
    }

    #[test]
    fn cylinder_sdf_basics() {
        let s = Scene::new(vec![Primitive::Cylinder {
            center: [0.0, 0.0, 0.0],
            radius: 1.0,
            half_height: 2.0,
        }])
        .unwrap();
        assert_abs_diff_eq!(
            analytic_sdf(&s, &Point3::new(3.0, 0.0, 0.0)),
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            analytic_sdf(&s, &Point3::new(0.0, 0.0, 5.0)),
            3.0,
            epsilon = 1e-12
        );
        assert!(analytic_sdf(&s, &Point3::new(0.0, 0.0, 0.0)) < 0.0);
    }

    #[test]
    fn union_is_member_minimum() {
        let scene = Scene::two_obstacle_street();
        let p = Point3::new(3.0, 0.0, 0.0);
        let member_min = scene
            .primitives
            .iter()
            .map(|prim| prim.sdf(&p))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(analytic_sdf(&scene, &p), member_min);
        for prim in &scene.primitives {
            assert!(analytic_sdf(&scene, &p) <= prim.sdf(&p));
        }
    }

    #[test]
    fn single_ray_hits_sphere_front() {
        let scene = sphere([5.0, 0.0, 0.0], 1.0);
        let config = ScanConfig {
            azimuth_steps: 1,
            elevations: vec![0.0],
            max_range: 20.0,
            origin: [0.0, 0.0, 0.0],
        };
        let cloud = simulate_scan(&scene, &config).unwrap();
        assert_eq!(cloud.len(), 1);
        let hit = cloud.points[0].position;
        assert_abs_diff_eq!(hit.x, 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!(hit.y, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_direction_set_empty_cloud() {
        let scene = sphere([5.0, 0.0, 0.0], 1.0);
        let config = ScanConfig {
            azimuth_steps: 4,
            elevations: vec![],
            max_range: 20.0,
            origin: [0.0, 0.0, 0.0],
        };
        assert!(simulate_scan(&scene, &config).unwrap().is_empty());
    }

    #[test]
    fn all_hits_lie_on_surfaces() {
        let scene = Scene::two_obstacle_street();
        let config = ScanConfig::default();
        let cloud = simulate_scan(&scene, &config).unwrap();
        assert!(cloud.len() > 50, "scan produced only {} hits", cloud.len());
        for p in &cloud.points {
            assert!(analytic_sdf(&scene, &p.position).abs() < 1e-3);
        }
    }

    #[test]
    fn origin_inside_rejected() {
        let scene = sphere([0.0, 0.0, 0.0], 1.0);
        let config = ScanConfig::default();
        assert!(matches!(
            simulate_scan(&scene, &config),
            Err(SyntheticError::OriginInsideObstacle(_))
        ));
    }

    #[test]
    fn tracer_never_steps_past_a_surface() {
        let scene = Scene::two_obstacle_street();
        let origin = Point3::new(0.0, 0.0, 0.0);
        // Recreate the stepping for a handful of rays and check positivity.
        for azimuth_deg in [0.0f64, 10.0, 18.4, -20.0, -33.0] {
            let a = azimuth_deg.to_radians();
            let dir = Point3::new(a.cos(), a.sin(), 0.0);
            let mut t = 0.0;
            for _ in 0..10_000 {
                let p = Point3::new(origin.x + t * dir.x, origin.y + t * dir.y, origin.z);
                let s = analytic_sdf(&scene, &p);
                assert!(s > 0.0, "visited point at distance {s}");
                if s < TRACE_SURFACE_THRESHOLD {
                    break;
                }
                t += s;
                if t > 50.0 {
                    break;
                }
            }
        }
    }

    #[test]
    fn scan_translation_equivariance() {
        let base = sphere([5.0, 1.0, 0.0], 1.0);
        let shift = [100.0, -40.0, 7.0];
        let moved = sphere(
            [5.0 + shift[0], 1.0 + shift[1], 0.0 + shift[2]],
            1.0,
        );
        let config = ScanConfig {
            azimuth_steps: 32,
            elevations: equally_spaced_elevations(4, -0.2, 0.2),
            max_range: 20.0,
            origin: [0.0, 0.0, 0.0],
        };
        let moved_config = ScanConfig {
            origin: shift,
            ..config.clone()
        };
        let a = simulate_scan(&base, &config).unwrap();
        let b = simulate_scan(&moved, &moved_config).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_abs_diff_eq!(p.position.x + shift[0], q.position.x, epsilon = 1e-6);
            assert_abs_diff_eq!(p.position.y + shift[1], q.position.y, epsilon = 1e-6);
            assert_abs_diff_eq!(p.position.z + shift[2], q.position.z, epsilon = 1e-6);
        }
    }

    #[test]
    fn oracle_dataset_audits() {
        let scene = sphere([6.0, 0.0, 0.0], 1.0);
        let config = ScanConfig {
            azimuth_steps: 256,
            elevations: equally_spaced_elevations(16, -0.25, 0.25),
            max_range: 20.0,
            origin: [0.0, 0.0, 0.0],
        };
        let spec = SampleSpec {
            seed: 31,
            ..SampleSpec::default()
        };
        let oracle = oracle_dataset(
            &scene,
            &config,
            &spec,
            Method::Gaussian,
            &ConfidenceParams::default(),
        )
        .unwrap();
        let ds = &oracle.dataset;
        assert!(ds.surface_count >= 64, "small scan: {}", ds.surface_count);

        // Surface samples sit on the true surface.
        for (s, &truth) in ds.samples.iter().zip(&oracle.true_sdf) {
            if s.sdf == 0.0 && s.confidence == 1.0 {
                if ds.samples[..ds.surface_count].iter().any(|q| q == s) {
                    assert!(truth.abs() < 1e-3);
                }
            }
        }

        // Positive-tagged samples are genuinely in free space.
        let mut errors = Vec::new();
        for (s, &truth) in ds.samples[ds.surface_count..]
            .iter()
            .zip(&oracle.true_sdf[ds.surface_count..])
        {
            if s.sdf > 0.0 {
                assert!(truth > 0.0, "positive sample with true sdf {truth}");
            }
            errors.push((s.sdf - truth).abs());
        }

        // Median label error stays under 10 cm on a dense single-sphere scan.
        errors.sort_by(f64::total_cmp);
        let median = errors[errors.len() / 2];
        assert!(median < 0.1, "median label error {median}");
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = Scene::two_obstacle_street();
        let file = tempfile::NamedTempFile::new().unwrap();
        scene.save(file.path()).unwrap();
        let back = Scene::load(file.path()).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn scene_rejects_bad_primitives() {
        assert!(Scene::new(vec![]).is_err());
        assert!(Scene::new(vec![Primitive::Sphere {
            center: [0.0; 3],
            radius: 0.0
        }])
        .is_err());
    }
}
