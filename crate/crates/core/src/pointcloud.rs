//! LiDAR point-cloud loading, filtering, and scene-change detection.
//!
//! Clouds arrive either as whitespace-separated ASCII (`x y z [intensity]
//! [class_id]`, `#` comments, optional `# origin x y z` header) or as packed
//! little-endian float32 records with an optional sidecar file of per-point
//! class labels. Filtering splits a cloud into obstacle and floor points and
//! drops configured background/ego classes; the directed Hausdorff distance
//! between consecutive clouds gates whether a sweep counts as a new scene.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial;

/// A finite position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance, computed in f64 regardless of source precision.
    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// One LiDAR return with optional per-point attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Point3,
    pub class_id: Option<u32>,
    pub intensity: Option<f64>,
    pub ring: Option<u32>,
}

impl CloudPoint {
    pub fn bare(position: Point3) -> Self {
        Self {
            position,
            class_id: None,
            intensity: None,
            ring: None,
        }
    }
}

/// An ordered LiDAR sweep in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    pub sensor_origin: Point3,
    pub timestamp_us: Option<i64>,
}

impl PointCloud {
    pub fn new(points: Vec<CloudPoint>, sensor_origin: Point3) -> Self {
        Self {
            points,
            sensor_origin,
            timestamp_us: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Which classes to drop and where the floor begins.
///
/// The ground threshold is the sensor height below the mount point; points
/// strictly below it count as floor. The Hausdorff threshold is the minimum
/// cloud-to-cloud distance for a sweep to count as a scene change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub drop_class_ids: BTreeSet<u32>,
    pub ground_z_threshold: f64,
    pub hausdorff_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            drop_class_ids: BTreeSet::new(),
            ground_z_threshold: -1.563,
            hausdorff_threshold: 0.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), PointCloudError> {
        if self.hausdorff_threshold < 0.0 || !self.hausdorff_threshold.is_finite() {
            return Err(PointCloudError::InvalidConfig(
                "hausdorff_threshold must be >= 0".into(),
            ));
        }
        if !self.ground_z_threshold.is_finite() {
            return Err(PointCloudError::InvalidConfig(
                "ground_z_threshold must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Field offsets (in floats) within a packed binary point record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordLayout {
    pub floats_per_point: usize,
    pub x_index: usize,
    pub y_index: usize,
    pub z_index: usize,
    pub intensity_index: Option<usize>,
    pub ring_index: Option<usize>,
}

impl Default for RecordLayout {
    /// Five little-endian f32 per point: x, y, z, intensity, ring.
    fn default() -> Self {
        Self {
            floats_per_point: 5,
            x_index: 0,
            y_index: 1,
            z_index: 2,
            intensity_index: Some(3),
            ring_index: Some(4),
        }
    }
}

impl RecordLayout {
    fn validate(&self) -> Result<(), PointCloudError> {
        let max = [self.x_index, self.y_index, self.z_index]
            .into_iter()
            .chain(self.intensity_index)
            .chain(self.ring_index)
            .max()
            .unwrap();
        if self.floats_per_point == 0 || max >= self.floats_per_point {
            return Err(PointCloudError::InvalidConfig(format!(
                "record layout indexes up to float {} but holds {} floats",
                max, self.floats_per_point
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: zero points")]
    ZeroPoints { path: String },
    #[error("{path}: truncated record: {size} bytes is not a multiple of {record_size}")]
    TruncatedRecord {
        path: String,
        size: u64,
        record_size: usize,
    },
    #[error("{path}: non-finite coordinate in record {index}")]
    NonFiniteCoordinate { path: String, index: usize },
    #[error("label count mismatch: cloud has {points} points, sidecar has {labels} labels")]
    LabelCountMismatch { points: usize, labels: usize },
    #[error("point {index} has no class id")]
    MissingClassId { index: usize },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Parse an ASCII cloud: one point per non-comment line, `x y z [intensity]
/// [class_id]`, with an optional `# origin x y z` header.
pub fn load_ascii_xyz<P: AsRef<Path>>(path: P) -> Result<PointCloud, PointCloudError> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path).map_err(|source| PointCloudError::Io {
        path: path_str.clone(),
        source,
    })?;
    parse_ascii_xyz(&text, &path_str)
}

fn parse_ascii_xyz(text: &str, path: &str) -> Result<PointCloud, PointCloudError> {
    let mut origin = Point3::new(0.0, 0.0, 0.0);
    let mut points = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(coords) = rest.strip_prefix("origin") {
                let vals = parse_floats(coords);
                if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
                    return Err(PointCloudError::MalformedLine {
                        path: path.into(),
                        line: lineno + 1,
                        reason: "origin header needs three finite coordinates".into(),
                    });
                }
                origin = Point3::new(vals[0], vals[1], vals[2]);
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(PointCloudError::MalformedLine {
                path: path.into(),
                line: lineno + 1,
                reason: format!("expected at least 3 numbers, got {}", fields.len()),
            });
        }
        let mut vals = Vec::with_capacity(fields.len());
        for f in &fields {
            match f.parse::<f64>() {
                Ok(v) => vals.push(v),
                Err(_) => {
                    return Err(PointCloudError::MalformedLine {
                        path: path.into(),
                        line: lineno + 1,
                        reason: format!("not a number: {f:?}"),
                    })
                }
            }
        }
        if vals[..3].iter().any(|v| !v.is_finite()) {
            return Err(PointCloudError::MalformedLine {
                path: path.into(),
                line: lineno + 1,
                reason: "non-finite coordinate".into(),
            });
        }
        let position = Point3::new(vals[0], vals[1], vals[2]);
        let intensity = vals.get(3).copied();
        let class_id = vals.get(4).map(|v| *v as u32);
        points.push(CloudPoint {
            position,
            class_id,
            intensity,
            ring: None,
        });
    }
    if points.is_empty() {
        return Err(PointCloudError::ZeroPoints { path: path.into() });
    }
    Ok(PointCloud::new(points, origin))
}

fn parse_floats(s: &str) -> Vec<f64> {
    s.split_whitespace()
        .filter_map(|t| t.parse::<f64>().ok())
        .collect()
}

/// Write a cloud in the ASCII format `load_ascii_xyz` reads.
///
/// Positions carry 10 significant digits, enough to round-trip f32 inputs
/// exactly. Intensity and class columns appear only when some point has them.
pub fn save_ascii_xyz<P: AsRef<Path>>(cloud: &PointCloud, path: P) -> Result<(), PointCloudError> {
    let path_str = path.as_ref().display().to_string();
    let mut out = String::new();
    let o = cloud.sensor_origin;
    out.push_str(&format!("# origin {:.9e} {:.9e} {:.9e}\n", o.x, o.y, o.z));
    let any_class = cloud.points.iter().any(|p| p.class_id.is_some());
    let any_intensity = any_class || cloud.points.iter().any(|p| p.intensity.is_some());
    for p in &cloud.points {
        out.push_str(&format!(
            "{:.9e} {:.9e} {:.9e}",
            p.position.x, p.position.y, p.position.z
        ));
        if any_intensity {
            out.push_str(&format!(" {:.9e}", p.intensity.unwrap_or(0.0)));
        }
        if any_class {
            out.push_str(&format!(" {}", p.class_id.unwrap_or(0)));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(&path).map_err(|source| PointCloudError::Io {
        path: path_str.clone(),
        source,
    })?;
    file.write_all(out.as_bytes())
        .map_err(|source| PointCloudError::Io {
            path: path_str,
            source,
        })
}

/// Decode packed little-endian float32 records. The file size must be an
/// exact multiple of the record size; class ids come from a sidecar.
pub fn load_bin_records<P: AsRef<Path>>(
    path: P,
    layout: &RecordLayout,
) -> Result<PointCloud, PointCloudError> {
    let path_str = path.as_ref().display().to_string();
    layout.validate()?;
    let bytes = fs::read(&path).map_err(|source| PointCloudError::Io {
        path: path_str.clone(),
        source,
    })?;
    let record_size = layout.floats_per_point * 4;
    if bytes.len() % record_size != 0 {
        return Err(PointCloudError::TruncatedRecord {
            path: path_str,
            size: bytes.len() as u64,
            record_size,
        });
    }
    let n = bytes.len() / record_size;
    if n == 0 {
        return Err(PointCloudError::ZeroPoints { path: path_str });
    }
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let rec = &bytes[i * record_size..(i + 1) * record_size];
        let field = |j: usize| {
            let b: [u8; 4] = rec[j * 4..j * 4 + 4].try_into().unwrap();
            f32::from_le_bytes(b)
        };
        let x = field(layout.x_index) as f64;
        let y = field(layout.y_index) as f64;
        let z = field(layout.z_index) as f64;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(PointCloudError::NonFiniteCoordinate {
                path: path_str,
                index: i,
            });
        }
        points.push(CloudPoint {
            position: Point3::new(x, y, z),
            class_id: None,
            intensity: layout.intensity_index.map(|j| field(j) as f64),
            ring: layout.ring_index.map(|j| field(j) as u32),
        });
    }
    Ok(PointCloud::new(points, Point3::new(0.0, 0.0, 0.0)))
}

/// Read a sidecar label file: one decimal class id per line.
pub fn load_class_sidecar<P: AsRef<Path>>(path: P) -> Result<Vec<u32>, PointCloudError> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path).map_err(|source| PointCloudError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id = line
            .parse::<u32>()
            .map_err(|_| PointCloudError::MalformedLine {
                path: path_str.clone(),
                line: lineno + 1,
                reason: format!("not a class id: {line:?}"),
            })?;
        labels.push(id);
    }
    Ok(labels)
}

/// Attach sidecar class ids to a cloud, point by point.
pub fn attach_class_labels(
    cloud: &PointCloud,
    labels: &[u32],
) -> Result<PointCloud, PointCloudError> {
    if labels.len() != cloud.points.len() {
        return Err(PointCloudError::LabelCountMismatch {
            points: cloud.points.len(),
            labels: labels.len(),
        });
    }
    let mut out = cloud.clone();
    for (p, &id) in out.points.iter_mut().zip(labels) {
        p.class_id = Some(id);
    }
    Ok(out)
}

/// Keep exactly the points whose class id is not in the drop set.
///
/// Every point must carry a class id; order is preserved. The result may be
/// empty, which downstream consumers reject on their own terms.
pub fn filter_classes(
    cloud: &PointCloud,
    config: &FilterConfig,
) -> Result<PointCloud, PointCloudError> {
    config.validate()?;
    for (index, p) in cloud.points.iter().enumerate() {
        if p.class_id.is_none() {
            return Err(PointCloudError::MissingClassId { index });
        }
    }
    let points = cloud
        .points
        .iter()
        .filter(|p| !config.drop_class_ids.contains(&p.class_id.unwrap()))
        .cloned()
        .collect();
    let mut out = cloud.clone();
    out.points = points;
    Ok(out)
}

/// Partition a cloud into (obstacles, floor). Floor means z strictly below
/// the threshold; a point exactly at the threshold is an obstacle.
pub fn ground_filter(cloud: &PointCloud, config: &FilterConfig) -> (PointCloud, PointCloud) {
    let mut obstacles = cloud.clone();
    let mut floor = cloud.clone();
    obstacles.points = cloud
        .points
        .iter()
        .filter(|p| p.position.z >= config.ground_z_threshold)
        .cloned()
        .collect();
    floor.points = cloud
        .points
        .iter()
        .filter(|p| p.position.z < config.ground_z_threshold)
        .cloned()
        .collect();
    (obstacles, floor)
}

/// Directed Hausdorff distance from `a` to `b`: the farthest any point of `a`
/// is from its nearest point of `b`. Asymmetric; not a metric.
pub fn directed_hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64, PointCloudError> {
    if a.is_empty() || b.is_empty() {
        return Err(PointCloudError::EmptyCloud);
    }
    let index = spatial::build_index(&b.positions(), spatial::default_leaf_capacity(b.len()))
        .expect("non-empty cloud");
    let mut worst = 0.0f64;
    for p in &a.points {
        let hit = index.nearest(&p.position);
        if hit.distance > worst {
            worst = hit.distance;
        }
    }
    Ok(worst)
}

/// True when the current sweep moved far enough from the previous one to be
/// treated as a new static scene.
pub fn scene_change_gate(
    prev: &PointCloud,
    curr: &PointCloud,
    config: &FilterConfig,
) -> Result<bool, PointCloudError> {
    config.validate()?;
    Ok(directed_hausdorff(curr, prev)? > config.hausdorff_threshold)
}
