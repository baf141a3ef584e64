//! Reconstruction of static LiDAR obstacle scenes as learned signed distance
//! fields.
//!
//! The pipeline runs front to back: [`pointcloud`] loads and filters sweeps,
//! [`spatial`] answers exact nearest-neighbor queries over obstacle surface
//! points, [`augment`] turns rays into labeled training samples with
//! [`confidence`] weights, [`model`] trains a Fourier-feature MLP that maps a
//! position to (signed distance, confidence), and [`reconstruct`] turns the
//! trained field into meshes, slices, and clearance answers. [`synthetic`]
//! provides analytic scenes and a simulated scanner so every stage can be
//! checked against exact ground truth.

pub mod augment;
pub mod confidence;
pub mod model;
pub mod pointcloud;
pub mod reconstruct;
pub mod spatial;
pub mod synthetic;

pub use augment::{Dataset, LabeledSample, Method, Ray, SampleSpec};
pub use confidence::ConfidenceParams;
pub use model::{Activation, FourierEncoder, MlpConfig, SdfModel, TrainConfig};
pub use pointcloud::{CloudPoint, FilterConfig, Point3, PointCloud};
pub use reconstruct::{GridBounds, GridField, TriangleMesh};
pub use spatial::SurfaceIndex;
pub use synthetic::{Primitive, ScanConfig, Scene};
