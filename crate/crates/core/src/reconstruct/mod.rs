//! From trained field to usable geometry: dense grids, iso-surface meshes,
//! bird's-eye slices, and clearance queries.

mod io;
mod marching;

pub use io::{save_obj, save_ply, save_pgm, save_slice_csv};
pub use marching::marching_cubes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SdfModel;
use crate::pointcloud::Point3;
use crate::synthetic::{self, Scene};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("empty body point set")]
    EmptyBody,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Axis-aligned evaluation box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl GridBounds {
    pub fn validate(&self) -> Result<(), ReconstructError> {
        for axis in 0..3 {
            if !(self.min[axis] < self.max[axis]) {
                return Err(ReconstructError::InvalidGrid(format!(
                    "bounds min must be < max on axis {axis}"
                )));
            }
        }
        Ok(())
    }
}

/// Anything that can be evaluated as a signed distance.
pub trait DistanceField {
    fn distance(&self, p: &Point3) -> f64;
}

impl DistanceField for SdfModel {
    fn distance(&self, p: &Point3) -> f64 {
        self.forward(p).0
    }
}

impl DistanceField for Scene {
    fn distance(&self, p: &Point3) -> f64 {
        synthetic::analytic_sdf(self, p)
    }
}

impl<F: Fn(&Point3) -> f64> DistanceField for F {
    fn distance(&self, p: &Point3) -> f64 {
        self(p)
    }
}

/// A dense sampling of a field over a box, x-major
/// (`index = (ix * ny + iy) * nz + iz`), lattice points inclusive of both
/// box corners.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub bounds: GridBounds,
    pub resolution: (usize, usize, usize),
    pub values: Vec<f64>,
}

/// Per-pass cap on evaluated values, keeping temporary footprints at or
/// below 64 MB of f64.
const GRID_CHUNK_VALUES: usize = 8 * 1024 * 1024;

impl GridField {
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let (_, ny, nz) = self.resolution;
        (ix * ny + iy) * nz + iz
    }

    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.index(ix, iy, iz)]
    }

    /// Coordinate of lattice point (ix, iy, iz).
    pub fn lattice_point(&self, ix: usize, iy: usize, iz: usize) -> Point3 {
        let (nx, ny, nz) = self.resolution;
        Point3::new(
            axis_coordinate(self.bounds.min[0], self.bounds.max[0], nx, ix),
            axis_coordinate(self.bounds.min[1], self.bounds.max[1], ny, iy),
            axis_coordinate(self.bounds.min[2], self.bounds.max[2], nz, iz),
        )
    }
}

fn axis_coordinate(min: f64, max: f64, n: usize, i: usize) -> f64 {
    min + i as f64 * ((max - min) / (n - 1) as f64)
}

/// Evaluate `field` at every lattice point of the box.
pub fn sample_grid(
    field: &impl DistanceField,
    bounds: &GridBounds,
    resolution: (usize, usize, usize),
) -> Result<GridField, ReconstructError> {
    bounds.validate()?;
    let (nx, ny, nz) = resolution;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(ReconstructError::InvalidGrid(
            "resolution must be >= 2 per axis".into(),
        ));
    }
    let mut grid = GridField {
        bounds: *bounds,
        resolution,
        values: vec![0.0; nx * ny * nz],
    };
    // Processed in bounded flat-index chunks; each chunk is an independent
    // map over lattice points.
    let total = grid.values.len();
    let mut start = 0usize;
    while start < total {
        let end = usize::min(start + GRID_CHUNK_VALUES, total);
        for flat in start..end {
            let iz = flat % nz;
            let iy = (flat / nz) % ny;
            let ix = flat / (ny * nz);
            let p = grid.lattice_point(ix, iy, iz);
            grid.values[flat] = field.distance(&p);
        }
        start = end;
    }
    Ok(grid)
}

/// An indexed triangle mesh; `degenerate_dropped` counts zero-area triangles
/// the extraction discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub degenerate_dropped: usize,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Undirected edge → incident triangle count. Watertight surfaces have
    /// every count equal to 2.
    pub fn edge_use_counts(&self) -> std::collections::HashMap<(usize, usize), usize> {
        let mut counts = std::collections::HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// A horizontal cross-section of the field, x-major
/// (`index = ix * ny + iy`).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceField {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub z: f64,
    pub resolution: (usize, usize),
    pub values: Vec<f64>,
}

impl SliceField {
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.resolution.1 + iy
    }

    pub fn lattice_point(&self, ix: usize, iy: usize) -> Point3 {
        Point3::new(
            axis_coordinate(self.min[0], self.max[0], self.resolution.0, ix),
            axis_coordinate(self.min[1], self.max[1], self.resolution.1, iy),
            self.z,
        )
    }

    /// Number of 4-connected components of the negative region.
    pub fn negative_components(&self) -> usize {
        let (nx, ny) = self.resolution;
        let mut seen = vec![false; self.values.len()];
        let mut components = 0usize;
        let mut stack = Vec::new();
        for start in 0..self.values.len() {
            if seen[start] || self.values[start] >= 0.0 {
                continue;
            }
            components += 1;
            stack.push(start);
            seen[start] = true;
            while let Some(flat) = stack.pop() {
                let ix = flat / ny;
                let iy = flat % ny;
                let mut push = |jx: usize, jy: usize, stack: &mut Vec<usize>| {
                    let j = jx * ny + jy;
                    if !seen[j] && self.values[j] < 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if ix > 0 {
                    push(ix - 1, iy, &mut stack);
                }
                if ix + 1 < nx {
                    push(ix + 1, iy, &mut stack);
                }
                if iy > 0 {
                    push(ix, iy - 1, &mut stack);
                }
                if iy + 1 < ny {
                    push(ix, iy + 1, &mut stack);
                }
            }
        }
        components
    }
}

/// Evaluate the distance head on a horizontal lattice at height `z`.
pub fn birds_eye_slice(
    field: &impl DistanceField,
    z: f64,
    min: [f64; 2],
    max: [f64; 2],
    resolution: (usize, usize),
) -> Result<SliceField, ReconstructError> {
    let (nx, ny) = resolution;
    if nx < 2 || ny < 2 {
        return Err(ReconstructError::InvalidGrid(
            "slice resolution must be >= 2 per axis".into(),
        ));
    }
    for axis in 0..2 {
        if !(min[axis] < max[axis]) {
            return Err(ReconstructError::InvalidGrid(format!(
                "slice min must be < max on axis {axis}"
            )));
        }
    }
    let mut slice = SliceField {
        min,
        max,
        z,
        resolution,
        values: vec![0.0; nx * ny],
    };
    for ix in 0..nx {
        for iy in 0..ny {
            let p = slice.lattice_point(ix, iy);
            let flat = slice.index(ix, iy);
            slice.values[flat] = field.distance(&p);
        }
    }
    Ok(slice)
}

/// Single-point field query: (signed distance, confidence).
pub fn query_sdf(model: &SdfModel, p: &Point3) -> (f64, f64) {
    model.forward(p)
}

/// Smallest predicted distance over a rigid body's sample points. Negative
/// means predicted penetration.
pub fn min_clearance(model: &SdfModel, body_points: &[Point3]) -> Result<f64, ReconstructError> {
    if body_points.is_empty() {
        return Err(ReconstructError::EmptyBody);
    }
    Ok(body_points
        .iter()
        .map(|p| query_sdf(model, p).0)
        .fold(f64::INFINITY, f64::min))
}
