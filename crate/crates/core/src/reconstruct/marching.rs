//! Marching cubes over a sampled grid.
//!
//! The 256 per-configuration triangulations are generated once at first use
//! instead of being pasted in as literal tables. For a configuration, the cut
//! edges of each cube face are paired by walking the face's corner cycle:
//! every maximal run of inside corners contributes one contour segment
//! joining the cut edges at its ends. Each cut edge then has exactly one
//! segment per adjacent face, so segments close into cycles, which are fanned
//! into triangles. Because the pairing depends only on the face's own corner
//! signs, the two cells sharing a face always agree on its segments and the
//! extracted surface is watertight away from the grid boundary — including
//! the saddle-face configurations where classic lookup tables can disagree
//! with themselves.
//!
//! Vertices sit on lattice edges at the linear interpolation of the iso
//! crossing and are welded globally by (axis, lattice point), so shared
//! triangles reference identical coordinates.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::pointcloud::Point3;

use super::{GridField, TriangleMesh};

/// Corner c of the unit cube sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1).
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cube edges as (low corner, high corner, axis), low along the axis.
const EDGES: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

/// Corner cycles of the six faces, each in a consistent walking order.
fn face_cycles() -> [[usize; 4]; 6] {
    let mut faces = [[0usize; 4]; 6];
    let mut slot = 0;
    for axis in 0..3 {
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        for side in 0..2 {
            let corner = |bu: usize, bv: usize| -> usize {
                let mut bits = [0usize; 3];
                bits[axis] = side;
                bits[u] = bu;
                bits[v] = bv;
                bits[0] | (bits[1] << 1) | (bits[2] << 2)
            };
            faces[slot] = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            slot += 1;
        }
    }
    faces
}

/// Edge id joining two corners, if they are cube-adjacent.
fn edge_between(a: usize, b: usize) -> Option<usize> {
    EDGES
        .iter()
        .position(|&(lo, hi, _)| (lo == a && hi == b) || (lo == b && hi == a))
}

/// Triangulations per corner configuration; entries are cube edge ids.
struct McTables {
    triangles: [Vec<[usize; 3]>; 256],
}

fn build_tables() -> McTables {
    let faces = face_cycles();
    let mut triangles: [Vec<[usize; 3]>; 256] = std::array::from_fn(|_| Vec::new());

    for config in 0..256usize {
        let inside = |c: usize| (config >> c) & 1 == 1;

        // Contour segments on each face: one per maximal run of inside
        // corners along the face cycle, joining the run's boundary cut edges.
        let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
        for cycle in &faces {
            for start in 0..4 {
                if !inside(cycle[start]) || inside(cycle[(start + 3) % 4]) {
                    continue; // not the beginning of a run
                }
                let mut end = start;
                while inside(cycle[(end + 1) % 4]) {
                    end = (end + 1) % 4;
                }
                let entry = edge_between(cycle[(start + 3) % 4], cycle[start]).unwrap();
                let exit = edge_between(cycle[end], cycle[(end + 1) % 4]).unwrap();
                adjacency.entry(entry).or_default().push(exit);
                adjacency.entry(exit).or_default().push(entry);
            }
        }

        // Each cut edge borders exactly two faces, so it has degree 2 and
        // the segments decompose into disjoint cycles.
        let mut visited: Vec<usize> = Vec::new();
        let mut polygons: Vec<Vec<usize>> = Vec::new();
        let mut keys: Vec<usize> = adjacency.keys().copied().collect();
        keys.sort_unstable();
        for start in keys {
            if visited.contains(&start) {
                continue;
            }
            let mut cycle = vec![start];
            visited.push(start);
            let mut prev = start;
            let mut current = adjacency[&start][0];
            while current != start {
                cycle.push(current);
                visited.push(current);
                let next = adjacency[&current]
                    .iter()
                    .copied()
                    .find(|&e| e != prev)
                    .expect("degree-2 node");
                prev = current;
                current = next;
            }
            polygons.push(cycle);
        }

        // Orient each polygon so its normal points from the inside region
        // toward the outside, judged on edge midpoints.
        let midpoint = |edge: usize| -> [f64; 3] {
            let (lo, hi, _) = EDGES[edge];
            let a = corner_offset(lo);
            let b = corner_offset(hi);
            [
                (a[0] + b[0]) as f64 / 2.0,
                (a[1] + b[1]) as f64 / 2.0,
                (a[2] + b[2]) as f64 / 2.0,
            ]
        };
        let mut outward = [0.0f64; 3];
        let mut n_in = 0.0;
        let mut n_out = 0.0;
        let mut centroid_in = [0.0f64; 3];
        let mut centroid_out = [0.0f64; 3];
        for c in 0..8 {
            let o = corner_offset(c);
            let target = if inside(c) {
                n_in += 1.0;
                &mut centroid_in
            } else {
                n_out += 1.0;
                &mut centroid_out
            };
            for (t, &coord) in target.iter_mut().zip(&o) {
                *t += coord as f64;
            }
        }
        if n_in > 0.0 && n_out > 0.0 {
            for k in 0..3 {
                outward[k] = centroid_out[k] / n_out - centroid_in[k] / n_in;
            }
        }

        for mut polygon in polygons {
            // Newell normal over midpoints.
            let pts: Vec<[f64; 3]> = polygon.iter().map(|&e| midpoint(e)).collect();
            let mut normal = [0.0f64; 3];
            for i in 0..pts.len() {
                let p = pts[i];
                let q = pts[(i + 1) % pts.len()];
                normal[0] += (p[1] - q[1]) * (p[2] + q[2]);
                normal[1] += (p[2] - q[2]) * (p[0] + q[0]);
                normal[2] += (p[0] - q[0]) * (p[1] + q[1]);
            }
            let dot: f64 = normal.iter().zip(&outward).map(|(n, o)| n * o).sum();
            if dot < 0.0 {
                polygon.reverse();
            }
            for i in 1..polygon.len() - 1 {
                triangles[config].push([polygon[0], polygon[i], polygon[i + 1]]);
            }
        }
    }

    McTables { triangles }
}

fn tables() -> &'static McTables {
    static TABLES: OnceLock<McTables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

/// Extract the iso-surface of a sampled field as a triangle mesh.
///
/// A corner is inside when its value is strictly below `iso`. Degenerate
/// triangles (welded or coincident vertices) are dropped and counted on the
/// returned mesh.
pub fn marching_cubes(field: &GridField, iso: f64) -> TriangleMesh {
    let (nx, ny, nz) = field.resolution;
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    // Welded vertex per global lattice edge (axis, x, y, z of low corner).
    let mut edge_vertices: HashMap<(usize, usize, usize, usize), usize> = HashMap::new();
    let mut degenerate = 0usize;

    let mut vertex_on_edge = |axis: usize,
                              base: [usize; 3],
                              field: &GridField,
                              iso: f64,
                              vertices: &mut Vec<Point3>|
     -> usize {
        let key = (axis, base[0], base[1], base[2]);
        if let Some(&idx) = edge_vertices.get(&key) {
            return idx;
        }
        let mut other = base;
        other[axis] += 1;
        let va = field.value(base[0], base[1], base[2]);
        let vb = field.value(other[0], other[1], other[2]);
        let t = (iso - va) / (vb - va);
        let pa = field.lattice_point(base[0], base[1], base[2]);
        let pb = field.lattice_point(other[0], other[1], other[2]);
        let p = Point3::new(
            pa.x + t * (pb.x - pa.x),
            pa.y + t * (pb.y - pa.y),
            pa.z + t * (pb.z - pa.z),
        );
        let idx = vertices.len();
        vertices.push(p);
        edge_vertices.insert(key, idx);
        idx
    };

    let tables = tables();
    for ix in 0..nx - 1 {
        for iy in 0..ny - 1 {
            for iz in 0..nz - 1 {
                let mut config = 0usize;
                for c in 0..8 {
                    let o = corner_offset(c);
                    if field.value(ix + o[0], iy + o[1], iz + o[2]) < iso {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }
                for tri in &tables.triangles[config] {
                    let mut idx = [0usize; 3];
                    for (slot, &edge) in idx.iter_mut().zip(tri) {
                        let (lo, _, axis) = EDGES[edge];
                        let o = corner_offset(lo);
                        *slot = vertex_on_edge(
                            axis,
                            [ix + o[0], iy + o[1], iz + o[2]],
                            field,
                            iso,
                            &mut vertices,
                        );
                    }
                    if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
                        degenerate += 1;
                        continue;
                    }
                    let a = vertices[idx[0]];
                    let b = vertices[idx[1]];
                    let c = vertices[idx[2]];
                    let ab = [b.x - a.x, b.y - a.y, b.z - a.z];
                    let ac = [c.x - a.x, c.y - a.y, c.z - a.z];
                    let cross = [
                        ab[1] * ac[2] - ab[2] * ac[1],
                        ab[2] * ac[0] - ab[0] * ac[2],
                        ab[0] * ac[1] - ab[1] * ac[0],
                    ];
                    if cross.iter().all(|&v| v == 0.0) {
                        degenerate += 1;
                        continue;
                    }
                    triangles.push(idx);
                }
            }
        }
    }

    TriangleMesh {
        vertices,
        triangles,
        degenerate_dropped: degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_are_consistent() {
        let tables = tables();
        // Empty and full cells carry no geometry.
        assert!(tables.triangles[0].is_empty());
        assert!(tables.triangles[255].is_empty());
        // A single inside corner yields one triangle on its three edges.
        for c in 0..8 {
            let tris = &tables.triangles[1 << c];
            assert_eq!(tris.len(), 1, "corner {c}");
        }
        // Complementary configurations triangulate the same edge set.
        for config in 0..256usize {
            let mut a: Vec<usize> = tables.triangles[config]
                .iter()
                .flatten()
                .copied()
                .collect();
            let mut b: Vec<usize> = tables.triangles[255 - config]
                .iter()
                .flatten()
                .copied()
                .collect();
            a.sort_unstable();
            a.dedup();
            b.sort_unstable();
            b.dedup();
            assert_eq!(a, b, "config {config}");
        }
        // Every triangle references cut edges only.
        for config in 0..256usize {
            for tri in &tables.triangles[config] {
                for &e in tri {
                    let (lo, hi, _) = EDGES[e];
                    let lo_in = (config >> lo) & 1;
                    let hi_in = (config >> hi) & 1;
                    assert_ne!(lo_in, hi_in, "config {config} uses uncut edge {e}");
                }
            }
        }
    }

    #[test]
    fn saddle_faces_pair_consistently() {
        // Two diagonal inside corners on a shared face must produce two
        // segments that isolate the inside corners in both adjacent cells.
        let tables = tables();
        // Corners 0 and 3 are diagonal on the z=0 face.
        let config = (1 << 0) | (1 << 3);
        let tris = &tables.triangles[config];
        assert_eq!(tris.len(), 2, "two isolated fragments expected");
    }
}
