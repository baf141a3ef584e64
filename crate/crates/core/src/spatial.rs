//! Exact nearest-neighbor search over obstacle surface points.
//!
//! The index is a KD-tree with axis-aligned median splits: at each node the
//! widest-spread axis is split at the median, ties broken toward the lower
//! half, until a node holds at most `leaf_capacity` points. Distances are
//! always accumulated in f64 so that a tree query and a brute-force scan
//! produce bit-identical results, which is what the tests assert. Ties
//! between equidistant points go to the lower insertion index.

use thiserror::Error;

use crate::pointcloud::Point3;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("empty point set")]
    EmptyPointSet,
    #[error("leaf capacity must be >= 1")]
    ZeroLeafCapacity,
}

/// A nearest-neighbor answer: the indexed point, its insertion index, and the
/// Euclidean distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub point: Point3,
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        /// Largest coordinate in the lower half.
        lo_max: f64,
        /// Smallest coordinate in the upper half.
        hi_min: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable KD-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    points: Vec<Point3>,
    /// Permutation of insertion indices; leaves own contiguous ranges.
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
    leaf_capacity: usize,
}

/// Capacity that yields roughly fifty leaves for an `n`-point cloud.
pub fn default_leaf_capacity(n: usize) -> usize {
    usize::max(1, n.div_ceil(50))
}

/// Build an index over `points`. Construction is deterministic: the same
/// input order always produces the same tree and the same tie-breaking.
pub fn build_index(points: &[Point3], leaf_capacity: usize) -> Result<SurfaceIndex, SpatialError> {
    if points.is_empty() {
        return Err(SpatialError::EmptyPointSet);
    }
    if leaf_capacity == 0 {
        return Err(SpatialError::ZeroLeafCapacity);
    }
    let mut index = SurfaceIndex {
        points: points.to_vec(),
        order: (0..points.len() as u32).collect(),
        nodes: Vec::new(),
        root: 0,
        leaf_capacity,
    };
    index.root = index.build_node(0, points.len());
    Ok(index)
}

fn axis_coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

impl SurfaceIndex {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Per-leaf point counts, for structural audits.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { start, end } => Some(end - start),
                _ => None,
            })
            .collect()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let count = end - start;
        if count <= self.leaf_capacity {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }

        // Widest-spread axis at this node.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for (axis, (l, h)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                let c = axis_coord(p, axis);
                *l = l.min(c);
                *h = h.max(c);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();

        // Median split; equal coordinates resolve by insertion index, and an
        // odd count leaves the extra point in the lower half.
        let points = &self.points;
        self.order[start..end].sort_by(|&a, &b| {
            let ca = axis_coord(&points[a as usize], axis);
            let cb = axis_coord(&points[b as usize], axis);
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let mid = start + count.div_ceil(2);
        let lo_max = axis_coord(&self.points[self.order[mid - 1] as usize], axis);
        let hi_min = axis_coord(&self.points[self.order[mid] as usize], axis);

        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end }); // placeholder
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot] = Node::Split {
            axis,
            lo_max,
            hi_min,
            left,
            right,
        };
        slot
    }

    /// Exact nearest neighbor of `query`.
    pub fn nearest(&self, query: &Point3) -> Nearest {
        self.nearest_with_stats(query).0
    }

    /// Nearest neighbor plus the number of tree nodes visited, for query-cost
    /// audits.
    pub fn nearest_with_stats(&self, query: &Point3) -> (Nearest, usize) {
        let mut best = Nearest {
            point: self.points[0],
            index: usize::MAX,
            distance: f64::INFINITY,
        };
        let mut best_sq = f64::INFINITY;
        let mut visited = 0usize;
        self.search(self.root, query, &mut best, &mut best_sq, &mut visited);
        best.distance = best_sq.sqrt();
        (best, visited)
    }

    fn search(
        &self,
        node: usize,
        query: &Point3,
        best: &mut Nearest,
        best_sq: &mut f64,
        visited: &mut usize,
    ) {
        *visited += 1;
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let idx = i as usize;
                    let d_sq = self.points[idx].distance_squared(query);
                    if d_sq < *best_sq || (d_sq == *best_sq && idx < best.index) {
                        *best_sq = d_sq;
                        best.index = idx;
                        best.point = self.points[idx];
                    }
                }
            }
            Node::Split {
                axis,
                lo_max,
                hi_min,
                left,
                right,
            } => {
                let q = axis_coord(query, *axis);
                // Axis-distance lower bounds to each half's slab.
                let left_gap = (q - lo_max).max(0.0);
                let right_gap = (hi_min - q).max(0.0);
                let (near, near_gap, far, far_gap) = if left_gap <= right_gap {
                    (*left, left_gap, *right, right_gap)
                } else {
                    (*right, right_gap, *left, left_gap)
                };
                if near_gap * near_gap <= *best_sq {
                    self.search(near, query, best, best_sq, visited);
                }
                // `<=` so an equidistant lower-index point across the plane
                // still gets considered.
                if far_gap * far_gap <= *best_sq {
                    self.search(far, query, best, best_sq, visited);
                }
            }
        }
    }
}

/// Linear-scan oracle with the same contract and the same f64 arithmetic as
/// [`SurfaceIndex::nearest`].
pub fn nearest_bruteforce(points: &[Point3], query: &Point3) -> Result<Nearest, SpatialError> {
    if points.is_empty() {
        return Err(SpatialError::EmptyPointSet);
    }
    let mut best_sq = f64::INFINITY;
    let mut best_idx = usize::MAX;
    for (idx, p) in points.iter().enumerate() {
        let d_sq = p.distance_squared(query);
        if d_sq < best_sq {
            best_sq = d_sq;
            best_idx = idx;
        }
    }
    Ok(Nearest {
        point: points[best_idx],
        index: best_idx,
        distance: best_sq.sqrt(),
    })
}
