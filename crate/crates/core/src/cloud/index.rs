//! Static k-d tree for nearest and radius queries in 2D or 3D.
//!
//! Results are fully determined by the point set: the nearest neighbor is the
//! point with minimal Euclidean distance, ties going to the smallest id, and
//! radius queries return every point with `distance < radius` sorted by id.

use super::{Point2, Point3, PointId};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: PointId,
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
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable k-d tree over `D`-dimensional points with caller-chosen ids.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    coords: Vec<[f64; D]>,
    ids: Vec<PointId>,
    nodes: Vec<Node>,
}

pub type SpatialIndex3 = KdTree<3>;
pub type SpatialIndex2 = KdTree<2>;

#[inline]
fn squared_distance<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut sum = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        sum += d * d;
    }
    sum
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: impl IntoIterator<Item = (PointId, [f64; D])>) -> Self {
        let (ids, coords): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        let mut order: Vec<usize> = (0..coords.len()).collect();
        let mut nodes = Vec::new();
        if !coords.is_empty() {
            Self::build(&coords, &mut order, 0, &mut nodes);
        }
        KdTree {
            coords: order.iter().map(|&i| coords[i]).collect(),
            ids: order.iter().map(|&i| ids[i]).collect(),
            nodes,
        }
    }

    fn build(coords: &[[f64; D]], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
        let me = nodes.len();
        if order.len() <= LEAF_SIZE {
            nodes.push(Node::Leaf {
                start: offset,
                end: offset + order.len(),
            });
            return me;
        }
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in order.iter() {
            for k in 0..D {
                lo[k] = lo[k].min(coords[i][k]);
                hi[k] = hi[k].max(coords[i][k]);
            }
        }
        let axis = (0..D)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] - lo[axis] == 0.0 {
            // all points coincide
            nodes.push(Node::Leaf {
                start: offset,
                end: offset + order.len(),
            });
            return me;
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| coords[a][axis].total_cmp(&coords[b][axis]));
        let value = coords[order[mid]][axis];
        nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let (left_part, right_part) = order.split_at_mut(mid);
        let left = Self::build(coords, left_part, offset, nodes);
        let right = Self::build(coords, right_part, offset + mid, nodes);
        nodes[me] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        me
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Closest point to `query`, or `None` on an empty index.
    pub fn nearest(&self, query: &[f64; D]) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, PointId::MAX);
        self.nearest_in(0, query, &mut best);
        Some(Neighbor {
            id: best.1,
            distance: best.0.sqrt(),
        })
    }

    fn nearest_in(&self, node: usize, query: &[f64; D], best: &mut (f64, PointId)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let d2 = squared_distance(&self.coords[i], query);
                    let id = self.ids[i];
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, query, best);
                // `<=` keeps equal-distance candidates reachable for the id tie-break
                if diff * diff <= best.0 {
                    self.nearest_in(far, query, best);
                }
            }
        }
    }

    /// All points with `distance < radius`, sorted by id.
    pub fn within(&self, query: &[f64; D], radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() && radius > 0.0 {
            self.within_in(0, query, radius, &mut out);
        }
        out.sort_unstable_by_key(|n| n.id);
        out
    }

    fn within_in(&self, node: usize, query: &[f64; D], radius: f64, out: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let distance = squared_distance(&self.coords[i], query).sqrt();
                    if distance < radius {
                        out.push(Neighbor {
                            id: self.ids[i],
                            distance,
                        });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_in(near, query, radius, out);
                if diff.abs() <= radius {
                    self.within_in(far, query, radius, out);
                }
            }
        }
    }
}

impl KdTree<3> {
    pub fn from_points<'a>(points: impl IntoIterator<Item = (PointId, &'a Point3)>) -> Self {
        Self::new(points.into_iter().map(|(id, p)| (id, [p.x, p.y, p.z])))
    }

    pub fn nearest_to(&self, q: &Point3) -> Option<Neighbor> {
        self.nearest(&[q.x, q.y, q.z])
    }
}

impl KdTree<2> {
    pub fn from_points<'a>(points: impl IntoIterator<Item = (PointId, &'a Point2)>) -> Self {
        Self::new(points.into_iter().map(|(id, p)| (id, [p.x, p.y])))
    }

    pub fn within_of(&self, q: &Point2, radius: f64) -> Vec<Neighbor> {
        self.within(&[q.x, q.y], radius)
    }
}
