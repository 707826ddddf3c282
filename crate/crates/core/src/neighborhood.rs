//! Exact spatial queries and the neighborhood weighting schemes: k nearest
//! neighbors, ε-balls and truncated Gaussian kernels.
//!
//! The query point is never part of its own neighborhood. Neighbor lists are
//! sorted by distance with ties broken by point index, so every query has a
//! unique answer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pointcloud::{dist2, PointCloud};

/// Default Gaussian truncation radius in units of the bandwidth.
pub const DEFAULT_CUTOFF: f64 = 3.0;

const LEAF_SIZE: usize = 8;

/// Rule assigning neighbors and weights to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborhoodSpec {
    /// The `k` nearest points, weight 1.
    Knn { k: usize },
    /// All points at distance `< eps`, weight 1.
    EpsBall { eps: f64 },
    /// All points at distance `< cutoff * bandwidth`, weight `exp(−d²/2h²)`.
    Gaussian { bandwidth: f64, cutoff: f64 },
}

impl NeighborhoodSpec {
    pub fn knn(k: usize) -> Result<Self> {
        let s = NeighborhoodSpec::Knn { k };
        s.validate()?;
        Ok(s)
    }

    pub fn eps_ball(eps: f64) -> Result<Self> {
        let s = NeighborhoodSpec::EpsBall { eps };
        s.validate()?;
        Ok(s)
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::gaussian_with_cutoff(bandwidth, DEFAULT_CUTOFF)
    }

    pub fn gaussian_with_cutoff(bandwidth: f64, cutoff: f64) -> Result<Self> {
        let s = NeighborhoodSpec::Gaussian { bandwidth, cutoff };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NeighborhoodSpec::Knn { k } => k >= 1,
            NeighborhoodSpec::EpsBall { eps } => eps > 0.0 && eps.is_finite(),
            NeighborhoodSpec::Gaussian { bandwidth, cutoff } => {
                bandwidth > 0.0 && bandwidth.is_finite() && cutoff > 0.0 && cutoff.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid neighborhood {self}")))
        }
    }

    /// Weight given to a neighbor at distance `d`.
    pub fn weight(&self, d: f64) -> f64 {
        match *self {
            NeighborhoodSpec::Gaussian { bandwidth, .. } => {
                (-d * d / (2.0 * bandwidth * bandwidth)).exp()
            }
            _ => 1.0,
        }
    }
}

impl fmt::Display for NeighborhoodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NeighborhoodSpec::Knn { k } => write!(f, "knn:{k}"),
            NeighborhoodSpec::EpsBall { eps } => write!(f, "eps:{eps}"),
            NeighborhoodSpec::Gaussian { bandwidth, cutoff } if cutoff == DEFAULT_CUTOFF => {
                write!(f, "gauss:{bandwidth}")
            }
            NeighborhoodSpec::Gaussian { bandwidth, cutoff } => {
                write!(f, "gauss:{bandwidth}:{cutoff}")
            }
        }
    }
}

/// Parses `knn:K`, `eps:E`, `gauss:H` or `gauss:H:CUTOFF`.
impl FromStr for NeighborhoodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("cannot parse neighborhood {s:?}"));
        let mut parts = s.trim().split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let a = parts.next().ok_or_else(bad)?;
        let b = parts.next();
        if parts.next().is_some() {
            return Err(bad());
        }
        let real = |t: &str| t.parse::<f64>().map_err(|_| bad());
        match (kind, b) {
            ("knn", None) => Self::knn(a.parse().map_err(|_| bad())?),
            ("eps", None) => Self::eps_ball(real(a)?),
            ("gauss", None) => Self::gaussian(real(a)?),
            ("gauss", Some(c)) => Self::gaussian_with_cutoff(real(a)?, real(c)?),
            _ => Err(bad()),
        }
    }
}

/// Neighbors of one query point, nearest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedNeighbors {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedNeighbors {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree over a point cloud. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    dim: usize,
    /// Points in tree order.
    points: Vec<f64>,
    /// Tree slot → original index.
    ids: Vec<usize>,
    /// Original index → tree slot.
    slots: Vec<usize>,
    nodes: Vec<Node>,
}

pub fn build_index(cloud: &PointCloud) -> SpatialIndex {
    SpatialIndex::new(cloud)
}

impl SpatialIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        let dim = cloud.dim();
        let n = cloud.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        build_node(cloud, &mut order, 0, n, &mut nodes);

        let mut points = Vec::with_capacity(n * dim);
        let mut slots = vec![0; n];
        for (slot, &id) in order.iter().enumerate() {
            points.extend_from_slice(cloud.point(id));
            slots[id] = slot;
        }
        Self {
            dim,
            points,
            ids: order,
            slots,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of the point with original index `i`.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.slot_point(self.slots[i])
    }

    #[inline]
    fn slot_point(&self, slot: usize) -> &[f64] {
        &self.points[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Nearest point to `q` as `(index, squared distance)`; the lowest index
    /// wins ties.
    pub fn nearest(&self, q: &[f64]) -> (usize, f64) {
        let mut best = Candidate {
            d2: f64::INFINITY,
            idx: usize::MAX,
        };
        self.nearest_rec(0, q, &mut best);
        (best.idx, best.d2)
    }

    /// [`nearest`](Self::nearest) seeded with a known nearby point `hint`,
    /// which tightens pruning from the start. Same answer as `nearest`.
    pub fn nearest_from(&self, q: &[f64], hint: usize) -> (usize, f64) {
        let mut best = Candidate {
            d2: dist2(q, self.point(hint)),
            idx: hint,
        };
        self.nearest_rec(0, q, &mut best);
        (best.idx, best.d2)
    }

    fn nearest_rec(&self, node: usize, q: &[f64], best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let c = Candidate {
                        d2: dist2(q, self.slot_point(slot)),
                        idx: self.ids[slot],
                    };
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.d2 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points to `q`, skipping `exclude`, sorted by
    /// `(distance, index)`. Returns fewer than `k` only if the cloud is too
    /// small.
    pub fn knn(&self, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, exclude, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.idx, c.d2)).collect()
    }

    fn knn_rec(
        &self,
        node: usize,
        q: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let idx = self.ids[slot];
                    if Some(idx) == exclude {
                        continue;
                    }
                    let c = Candidate {
                        d2: dist2(q, self.slot_point(slot)),
                        idx,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, exclude, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.d2)
                };
                if diff * diff <= worst {
                    self.knn_rec(far, q, k, exclude, heap);
                }
            }
        }
    }

    /// All points at distance `< radius` from `q`, skipping `exclude`,
    /// sorted by `(distance, index)`.
    pub fn within(&self, q: &[f64], radius: f64, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.within_rec(0, q, radius * radius, &mut |idx, d2| {
            if Some(idx) != exclude {
                out.push(Candidate { d2, idx });
            }
        });
        out.sort();
        out.into_iter().map(|c| (c.idx, c.d2)).collect()
    }

    /// Number of points at distance `< radius` from `q`.
    pub fn count_within(&self, q: &[f64], radius: f64) -> usize {
        let mut count = 0;
        self.within_rec(0, q, radius * radius, &mut |_, _| count += 1);
        count
    }

    /// Calls `f(index, squared distance)` for every point at distance
    /// `< radius` from `q`, in tree order.
    pub fn for_each_within(&self, q: &[f64], radius: f64, mut f: impl FnMut(usize, f64)) {
        self.within_rec(0, q, radius * radius, &mut f);
    }

    fn within_rec(&self, node: usize, q: &[f64], r2: f64, f: &mut impl FnMut(usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let d2 = dist2(q, self.slot_point(slot));
                    if d2 < r2 {
                        f(self.ids[slot], d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, f);
                if diff * diff < r2 {
                    self.within_rec(far, q, r2, f);
                }
            }
        }
    }

    /// Neighborhood of cloud point `i` under `spec`.
    pub fn neighbors(&self, i: usize, spec: &NeighborhoodSpec) -> Result<WeightedNeighbors> {
        if i >= self.len() {
            return Err(Error::InvalidInput(format!(
                "point index {i} out of range for {} points",
                self.len()
            )));
        }
        spec.validate()?;
        let q = self.point(i);
        let found = match *spec {
            NeighborhoodSpec::Knn { k } => {
                if self.len() == 1 {
                    return Err(Error::NoNeighbors);
                }
                if k >= self.len() {
                    return Err(Error::InsufficientPoints {
                        requested: k,
                        available: self.len() - 1,
                    });
                }
                self.knn(q, k, Some(i))
            }
            NeighborhoodSpec::EpsBall { eps } => self.within(q, eps, Some(i)),
            NeighborhoodSpec::Gaussian { bandwidth, cutoff } => {
                self.within(q, cutoff * bandwidth, Some(i))
            }
        };
        if found.is_empty() {
            return Err(Error::SingletonPoint(i));
        }
        let mut out = WeightedNeighbors {
            indices: Vec::with_capacity(found.len()),
            distances: Vec::with_capacity(found.len()),
            weights: Vec::with_capacity(found.len()),
        };
        for (idx, d2) in found {
            let d = d2.sqrt();
            out.indices.push(idx);
            out.distances.push(d);
            out.weights.push(spec.weight(d));
        }
        Ok(out)
    }
}

/// Free-function form of [`SpatialIndex::neighbors`].
pub fn neighbors(index: &SpatialIndex, i: usize, spec: &NeighborhoodSpec) -> Result<WeightedNeighbors> {
    index.neighbors(i, spec)
}

fn build_node(
    cloud: &PointCloud,
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let dim = cloud.dim();
    let mut best_axis = 0;
    let mut best_spread = -1.0;
    for axis in 0..dim {
        let (lo, hi) = order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let x = cloud.point(i)[axis];
            (lo.min(x), hi.max(x))
        });
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_axis = axis;
        }
    }
    if best_spread <= 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        cloud.point(a)[best_axis].total_cmp(&cloud.point(b)[best_axis])
    });
    let value = cloud.point(order[start + mid])[best_axis];
    nodes.push(Node::Leaf { start, end });
    let left = build_node(cloud, order, start, start + mid, nodes);
    let right = build_node(cloud, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis: best_axis,
        value,
        left,
        right,
    };
    id
}
