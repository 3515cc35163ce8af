//! Communication range relation and fleet connectivity.

use crate::graph::{euclidean_distance, Coord, VertexId, WeightedGraph};

/// Distance function used for communication range.
#[derive(Clone, Copy, Debug)]
pub enum Metric {
    Euclidean,
    Custom(fn(Coord, Coord) -> f64),
}

impl Metric {
    #[inline]
    pub fn distance(self, a: Coord, b: Coord) -> f64 {
        match self {
            Metric::Euclidean => euclidean_distance(a, b),
            Metric::Custom(f) => f(a, b),
        }
    }
}

/// Communication limit plus the metric it is measured in.
#[derive(Clone, Copy, Debug)]
pub struct CommConfig {
    pub limit: f64,
    pub metric: Metric,
}

impl CommConfig {
    /// Euclidean range with the given limit. `f64::INFINITY` disables the constraint.
    pub fn euclidean(limit: f64) -> Self {
        assert!(limit > 0.0, "communication limit must be positive");
        CommConfig {
            limit,
            metric: Metric::Euclidean,
        }
    }

    pub fn with_metric(limit: f64, metric: Metric) -> Self {
        assert!(limit > 0.0, "communication limit must be positive");
        CommConfig { limit, metric }
    }

    pub fn unlimited() -> Self {
        CommConfig::euclidean(f64::INFINITY)
    }
}

/// `a` and `b` can talk directly. The boundary is inclusive.
#[inline]
pub fn within_range(cfg: &CommConfig, a: Coord, b: Coord) -> bool {
    cfg.metric.distance(a, b) <= cfg.limit
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the lower index as root so part ordering is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Partition of agent indices into maximal communication-connected groups.
/// Parts are sorted by their smallest member; members ascend within a part.
pub fn components(cfg: &CommConfig, positions: &[Coord]) -> Vec<Vec<usize>> {
    let n = positions.len();
    let mut dsu = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if within_range(cfg, positions[i], positions[j]) {
                dsu.union(i, j);
            }
        }
    }
    let mut parts: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = dsu.find(i);
        if slot[root] == usize::MAX {
            slot[root] = parts.len();
            parts.push(Vec::new());
        }
        parts[slot[root]].push(i);
    }
    parts
}

/// Every agent can reach every other one, possibly through relays.
pub fn fleet_connected(cfg: &CommConfig, positions: &[Coord]) -> bool {
    connected_by(cfg, positions.len(), |i| positions[i])
}

/// [`fleet_connected`] over `n` agents whose coordinates come from `coord`.
pub fn connected_by(cfg: &CommConfig, n: usize, coord: impl Fn(usize) -> Coord) -> bool {
    if n <= 1 {
        return true;
    }
    if n > 64 {
        let positions: Vec<Coord> = (0..n).map(&coord).collect();
        return components(cfg, &positions).len() == 1;
    }
    // flood fill from agent 0 over a bit set of reached agents
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut reached = 1u64;
    let mut frontier = 1u64;
    while frontier != 0 {
        let i = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let ci = coord(i);
        let mut rest = full & !reached;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if within_range(cfg, ci, coord(j)) {
                reached |= 1 << j;
                frontier |= 1 << j;
            }
        }
    }
    reached == full
}

/// Vertex-level connectivity check.
pub fn vertices_connected(cfg: &CommConfig, graph: &WeightedGraph, vertices: &[VertexId]) -> bool {
    let coords: Vec<Coord> = vertices.iter().map(|&v| graph.coord(v)).collect();
    fleet_connected(cfg, &coords)
}

/// Bucket grid over vertex coordinates for "all vertices within the limit of v"
/// queries. Euclidean only; custom metrics fall back to a full scan.
#[derive(Debug, Clone)]
pub struct ProximityIndex {
    cfg: CommConfig,
    coords: Vec<Coord>,
    buckets: Option<Buckets>,
}

#[derive(Debug, Clone)]
struct Buckets {
    cell: f64,
    min_x: f64,
    min_y: f64,
    cols: usize,
    rows: usize,
    // vertices in each bucket, ascending id
    members: Vec<Vec<VertexId>>,
}

impl ProximityIndex {
    pub fn new(graph: &WeightedGraph, cfg: CommConfig) -> Self {
        let coords = graph.coords().to_vec();
        let buckets = match cfg.metric {
            Metric::Euclidean if !coords.is_empty() => Some(Buckets::build(&coords, cfg.limit)),
            _ => None,
        };
        ProximityIndex {
            cfg,
            coords,
            buckets,
        }
    }

    pub fn config(&self) -> &CommConfig {
        &self.cfg
    }

    /// Calls `f` for every vertex within range of `v` (including `v` itself),
    /// stopping early when `f` returns `true`. Returns whether it stopped early.
    pub fn any_within<F: FnMut(VertexId) -> bool>(&self, v: VertexId, mut f: F) -> bool {
        let origin = self.coords[v.index()];
        let mut check = |u: VertexId| within_range(&self.cfg, origin, self.coords[u.index()]) && f(u);
        match &self.buckets {
            None => (0..self.coords.len()).map(VertexId::from).any(check),
            Some(b) => {
                let (bc, br) = b.bucket_of(origin);
                let (c0, c1) = (bc.saturating_sub(1), (bc + 1).min(b.cols - 1));
                let (r0, r1) = (br.saturating_sub(1), (br + 1).min(b.rows - 1));
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        if b.members[r * b.cols + c].iter().copied().any(&mut check) {
                            return true;
                        }
                    }
                }
                false
            }
        }
    }

    pub fn within(&self, v: VertexId) -> Vec<VertexId> {
        let mut out = Vec::new();
        self.any_within(v, |u| {
            out.push(u);
            false
        });
        out.sort_unstable();
        out
    }
}

impl Buckets {
    fn build(coords: &[Coord], limit: f64) -> Self {
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in coords {
            min_x = min_x.min(c.x);
            min_y = min_y.min(c.y);
            max_x = max_x.max(c.x);
            max_y = max_y.max(c.y);
        }
        let extent = (max_x - min_x).max(max_y - min_y).max(1.0);
        // bucket side >= limit so neighbors within range sit in adjacent buckets
        let cell = if limit.is_finite() { limit.max(extent / 512.0).max(1e-6) } else { extent + 1.0 };
        let cell = cell.min(extent + 1.0);
        let cols = ((max_x - min_x) / cell).floor() as usize + 1;
        let rows = ((max_y - min_y) / cell).floor() as usize + 1;
        let mut b = Buckets {
            cell,
            min_x,
            min_y,
            cols,
            rows,
            members: vec![Vec::new(); cols * rows],
        };
        for (i, &c) in coords.iter().enumerate() {
            let (bc, br) = b.bucket_of(c);
            b.members[br * cols + bc].push(VertexId::from(i));
        }
        b
    }

    fn bucket_of(&self, c: Coord) -> (usize, usize) {
        let bc = (((c.x - self.min_x) / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let br = (((c.y - self.min_y) / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (bc, br)
    }
}
