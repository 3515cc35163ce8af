//! Environment graph, vertex geometry and shortest-path primitives.
//!
//! The graph is a directed graph whose edge weights are action durations.
//! Every vertex carries a planar coordinate so that communication distances
//! can be evaluated between any two vertices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

/// Absolute tolerance used for every cost/time equality comparison.
pub const COST_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("no sources")]
    NoSources,
    #[error("invalid vertex {0}")]
    InvalidVertex(usize),
    #[error("edge {from}->{to} has non-positive weight {weight}")]
    BadWeight { from: usize, to: usize, weight: f64 },
    #[error("coordinate of vertex {0} is not finite")]
    BadCoord(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    fn from(i: usize) -> Self {
        VertexId(i as u32)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub fn new(x: f64, y: f64) -> Self {
        Coord { x, y }
    }

    pub fn scaled(self, k: f64) -> Self {
        Coord::new(self.x * k, self.y * k)
    }
}

/// Straight-line distance between two coordinates.
pub fn euclidean_distance(a: Coord, b: Coord) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub target: VertexId,
    pub weight: f64,
}

/// Directed weighted graph with per-vertex coordinates. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    coords: Vec<Coord>,
    out_edges: Vec<Vec<Edge>>,
}

impl WeightedGraph {
    /// Builds a graph from coordinates and `(from, to, weight)` triples.
    /// Per-vertex adjacency keeps insertion order.
    pub fn new(
        coords: Vec<Coord>,
        edges: impl IntoIterator<Item = (VertexId, VertexId, f64)>,
    ) -> Result<Self, GraphError> {
        for (i, c) in coords.iter().enumerate() {
            if !c.x.is_finite() || !c.y.is_finite() {
                return Err(GraphError::BadCoord(i));
            }
        }
        let n = coords.len();
        let mut out_edges = vec![Vec::new(); n];
        for (from, to, weight) in edges {
            if from.index() >= n {
                return Err(GraphError::InvalidVertex(from.index()));
            }
            if to.index() >= n {
                return Err(GraphError::InvalidVertex(to.index()));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(GraphError::BadWeight {
                    from: from.index(),
                    to: to.index(),
                    weight,
                });
            }
            out_edges[from.index()].push(Edge { target: to, weight });
        }
        Ok(WeightedGraph { coords, out_edges })
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.coords.len()).map(VertexId::from)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.coords.len()
    }

    pub fn coord(&self, v: VertexId) -> Coord {
        self.coords[v.index()]
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn out_edges(&self, v: VertexId) -> &[Edge] {
        &self.out_edges[v.index()]
    }

    /// Weight of the edge `from -> to`, if present. Parallel edges resolve to the lightest.
    pub fn edge_weight(&self, from: VertexId, to: VertexId) -> Option<f64> {
        self.out_edges
            .get(from.index())?
            .iter()
            .filter(|e| e.target == to)
            .map(|e| e.weight)
            .min_by(f64::total_cmp)
    }

    pub fn max_edge_weight(&self) -> f64 {
        self.out_edges
            .iter()
            .flatten()
            .map(|e| e.weight)
            .fold(0.0, f64::max)
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, f64)> + '_ {
        self.out_edges.iter().enumerate().flat_map(|(i, es)| {
            es.iter()
                .map(move |e| (VertexId::from(i), e.target, e.weight))
        })
    }
}

/// Graph with every edge direction flipped; coordinates are unchanged.
pub fn reverse_graph(graph: &WeightedGraph) -> WeightedGraph {
    let mut out_edges = vec![Vec::new(); graph.vertex_count()];
    for (from, to, weight) in graph.edges() {
        out_edges[to.index()].push(Edge {
            target: from,
            weight,
        });
    }
    WeightedGraph {
        coords: graph.coords.clone(),
        out_edges,
    }
}

/// Result of a shortest-path search.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub cost: Vec<Option<f64>>,
    pub parent: Vec<Option<VertexId>>,
    /// Vertices in the order they were settled (non-decreasing cost).
    pub settled: Vec<VertexId>,
}

impl CostMap {
    fn empty(n: usize) -> Self {
        CostMap {
            cost: vec![None; n],
            parent: vec![None; n],
            settled: Vec::new(),
        }
    }

    pub fn get(&self, v: VertexId) -> Option<f64> {
        self.cost[v.index()]
    }

    /// Walks parents back from `v` to the source that reached it.
    pub fn path_to(&self, v: VertexId) -> Option<Vec<VertexId>> {
        self.cost[v.index()]?;
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent[cur.index()] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

/// Min-heap entry ordered by cost, then by lower vertex id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QueueEntry {
    pub cost: f64,
    pub vertex: VertexId,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // reversed so that BinaryHeap pops the smallest entry
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Multi-source Dijkstra.
///
/// `cost[v]` ends up as the minimum over sources of `initial_cost + dist(s, v)`,
/// restricted to vertices accepted by `allowed`. When `stop` returns true for a
/// settled vertex the search halts; every cost up to that vertex's cost is final.
pub fn multi_source_dijkstra<S, A>(
    graph: &WeightedGraph,
    sources: &[(VertexId, f64)],
    mut stop: S,
    allowed: A,
) -> Result<CostMap, GraphError>
where
    S: FnMut(VertexId, f64) -> bool,
    A: Fn(VertexId) -> bool,
{
    if sources.is_empty() {
        return Err(GraphError::NoSources);
    }
    let n = graph.vertex_count();
    let mut map = CostMap::empty(n);
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(v, c) in sources {
        if !graph.contains(v) {
            return Err(GraphError::InvalidVertex(v.index()));
        }
        if !allowed(v) {
            continue;
        }
        if map.cost[v.index()].is_none_or(|old| c < old) {
            map.cost[v.index()] = Some(c);
            heap.push(QueueEntry { cost: c, vertex: v });
        }
    }
    while let Some(QueueEntry { cost, vertex }) = heap.pop() {
        if done[vertex.index()] {
            continue;
        }
        done[vertex.index()] = true;
        map.settled.push(vertex);
        if stop(vertex, cost) {
            break;
        }
        for e in graph.out_edges(vertex) {
            let t = e.target.index();
            if done[t] || !allowed(e.target) {
                continue;
            }
            let nc = cost + e.weight;
            if map.cost[t].is_none_or(|old| nc < old) {
                map.cost[t] = Some(nc);
                map.parent[t] = Some(vertex);
                heap.push(QueueEntry {
                    cost: nc,
                    vertex: e.target,
                });
            }
        }
    }
    Ok(map)
}

/// Unrestricted single-source search over the whole graph.
pub fn shortest_paths(graph: &WeightedGraph, source: VertexId) -> Result<CostMap, GraphError> {
    multi_source_dijkstra(graph, &[(source, 0.0)], |_, _| false, |_| true)
}

/// Shortest-path distance `from -> to`, or `None` if unreachable.
pub fn distance(graph: &WeightedGraph, from: VertexId, to: VertexId) -> Option<f64> {
    let map = multi_source_dijkstra(graph, &[(from, 0.0)], |v, _| v == to, |_| true).ok()?;
    map.get(to)
}
