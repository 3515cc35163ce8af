//! Problem instances: validation, goal ordering and randomized start placement.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::comms::{components, fleet_connected, CommConfig};
use crate::graph::{multi_source_dijkstra, shortest_paths, Coord, VertexId, WeightedGraph, COST_EPS};

/// Default heuristic exponent.
pub const DEFAULT_ALPHA: f64 = 1.5;

const PLACEMENT_RETRIES: usize = 100;

/// Goal sets up to this size are ordered exactly.
pub const EXACT_ORDER_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Structure(String),
    #[error("start collision: agents {agents:?} share vertex {vertex}")]
    StartCollision { agents: Vec<usize>, vertex: VertexId },
    #[error("start communication violation: agents {isolated:?} are disconnected from the fleet")]
    StartCommunication { isolated: Vec<usize> },
    #[error("goal {0} is unreachable")]
    UnreachableGoal(VertexId),
    #[error("only {available} vertices reachable from the center, {needed} needed")]
    NotEnoughVertices { available: usize, needed: usize },
    #[error("no feasible start placement")]
    NoFeasiblePlacement,
}

impl ScenarioError {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            ScenarioError::Structure(_) => "invalid scenario",
            ScenarioError::StartCollision { .. } => "start collision",
            ScenarioError::StartCommunication { .. } => "start communication violation",
            ScenarioError::UnreachableGoal(_) => "unreachable goal",
            ScenarioError::NotEnoughVertices { .. } => "not enough vertices",
            ScenarioError::NoFeasiblePlacement => "no feasible start placement",
        }
    }
}

/// A CC-PP instance: graph, starts, ordered goals, communication limit and
/// heuristic exponent.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Arc<WeightedGraph>,
    pub starts: Vec<VertexId>,
    pub goals: Vec<VertexId>,
    pub comm: CommConfig,
    pub alpha: f64,
}

impl Scenario {
    /// Checks structural invariants only; feasibility is `validate_scenario`'s job.
    pub fn new(
        graph: Arc<WeightedGraph>,
        starts: Vec<VertexId>,
        goals: Vec<VertexId>,
        comm: CommConfig,
        alpha: f64,
    ) -> Result<Self, ScenarioError> {
        if starts.is_empty() {
            return Err(ScenarioError::Structure("at least one agent required".into()));
        }
        if goals.is_empty() {
            return Err(ScenarioError::Structure("at least one goal required".into()));
        }
        if let Some(v) = starts.iter().chain(&goals).find(|v| !graph.contains(**v)) {
            return Err(ScenarioError::Structure(format!("vertex {v} not in graph")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ScenarioError::Structure(format!("alpha must be positive, got {alpha}")));
        }
        if !(comm.limit > 0.0) {
            return Err(ScenarioError::Structure("communication limit must be positive".into()));
        }
        Ok(Scenario {
            graph,
            starts,
            goals,
            comm,
            alpha,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.starts.len()
    }

    pub fn goal_count(&self) -> usize {
        self.goals.len()
    }

    pub fn start_coords(&self) -> Vec<Coord> {
        self.starts.iter().map(|&v| self.graph.coord(v)).collect()
    }

    /// Stable content hash of the instance (graph, starts, goals, limit, alpha).
    pub fn fingerprint(&self) -> String {
        let mut text = String::new();
        let g = &self.graph;
        let _ = writeln!(text, "V {}", g.vertex_count());
        for c in g.coords() {
            let _ = writeln!(text, "c {:?} {:?}", c.x, c.y);
        }
        for (u, v, w) in g.edges() {
            let _ = writeln!(text, "e {} {} {:?}", u.0, v.0, w);
        }
        let _ = writeln!(text, "s {:?}", self.starts.iter().map(|v| v.0).collect::<Vec<_>>());
        let _ = writeln!(text, "g {:?}", self.goals.iter().map(|v| v.0).collect::<Vec<_>>());
        let _ = writeln!(text, "l {:?} a {:?}", self.comm.limit, self.alpha);
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Starts must be pairwise distinct and communication-connected.
pub fn validate_scenario(s: &Scenario) -> Result<(), ScenarioError> {
    for (i, a) in s.starts.iter().enumerate() {
        let sharing: Vec<usize> = s
            .starts
            .iter()
            .enumerate()
            .filter(|(_, b)| *b == a)
            .map(|(j, _)| j)
            .collect();
        if sharing.len() > 1 && sharing[0] == i {
            return Err(ScenarioError::StartCollision {
                agents: sharing,
                vertex: *a,
            });
        }
    }
    let coords = s.start_coords();
    if !fleet_connected(&s.comm, &coords) {
        let parts = components(&s.comm, &coords);
        // the first largest part is the fleet; everyone else is isolated
        let main = parts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let mut isolated: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != main)
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        isolated.sort_unstable();
        return Err(ScenarioError::StartCommunication { isolated });
    }
    Ok(())
}

fn open_tour_cost(dist: &[Vec<f64>], tour: &[usize]) -> f64 {
    // index 0 of the matrix is the depot, goal k is row k + 1
    let mut cost = 0.0;
    let mut prev = 0;
    for &k in tour {
        cost += dist[prev][k + 1];
        prev = k + 1;
    }
    cost
}

/// Held-Karp over goal subsets; ties resolve to the lexicographically smaller tour.
fn exact_open_tour(dist: &[Vec<f64>], m: usize) -> Vec<usize> {
    let full = (1usize << m) - 1;
    // best[mask][last]: cheapest path from the depot covering `mask`, ending at `last`
    let mut best = vec![vec![f64::INFINITY; m]; 1 << m];
    let mut pred = vec![vec![usize::MAX; m]; 1 << m];
    for k in 0..m {
        best[1 << k][k] = dist[0][k + 1];
    }
    for mask in 1..=full {
        for last in 0..m {
            let here = best[mask][last];
            if mask & (1 << last) == 0 || !here.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let to = mask | (1 << next);
                let cost = here + dist[last + 1][next + 1];
                if cost < best[to][next] - COST_EPS {
                    best[to][next] = cost;
                    pred[to][next] = last;
                }
            }
        }
    }
    let mut last = (0..m)
        .min_by(|&a, &b| best[full][a].total_cmp(&best[full][b]).then(a.cmp(&b)))
        .expect("at least one goal");
    let mut mask = full;
    let mut rev = Vec::with_capacity(m);
    loop {
        rev.push(last);
        let p = pred[mask][last];
        mask &= !(1 << last);
        if p == usize::MAX {
            break;
        }
        last = p;
    }
    rev.reverse();
    rev
}

/// First improving segment reversal, applied in place.
fn two_opt_pass(dist: &[Vec<f64>], tour: &mut [usize], best: &mut f64) -> bool {
    let m = tour.len();
    for i in 0..m {
        for j in i + 1..m {
            tour[i..=j].reverse();
            let cost = open_tour_cost(dist, tour);
            if cost < *best - COST_EPS {
                *best = cost;
                return true;
            }
            tour[i..=j].reverse();
        }
    }
    false
}

/// First improving relocation of a segment of up to three goals, either way round.
fn or_opt_pass(dist: &[Vec<f64>], tour: &mut Vec<usize>, best: &mut f64) -> bool {
    let m = tour.len();
    for len in 1..=3.min(m.saturating_sub(1)) {
        for i in 0..=m - len {
            let mut rest = tour.clone();
            let seg: Vec<usize> = rest.drain(i..i + len).collect();
            let flipped: Vec<usize> = seg.iter().rev().copied().collect();
            for at in 0..=rest.len() {
                for piece in [&seg, &flipped] {
                    let mut cand = rest.clone();
                    cand.splice(at..at, piece.iter().copied());
                    let cost = open_tour_cost(dist, &cand);
                    if cost < *best - COST_EPS {
                        *best = cost;
                        *tour = cand;
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Open tour from `depot` through every goal over shortest-path distances.
///
/// Up to `EXACT_ORDER_LIMIT` goals the tour is optimal (subset dynamic
/// program). Beyond that: nearest-neighbor construction, then 2-opt reversals
/// and or-opt relocations until neither shortens the tour.
pub fn order_goals_tsp(
    graph: &WeightedGraph,
    depot: VertexId,
    goals: &[VertexId],
) -> Result<Vec<VertexId>, ScenarioError> {
    if goals.is_empty() {
        return Ok(Vec::new());
    }
    let points: Vec<VertexId> = std::iter::once(depot).chain(goals.iter().copied()).collect();
    let mut dist = Vec::with_capacity(points.len());
    for &p in &points {
        let map = shortest_paths(graph, p).map_err(|e| ScenarioError::Structure(e.to_string()))?;
        let mut row = Vec::with_capacity(points.len());
        for &q in &points {
            row.push(map.get(q).ok_or(ScenarioError::UnreachableGoal(q))?);
        }
        dist.push(row);
    }
    let m = goals.len();
    if m <= EXACT_ORDER_LIMIT {
        let tour = exact_open_tour(&dist, m);
        return Ok(tour.into_iter().map(|k| goals[k]).collect());
    }
    let mut tour = Vec::with_capacity(m);
    let mut used = vec![false; m];
    let mut cur = 0;
    for _ in 0..m {
        let next = (0..m)
            .filter(|&k| !used[k])
            .min_by(|&a, &b| dist[cur][a + 1].total_cmp(&dist[cur][b + 1]).then(a.cmp(&b)))
            .expect("unvisited goal remains");
        used[next] = true;
        tour.push(next);
        cur = next + 1;
    }
    let mut best = open_tour_cost(&dist, &tour);
    loop {
        if two_opt_pass(&dist, &mut tour, &mut best) {
            continue;
        }
        if !or_opt_pass(&dist, &mut tour, &mut best) {
            break;
        }
    }
    Ok(tour.into_iter().map(|k| goals[k]).collect())
}

/// Draws `n` distinct starts among the `4n` vertices closest to `center`,
/// retrying until the placement is communication-connected.
pub fn random_starts(
    graph: &WeightedGraph,
    comm: &CommConfig,
    center: VertexId,
    n: usize,
    seed: u64,
) -> Result<Vec<VertexId>, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::Structure("at least one agent required".into()));
    }
    let want = 4 * n;
    let map = multi_source_dijkstra(graph, &[(center, 0.0)], |_, _| false, |_| true)
        .map_err(|e| ScenarioError::Structure(e.to_string()))?;
    let candidates: Vec<VertexId> = map.settled.iter().copied().take(want).collect();
    if candidates.len() < n {
        return Err(ScenarioError::NotEnoughVertices {
            available: candidates.len(),
            needed: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..PLACEMENT_RETRIES {
        let picks = rand::seq::index::sample(&mut rng, candidates.len(), n);
        let starts: Vec<VertexId> = picks.iter().map(|i| candidates[i]).collect();
        let coords: Vec<Coord> = starts.iter().map(|&v| graph.coord(v)).collect();
        if fleet_connected(comm, &coords) {
            return Ok(starts);
        }
    }
    Err(ScenarioError::NoFeasiblePlacement)
}
