//! First stage: per-epoch reachability searches.
//!
//! For each goal one agent (the leader) is sent to it along a shortest path.
//! Every other agent searches, in communication-tree order, for all the places
//! it could reach without losing contact with the agents ordered before it.
//! The sets of places each agent may stand on at the end of the epoch (result
//! nodes) seed the next epoch and shape the second-stage heuristic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::comms::ProximityIndex;
use crate::graph::{multi_source_dijkstra, reverse_graph, VertexId, WeightedGraph, COST_EPS};
use crate::scenario::Scenario;
use crate::timing::{timed, Deadline, StepTimings};

const NO_SLOT: u32 = u32::MAX;

/// Default cap on waiting-fallback rounds per follower search.
pub const DEFAULT_WAIT_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Stage1Failure {
    #[error("epoch infeasible: goal {goal} unreachable")]
    EpochInfeasible { goal: VertexId },
    #[error("ordering infeasible: agents {agents:?} cannot join the communication tree")]
    OrderingInfeasible { agents: Vec<usize> },
    #[error("follower initialization infeasible for agent {agent}")]
    FollowerInit { agent: usize },
    #[error("follower search stalled for agent {agent}")]
    FollowerStalled { agent: usize },
    #[error("follower has no result nodes (agent {agent})")]
    NoResultNodes { agent: usize },
    #[error("backward validation deadlock at agent {agent}")]
    BackwardDeadlock { agent: usize },
    #[error("timeout")]
    Timeout,
}

impl Stage1Failure {
    pub fn category(&self) -> &'static str {
        match self {
            Stage1Failure::EpochInfeasible { .. } => "epoch infeasible",
            Stage1Failure::OrderingInfeasible { .. } => "ordering infeasible",
            Stage1Failure::FollowerInit { .. } => "follower initialization infeasible",
            Stage1Failure::FollowerStalled { .. } => "follower search stalled",
            Stage1Failure::NoResultNodes { .. } => "follower has no result nodes",
            Stage1Failure::BackwardDeadlock { .. } => "backward validation deadlock",
            Stage1Failure::Timeout => "timeout",
        }
    }
}

/// A failure tagged with the epoch (goal index) it happened in.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stage 1, epoch {epoch}: {failure}")]
pub struct Stage1Error {
    pub epoch: usize,
    pub failure: Stage1Failure,
}

/// Tunables of the first stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Params {
    /// Two nodes of different agents are treated as simultaneous when their
    /// costs differ by at most this much.
    pub witness_window: f64,
    pub max_wait_rounds: usize,
}

impl Stage1Params {
    /// Window equal to the heaviest edge of `graph`.
    pub fn for_graph(graph: &WeightedGraph) -> Self {
        Stage1Params {
            witness_window: graph.max_edge_weight(),
            max_wait_rounds: DEFAULT_WAIT_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchNode {
    pub vertex: VertexId,
    pub cost: f64,
    /// Index of the parent in the owning search's node list.
    pub parent: Option<usize>,
    pub is_result: bool,
}

/// Explored region of one agent in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSearch {
    nodes: Vec<SearchNode>,
    slot: Vec<u32>,
    pub init_nodes: Vec<(VertexId, f64)>,
}

impl AgentSearch {
    fn empty(vertex_count: usize, init_nodes: Vec<(VertexId, f64)>) -> Self {
        AgentSearch {
            nodes: Vec::new(),
            slot: vec![NO_SLOT; vertex_count],
            init_nodes,
        }
    }

    fn open(&mut self, vertex: VertexId, cost: f64, parent: Option<usize>) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(SearchNode {
            vertex,
            cost,
            parent,
            is_result: false,
        });
        self.slot[vertex.index()] = idx as u32;
        idx
    }

    /// Opened nodes in the order they were opened.
    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn is_opened(&self, v: VertexId) -> bool {
        self.slot[v.index()] != NO_SLOT
    }

    pub fn opened_cost(&self, v: VertexId) -> Option<f64> {
        match self.slot[v.index()] {
            NO_SLOT => None,
            k => Some(self.nodes[k as usize].cost),
        }
    }

    pub fn opened_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn opened(&self) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.nodes.iter().map(|n| (n.vertex, n.cost))
    }

    pub fn is_result(&self, v: VertexId) -> bool {
        match self.slot[v.index()] {
            NO_SLOT => false,
            k => self.nodes[k as usize].is_result,
        }
    }

    pub fn result_nodes(&self) -> Vec<(VertexId, f64)> {
        self.nodes
            .iter()
            .filter(|n| n.is_result)
            .map(|n| (n.vertex, n.cost))
            .collect()
    }

    pub fn result_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_result).count()
    }

    /// Tree path from an init node to `v`.
    pub fn path_to(&self, v: VertexId) -> Option<Vec<VertexId>> {
        let mut k = match self.slot[v.index()] {
            NO_SLOT => return None,
            k => k as usize,
        };
        let mut path = vec![self.nodes[k].vertex];
        while let Some(p) = self.nodes[k].parent {
            path.push(self.nodes[p].vertex);
            k = p;
        }
        path.reverse();
        Some(path)
    }

    fn set_result(&mut self, v: VertexId, flag: bool) {
        let k = self.slot[v.index()];
        if k != NO_SLOT {
            self.nodes[k as usize].is_result = flag;
        }
    }
}

/// Everything the first stage decided about one goal.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub goal: VertexId,
    pub leader: usize,
    pub leader_start: VertexId,
    /// Shortest travel cost of the leader to the goal.
    pub leader_cost: f64,
    /// Agent indices, leader first.
    pub order: Vec<usize>,
    /// Indexed by agent.
    pub searches: Vec<AgentSearch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderChoice {
    pub agent: usize,
    pub start: VertexId,
    pub cost: f64,
}

/// Picks the agent whose previous result node is closest to `goal`.
///
/// `reverse` must be the reversed graph so that a single search from the goal
/// yields distances *to* it.
pub fn select_leader(
    reverse: &WeightedGraph,
    prev_results: &[Vec<(VertexId, f64)>],
    goal: VertexId,
) -> Result<LeaderChoice, Stage1Failure> {
    let mut pending: Vec<bool> = vec![false; reverse.vertex_count()];
    let mut remaining = 0usize;
    for set in prev_results {
        for &(v, _) in set {
            if !pending[v.index()] {
                pending[v.index()] = true;
                remaining += 1;
            }
        }
    }
    let map = multi_source_dijkstra(
        reverse,
        &[(goal, 0.0)],
        |v, _| {
            if pending[v.index()] {
                pending[v.index()] = false;
                remaining -= 1;
            }
            remaining == 0
        },
        |_| true,
    )
    .map_err(|_| Stage1Failure::EpochInfeasible { goal })?;
    let mut best: Option<LeaderChoice> = None;
    for (agent, set) in prev_results.iter().enumerate() {
        for &(v, _) in set {
            let Some(cost) = map.get(v) else { continue };
            let better = match best {
                None => true,
                Some(b) => {
                    cost < b.cost - COST_EPS
                        || ((cost - b.cost).abs() <= COST_EPS && agent == b.agent && v < b.start)
                }
            };
            if better {
                best = Some(LeaderChoice {
                    agent,
                    start: v,
                    cost,
                });
            }
        }
    }
    best.ok_or(Stage1Failure::EpochInfeasible { goal })
}

/// Orders agents along the communication tree rooted at the leader.
///
/// An agent can join once one of its previous result nodes is within range of
/// the sources gathered so far. Among those, the one whose candidate start is
/// reached first by a shortest-path search from the sources joins next.
pub fn select_order(
    graph: &WeightedGraph,
    prox: &ProximityIndex,
    leader: usize,
    leader_start: VertexId,
    prev_results: &[Vec<(VertexId, f64)>],
) -> Result<Vec<usize>, Stage1Failure> {
    let n = prev_results.len();
    let mut order = vec![leader];
    let mut placed = vec![false; n];
    placed[leader] = true;
    let mut is_source = vec![false; graph.vertex_count()];
    is_source[leader_start.index()] = true;
    let mut sources = vec![leader_start];
    let near_source = |v: VertexId, is_source: &[bool]| prox.any_within(v, |u| is_source[u.index()]);
    while order.len() < n {
        // agent owning each eligible candidate start
        let mut owner: Vec<Vec<usize>> = vec![Vec::new(); graph.vertex_count()];
        let mut eligible = vec![false; n];
        for (agent, set) in prev_results.iter().enumerate() {
            if placed[agent] {
                continue;
            }
            for &(v, _) in set {
                if near_source(v, &is_source) {
                    owner[v.index()].push(agent);
                    eligible[agent] = true;
                }
            }
        }
        if !eligible.iter().any(|&e| e) {
            let agents = (0..n).filter(|&a| !placed[a]).collect();
            return Err(Stage1Failure::OrderingInfeasible { agents });
        }
        let seeds: Vec<(VertexId, f64)> = sources.iter().map(|&v| (v, 0.0)).collect();
        let mut first: Option<f64> = None;
        let mut reached: Vec<usize> = Vec::new();
        multi_source_dijkstra(
            graph,
            &seeds,
            |v, c| {
                if first.is_some_and(|f| c > f + COST_EPS) {
                    return true;
                }
                if !owner[v.index()].is_empty() {
                    first.get_or_insert(c);
                    reached.extend_from_slice(&owner[v.index()]);
                }
                false
            },
            |_| true,
        )
        .expect("sources are valid vertices");
        let next = reached
            .into_iter()
            .min()
            .unwrap_or_else(|| eligible.iter().position(|&e| e).expect("some agent is eligible"));
        placed[next] = true;
        order.push(next);
        for &(v, _) in &prev_results[next] {
            if !is_source[v.index()] && near_source(v, &is_source) {
                sources.push(v);
            }
        }
        // added after the scan so that eligibility is judged against the old sources
        for &v in &sources {
            is_source[v.index()] = true;
        }
    }
    Ok(order)
}

/// Shortest path of the leader. Everything settled before the goal is opened.
pub fn plan_leader_path(
    graph: &WeightedGraph,
    leader_start: VertexId,
    goal: VertexId,
) -> Result<AgentSearch, Stage1Failure> {
    let map = multi_source_dijkstra(graph, &[(leader_start, 0.0)], |v, _| v == goal, |_| true)
        .map_err(|_| Stage1Failure::EpochInfeasible { goal })?;
    if map.get(goal).is_none() {
        return Err(Stage1Failure::EpochInfeasible { goal });
    }
    let mut search = AgentSearch::empty(graph.vertex_count(), vec![(leader_start, 0.0)]);
    for &v in &map.settled {
        let parent = map.parent[v.index()].map(|p| search.slot[p.index()] as usize);
        search.open(v, map.get(v).expect("settled vertices have a cost"), parent);
    }
    search.set_result(goal, true);
    Ok(search)
}

/// Previous result nodes of an agent that are in range of an earlier agent's
/// init node, with costs reset to zero.
pub fn init_follower(
    agent: usize,
    prev_own: &[(VertexId, f64)],
    earlier_init: &[VertexId],
    prox: &ProximityIndex,
    vertex_count: usize,
) -> Result<Vec<(VertexId, f64)>, Stage1Failure> {
    let mut mark = vec![false; vertex_count];
    for v in earlier_init {
        mark[v.index()] = true;
    }
    let mut out: Vec<(VertexId, f64)> = prev_own
        .iter()
        .filter(|(v, _)| prox.any_within(*v, |u| mark[u.index()]))
        .map(|&(v, _)| (v, 0.0))
        .collect();
    out.sort_by_key(|&(v, _)| v);
    out.dedup_by_key(|&mut (v, _)| v);
    if out.is_empty() {
        return Err(Stage1Failure::FollowerInit { agent });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    cost: f64,
    vertex: VertexId,
    parent: Option<usize>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on (cost, vertex, parent)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
            .then_with(|| other.parent.cmp(&self.parent))
    }
}

/// Whether an earlier agent can keep `v` in contact at time `cost`.
fn has_witness(
    prox: &ProximityIndex,
    earlier: &[&AgentSearch],
    v: VertexId,
    cost: f64,
    window: f64,
) -> bool {
    prox.any_within(v, |u| {
        earlier.iter().any(|e| {
            let k = e.slot[u.index()];
            if k == NO_SLOT {
                return false;
            }
            let node = &e.nodes[k as usize];
            (node.cost - cost).abs() <= window + COST_EPS || (node.is_result && node.cost <= cost + COST_EPS)
        })
    })
}

/// How far `cost` would have to drop before some in-range earlier node with a
/// lower cost comes within the witness window. `None` if nothing qualifies.
fn witness_deficit(
    prox: &ProximityIndex,
    earlier: &[&AgentSearch],
    v: VertexId,
    cost: f64,
    window: f64,
) -> Option<f64> {
    let mut latest: Option<f64> = None;
    prox.any_within(v, |u| {
        for e in earlier {
            if let Some(c) = e.opened_cost(u) {
                if c + window < cost {
                    latest = Some(latest.map_or(c, |l: f64| l.max(c)));
                }
            }
        }
        false
    });
    latest.map(|c| cost - window - c)
}

/// Marks follower nodes in range of an earlier agent's result node. Returns
/// the number of result nodes.
pub fn compute_result_nodes(search: &mut AgentSearch, earlier: &[&AgentSearch], prox: &ProximityIndex) -> usize {
    let mut target = vec![false; search.slot.len()];
    for e in earlier {
        for n in e.nodes.iter().filter(|n| n.is_result) {
            target[n.vertex.index()] = true;
        }
    }
    let mut count = 0;
    for k in 0..search.nodes.len() {
        let v = search.nodes[k].vertex;
        let hit = prox.any_within(v, |u| target[u.index()]);
        search.nodes[k].is_result = hit;
        count += usize::from(hit);
    }
    count
}

/// Best-first expansion of a follower from its init nodes.
///
/// A node is opened only if an earlier agent has a witness for it: an opened
/// node in range whose cost is within the witness window, or a result node in
/// range reached no later. Nodes past `horizon` are not opened. If no result
/// node turns up, the frontier costs are lowered (the earlier agents wait) and
/// the search resumes.
pub fn follower_search(
    graph: &WeightedGraph,
    prox: &ProximityIndex,
    agent: usize,
    init: &[(VertexId, f64)],
    earlier: &[&AgentSearch],
    horizon: f64,
    params: &Stage1Params,
    deadline: &Deadline,
) -> Result<AgentSearch, Stage1Failure> {
    let window = params.witness_window;
    let mut search = AgentSearch::empty(graph.vertex_count(), init.to_vec());
    let mut heap: BinaryHeap<Pending> = init
        .iter()
        .map(|&(vertex, cost)| Pending {
            cost,
            vertex,
            parent: None,
        })
        .collect();
    let mut rounds = 0;
    let mut pops = 0u32;
    loop {
        let mut beyond: Vec<Pending> = Vec::new();
        let mut blocked: Vec<Pending> = Vec::new();
        while let Some(p) = heap.pop() {
            pops = pops.wrapping_add(1);
            if pops % 1024 == 0 && deadline.expired() {
                return Err(Stage1Failure::Timeout);
            }
            if search.is_opened(p.vertex) {
                continue;
            }
            if p.cost > horizon + COST_EPS {
                beyond.push(p);
                continue;
            }
            if !has_witness(prox, earlier, p.vertex, p.cost, window) {
                blocked.push(p);
                continue;
            }
            let idx = search.open(p.vertex, p.cost, p.parent);
            for e in graph.out_edges(p.vertex) {
                if !search.is_opened(e.target) {
                    heap.push(Pending {
                        cost: p.cost + e.weight,
                        vertex: e.target,
                        parent: Some(idx),
                    });
                }
            }
        }
        if compute_result_nodes(&mut search, earlier, prox) > 0 {
            return Ok(search);
        }
        rounds += 1;
        if rounds > params.max_wait_rounds {
            return Err(Stage1Failure::FollowerStalled { agent });
        }
        let mut frontier: Vec<(Pending, f64)> = Vec::new();
        for p in beyond {
            if !search.is_opened(p.vertex) {
                frontier.push((p, p.cost - horizon));
            }
        }
        for p in blocked {
            // nodes with no earlier witness below them cannot be helped by waiting
            if let Some(d) = witness_deficit(prox, earlier, p.vertex, p.cost, window) {
                if !search.is_opened(p.vertex) && d > COST_EPS {
                    frontier.push((p, d));
                }
            }
        }
        let delta = frontier.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
        if !delta.is_finite() {
            return Err(Stage1Failure::FollowerStalled { agent });
        }
        frontier.sort_by(|a, b| b.0.cmp(&a.0));
        frontier.dedup_by(|a, b| a.0.vertex == b.0.vertex && (a.0.cost - b.0.cost).abs() <= COST_EPS);
        for (p, _) in frontier {
            heap.push(Pending {
                cost: (p.cost - delta).max(0.0),
                ..p
            });
        }
    }
}

/// Prunes result nodes that support no later agent.
///
/// Each pass walks the order backwards from a starting agent whose result
/// nodes are all accepted; an earlier agent's node is kept if it is in range of
/// a kept node of any later agent. Agents left without kept nodes are leaves
/// of the communication tree and start their own pass. A final forward sweep
/// drops nodes whose earlier support was pruned.
pub fn backward_validate(epoch: &mut EpochRecord, prox: &ProximityIndex) -> Result<(), Stage1Failure> {
    let order = epoch.order.clone();
    let vcount = epoch.searches[order[0]].slot.len();
    let results: Vec<Vec<VertexId>> = order
        .iter()
        .map(|&a| epoch.searches[a].result_nodes().into_iter().map(|(v, _)| v).collect())
        .collect();
    if let Some(pos) = results.iter().position(Vec::is_empty) {
        return Err(Stage1Failure::NoResultNodes { agent: order[pos] });
    }
    let mut valid: Vec<Vec<bool>> = results.iter().map(|r| vec![false; r.len()]).collect();
    let mut used_start = vec![false; order.len()];
    let mut start = order.len() - 1;
    loop {
        if used_start[start] {
            return Err(Stage1Failure::BackwardDeadlock { agent: order[start] });
        }
        used_start[start] = true;
        valid[start].iter_mut().for_each(|x| *x = true);
        for k in (0..start).rev() {
            // kept nodes of every later agent
            let mut mark = vec![false; vcount];
            for j in k + 1..order.len() {
                for (r, &v) in results[j].iter().enumerate() {
                    if valid[j][r] {
                        mark[v.index()] = true;
                    }
                }
            }
            for (r, &v) in results[k].iter().enumerate() {
                if !valid[k][r] && prox.any_within(v, |u| mark[u.index()]) {
                    valid[k][r] = true;
                }
            }
        }
        match (0..order.len()).rev().find(|&k| !valid[k].iter().any(|&x| x)) {
            None => break,
            Some(k) => start = k,
        }
    }
    // forward sweep: every kept follower node keeps an earlier kept node in range
    for k in 1..order.len() {
        let mut mark = vec![false; vcount];
        for j in 0..k {
            for (r, &v) in results[j].iter().enumerate() {
                if valid[j][r] {
                    mark[v.index()] = true;
                }
            }
        }
        for (r, &v) in results[k].iter().enumerate() {
            if valid[k][r] && !prox.any_within(v, |u| mark[u.index()]) {
                valid[k][r] = false;
            }
        }
        if !valid[k].iter().any(|&x| x) {
            return Err(Stage1Failure::BackwardDeadlock { agent: order[k] });
        }
    }
    for (k, &agent) in order.iter().enumerate() {
        for (r, &v) in results[k].iter().enumerate() {
            if !valid[k][r] {
                epoch.searches[agent].set_result(v, false);
            }
        }
    }
    Ok(())
}

/// Drops result nodes of `last` that `next` did not start from: the chosen
/// leader start and the follower nodes that could reach earlier agents.
pub fn narrow_to_starts(last: &mut EpochRecord, next: &EpochRecord) {
    for (search, following) in last.searches.iter_mut().zip(&next.searches) {
        let keep: Vec<VertexId> = following.init_nodes.iter().map(|&(v, _)| v).collect();
        for (v, _) in search.result_nodes() {
            if !keep.contains(&v) {
                search.set_result(v, false);
            }
        }
    }
}

/// Runs the first stage over every goal of the scenario.
pub fn run_stage1(
    scenario: &Scenario,
    params: &Stage1Params,
    deadline: &Deadline,
    timings: &mut StepTimings,
) -> Result<Stage1Output, Stage1Error> {
    let graph = &*scenario.graph;
    let reverse = reverse_graph(graph);
    let prox = ProximityIndex::new(graph, scenario.comm);
    let n = scenario.agent_count();
    let mut prev: Vec<Vec<(VertexId, f64)>> = scenario.starts.iter().map(|&s| vec![(s, 0.0)]).collect();
    let mut epochs = Vec::with_capacity(scenario.goal_count());
    for (epoch, &goal) in scenario.goals.iter().enumerate() {
        let fail = |failure| Stage1Error { epoch, failure };
        if deadline.expired() {
            return Err(fail(Stage1Failure::Timeout));
        }
        let choice = timed(&mut timings.leader_selection, || select_leader(&reverse, &prev, goal)).map_err(fail)?;
        prev[choice.agent] = vec![(choice.start, 0.0)];
        let order = timed(&mut timings.ordering, || {
            select_order(graph, &prox, choice.agent, choice.start, &prev)
        })
        .map_err(fail)?;
        let leader_search =
            timed(&mut timings.leader_plan, || plan_leader_path(graph, choice.start, goal)).map_err(fail)?;
        let horizon = leader_search.opened_cost(goal).expect("goal opened") + params.witness_window;
        let mut slots: Vec<Option<AgentSearch>> = vec![None; n];
        slots[choice.agent] = Some(leader_search);
        timed(&mut timings.follower_plan, || -> Result<(), Stage1Failure> {
            for k in 1..order.len() {
                let agent = order[k];
                let earlier: Vec<&AgentSearch> = order[..k]
                    .iter()
                    .map(|&a| slots[a].as_ref().expect("earlier agents are planned"))
                    .collect();
                let earlier_init: Vec<VertexId> =
                    earlier.iter().flat_map(|s| s.init_nodes.iter().map(|&(v, _)| v)).collect();
                let init = init_follower(agent, &prev[agent], &earlier_init, &prox, graph.vertex_count())?;
                let search = follower_search(graph, &prox, agent, &init, &earlier, horizon, params, deadline)?;
                slots[agent] = Some(search);
            }
            Ok(())
        })
        .map_err(fail)?;
        let mut record = EpochRecord {
            goal,
            leader: choice.agent,
            leader_start: choice.start,
            leader_cost: choice.cost,
            order,
            searches: slots.into_iter().map(|s| s.expect("every agent planned")).collect(),
        };
        timed(&mut timings.backward_validation, || backward_validate(&mut record, &prox)).map_err(fail)?;
        if let Some(last) = epochs.last_mut() {
            narrow_to_starts(last, &record);
        }
        prev = record.searches.iter().map(AgentSearch::result_nodes).collect();
        epochs.push(record);
    }
    Ok(Stage1Output { epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::{within_range, CommConfig};
    use crate::graph::{shortest_paths, Coord};
    use crate::map_io::{build_graph, CellIndex, GridMap};
    use std::sync::Arc;

    fn grid(w: usize, h: usize) -> (WeightedGraph, CellIndex) {
        build_graph(&GridMap::open(w, h)).unwrap()
    }

    fn walled(w: usize, h: usize, wall: &[(usize, usize)]) -> (WeightedGraph, CellIndex) {
        let mut g = GridMap::open(w, h);
        for &(c, r) in wall {
            g.set(c, r, false);
        }
        build_graph(&g).unwrap()
    }

    fn params(g: &WeightedGraph) -> Stage1Params {
        Stage1Params::for_graph(g)
    }

    fn close(c: Coord, d: Coord, limit: f64) -> bool {
        within_range(&CommConfig::euclidean(limit), c, d)
    }

    #[test]
    fn leader_is_nearest_agent() {
        let (g, idx) = grid(12, 1);
        let rev = reverse_graph(&g);
        let at = |c| idx.vertex(c, 0).unwrap();
        let prev = vec![vec![(at(0), 0.0)], vec![(at(5), 0.0)]];
        let choice = select_leader(&rev, &prev, at(9)).unwrap();
        assert_eq!(choice, LeaderChoice { agent: 1, start: at(5), cost: 4.0 });
        let single = vec![vec![(at(2), 0.0), (at(7), 1.0), (at(11), 0.0)]];
        let choice = select_leader(&rev, &single, at(8)).unwrap();
        assert_eq!((choice.agent, choice.start), (0, at(7)));
    }

    #[test]
    fn leader_matches_exhaustive_pair_scan() {
        let (g, idx) = walled(10, 10, &[(4, 1), (4, 2), (4, 3), (4, 4), (4, 5), (4, 6)]);
        let rev = reverse_graph(&g);
        let sets: Vec<Vec<(usize, usize)>> = vec![
            vec![(0, 0), (1, 3), (2, 8)],
            vec![(7, 1), (9, 9)],
            vec![(3, 4), (5, 5), (6, 0)],
        ];
        let prev: Vec<Vec<(VertexId, f64)>> = sets
            .iter()
            .map(|s| s.iter().map(|&(c, r)| (idx.vertex(c, r).unwrap(), 0.0)).collect())
            .collect();
        for goal in [(0, 9), (9, 0), (5, 3), (2, 2)] {
            let goal = idx.vertex(goal.0, goal.1).unwrap();
            let mut best = (f64::INFINITY, usize::MAX, VertexId(u32::MAX));
            for (a, set) in prev.iter().enumerate() {
                for &(v, _) in set {
                    let d = crate::graph::distance(&g, v, goal).unwrap();
                    if d < best.0 - 1e-9 {
                        best = (d, a, v);
                    }
                }
            }
            let choice = select_leader(&rev, &prev, goal).unwrap();
            assert!((choice.cost - best.0).abs() < 1e-9);
            assert_eq!((choice.agent, choice.start), (best.1, best.2));
        }
    }

    #[test]
    fn leader_unreachable_goal() {
        let (g, idx) = walled(5, 1, &[(2, 0)]);
        let rev = reverse_graph(&g);
        let prev = vec![vec![(idx.vertex(0, 0).unwrap(), 0.0)]];
        let goal = idx.vertex(4, 0).unwrap();
        assert_eq!(select_leader(&rev, &prev, goal), Err(Stage1Failure::EpochInfeasible { goal }));
    }

    #[test]
    fn order_follows_a_chain() {
        let (g, idx) = grid(20, 1);
        let prox = ProximityIndex::new(&g, CommConfig::euclidean(2.0));
        let at = |c| idx.vertex(c, 0).unwrap();
        let prev = vec![vec![(at(4), 0.0)], vec![(at(0), 0.0)], vec![(at(2), 0.0)]];
        assert_eq!(select_order(&g, &prox, 1, at(0), &prev).unwrap(), vec![1, 2, 0]);
        let two = vec![vec![(at(3), 0.0)], vec![(at(4), 0.0)]];
        assert_eq!(select_order(&g, &prox, 1, at(4), &two).unwrap(), vec![1, 0]);
    }

    #[test]
    fn order_of_star_is_by_distance() {
        let (g, idx) = grid(15, 15);
        let prox = ProximityIndex::new(&g, CommConfig::euclidean(3.0));
        let v = |c, r| idx.vertex(c, r).unwrap();
        let center = v(7, 7);
        let prev = vec![
            vec![(center, 0.0)],
            vec![(v(9, 9), 0.0), (v(14, 14), 0.0)],
            vec![(v(7, 9), 0.0)],
            vec![(v(5, 7), 0.0), (v(8, 7), 0.0)],
            vec![(v(10, 7), 0.0)],
        ];
        let order = select_order(&g, &prox, 0, center, &prev).unwrap();
        // reference: distance from the leader to each agent's closest in-range start
        let d = shortest_paths(&g, center).unwrap();
        let mut expected: Vec<(f64, usize)> = (1..5)
            .map(|a| {
                let c = prev[a]
                    .iter()
                    .filter(|(u, _)| close(g.coord(*u), g.coord(center), 3.0))
                    .map(|(u, _)| d.get(*u).unwrap())
                    .fold(f64::INFINITY, f64::min);
                (c, a)
            })
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut want = vec![0];
        want.extend(expected.iter().map(|e| e.1));
        assert_eq!(order, want);
    }

    #[test]
    fn order_infeasible_when_out_of_range() {
        let (g, idx) = grid(20, 1);
        let prox = ProximityIndex::new(&g, CommConfig::euclidean(2.0));
        let at = |c| idx.vertex(c, 0).unwrap();
        let prev = vec![vec![(at(0), 0.0)], vec![(at(10), 0.0)]];
        assert_eq!(
            select_order(&g, &prox, 0, at(0), &prev),
            Err(Stage1Failure::OrderingInfeasible { agents: vec![1] })
        );
    }

    #[test]
    fn leader_path_corridor_and_identity() {
        let (g, idx) = grid(6, 1);
        let at = |c| idx.vertex(c, 0).unwrap();
        let s = plan_leader_path(&g, at(0), at(5)).unwrap();
        assert_eq!(s.opened_cost(at(5)), Some(5.0));
        assert_eq!(s.result_nodes(), vec![(at(5), 5.0)]);
        assert_eq!(s.path_to(at(5)).unwrap(), (0..6).map(at).collect::<Vec<_>>());
        assert!((0..6).all(|c| s.is_opened(at(c))));
        let z = plan_leader_path(&g, at(3), at(3)).unwrap();
        assert_eq!(z.result_nodes(), vec![(at(3), 0.0)]);
        assert_eq!(z.opened_count(), 1);
    }

    #[test]
    fn leader_path_cost_matches_reference_behind_wall() {
        let wall: Vec<(usize, usize)> = (0..19).map(|r| (10, r)).collect();
        let (g, idx) = walled(20, 20, &wall);
        let (s, t) = (idx.vertex(2, 3).unwrap(), idx.vertex(17, 2).unwrap());
        let search = plan_leader_path(&g, s, t).unwrap();
        let reference = crate::graph::distance(&g, s, t).unwrap();
        assert!((search.opened_cost(t).unwrap() - reference).abs() < 1e-9);
        let path = search.path_to(t).unwrap();
        let len: f64 = path.windows(2).map(|w| g.edge_weight(w[0], w[1]).unwrap()).sum();
        assert!((len - reference).abs() < 1e-9);
    }

    #[test]
    fn init_follower_filters_by_range() {
        let (g, idx) = grid(12, 12);
        let prox = ProximityIndex::new(&g, CommConfig::euclidean(3.0));
        let v = |c, r| idx.vertex(c, r).unwrap();
        let own: Vec<(VertexId, f64)> = [(1, 1), (3, 3), (5, 5), (8, 8), (11, 0), (6, 2)]
            .iter()
            .map(|&(c, r)| (v(c, r), 2.5))
            .collect();
        let earlier = [v(4, 4), v(9, 1)];
        let kept = init_follower(3, &own, &earlier, &prox, g.vertex_count()).unwrap();
        let mut want: Vec<(VertexId, f64)> = own
            .iter()
            .filter(|(u, _)| earlier.iter().any(|&e| close(g.coord(*u), g.coord(e), 3.0)))
            .map(|&(u, _)| (u, 0.0))
            .collect();
        want.sort_by_key(|p| p.0);
        assert_eq!(kept, want);
        let all = init_follower(3, &own[1..3], &[v(4, 4)], &prox, g.vertex_count()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(
            init_follower(3, &own[..1], &[v(11, 11)], &prox, g.vertex_count()),
            Err(Stage1Failure::FollowerInit { agent: 3 })
        );
    }

    fn scenario(
        g: WeightedGraph,
        starts: Vec<VertexId>,
        goals: Vec<VertexId>,
        limit: f64,
    ) -> Scenario {
        let comm = if limit.is_finite() { CommConfig::euclidean(limit) } else { CommConfig::unlimited() };
        Scenario::new(Arc::new(g), starts, goals, comm, 1.5).unwrap()
    }

    fn stage1(s: &Scenario) -> Result<Stage1Output, Stage1Error> {
        run_stage1(s, &params(&s.graph), &Deadline::none(), &mut StepTimings::default())
    }

    /// Every opened follower node has a witness among earlier agents. Result
    /// flags are recomputed on copies because validation prunes them afterwards.
    fn assert_witnessed(s: &Scenario, out: &Stage1Output) {
        let w = params(&s.graph).witness_window;
        let limit = s.comm.limit;
        let prox = ProximityIndex::new(&s.graph, s.comm);
        for epoch in &out.epochs {
            let mut unpruned: Vec<AgentSearch> = vec![epoch.searches[epoch.leader].clone()];
            for k in 1..epoch.order.len() {
                let mut copy = epoch.searches[epoch.order[k]].clone();
                let earlier: Vec<&AgentSearch> = unpruned.iter().collect();
                compute_result_nodes(&mut copy, &earlier, &prox);
                for (v, c) in copy.opened() {
                    let ok = unpruned.iter().any(|other| {
                        other.nodes().iter().any(|n| {
                            close(s.graph.coord(n.vertex), s.graph.coord(v), limit)
                                && ((n.cost - c).abs() <= w + 1e-9 || (n.is_result && n.cost <= c + 1e-9))
                        })
                    });
                    assert!(ok, "unwitnessed node {v} at {c}");
                }
                unpruned.push(copy);
            }
        }
    }

    /// Kept result nodes of every follower are in range of an earlier kept one.
    fn assert_results_supported(s: &Scenario, out: &Stage1Output) {
        for epoch in &out.epochs {
            assert_eq!(epoch.searches[epoch.leader].result_nodes(), vec![(epoch.goal, epoch.leader_cost)]);
            for k in 1..epoch.order.len() {
                let mine = epoch.searches[epoch.order[k]].result_nodes();
                assert!(!mine.is_empty());
                for (v, _) in mine {
                    let ok = epoch.order[..k].iter().any(|&e| {
                        epoch.searches[e]
                            .result_nodes()
                            .iter()
                            .any(|(u, _)| close(s.graph.coord(*u), s.graph.coord(v), s.comm.limit))
                    });
                    assert!(ok);
                }
            }
        }
    }

    #[test]
    fn single_agent_two_goals_corridor() {
        let (g, idx) = grid(10, 1);
        let at = |c| idx.vertex(c, 0).unwrap();
        let s = scenario(g, vec![at(0)], vec![at(6), at(2)], 2.0);
        let out = stage1(&s).unwrap();
        assert_eq!(out.epochs.len(), 2);
        assert_eq!(out.epochs[0].searches[0].result_nodes(), vec![(at(6), 6.0)]);
        assert_eq!(out.epochs[1].searches[0].result_nodes(), vec![(at(2), 4.0)]);
        assert_eq!(out.epochs[1].leader_start, at(6));
    }

    #[test]
    fn zero_length_epoch_when_already_on_goal() {
        let (g, idx) = grid(8, 8);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(3, 3), v(4, 3)], vec![v(3, 3)], 2.0);
        let out = stage1(&s).unwrap();
        assert_eq!(out.epochs[0].leader, 0);
        assert_eq!(out.epochs[0].leader_cost, 0.0);
        assert_eq!(out.epochs[0].searches[0].result_nodes(), vec![(v(3, 3), 0.0)]);
    }

    #[test]
    fn unlimited_range_opens_plain_dijkstra_ball() {
        let (g, idx) = walled(15, 15, &[(7, 3), (7, 4), (7, 5), (7, 6), (7, 7), (7, 8), (7, 9)]);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g.clone(), vec![v(1, 1), v(2, 1), v(1, 2)], vec![v(12, 6), v(3, 12)], f64::INFINITY);
        let out = stage1(&s).unwrap();
        let w = params(&g).witness_window;
        for epoch in &out.epochs {
            let horizon = epoch.leader_cost + w;
            for &a in &epoch.order[1..] {
                let search = &epoch.searches[a];
                let map = multi_source_dijkstra(&g, &search.init_nodes, |_, _| false, |_| true).unwrap();
                let mut ball: Vec<VertexId> =
                    g.vertices().filter(|&u| map.get(u).is_some_and(|c| c <= horizon + 1e-9)).collect();
                let mut opened: Vec<VertexId> = search.opened().map(|(u, _)| u).collect();
                ball.sort();
                opened.sort();
                assert_eq!(opened, ball);
                for (u, c) in search.opened() {
                    assert!((c - map.get(u).unwrap()).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sub_edge_range_shadows_earlier_agents() {
        let (g, idx) = grid(8, 8);
        let v = |c, r| idx.vertex(c, r).unwrap();
        // range 1.0 keeps the pair adjacent orthogonally
        let s = scenario(g.clone(), vec![v(0, 0), v(1, 0)], vec![v(6, 0)], 1.0);
        let out = stage1(&s).unwrap();
        let e = &out.epochs[0];
        let leader = &e.searches[e.leader];
        for &a in &e.order[1..] {
            for (u, _) in e.searches[a].opened() {
                assert!(leader.opened().any(|(x, _)| close(g.coord(x), g.coord(u), 1.0)));
            }
        }
        assert_witnessed(&s, &out);
        assert_results_supported(&s, &out);
    }

    #[test]
    fn doorway_followers_are_witnessed() {
        // wall across the middle with a one-cell doorway
        let wall: Vec<(usize, usize)> = (0..10).filter(|&c| c != 4).map(|c| (c, 5)).collect();
        let (g, idx) = walled(10, 10, &wall);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(3, 1), v(4, 1), v(5, 1)], vec![v(4, 8), v(8, 8)], 3.0);
        let out = stage1(&s).unwrap();
        assert_witnessed(&s, &out);
        assert_results_supported(&s, &out);
        for epoch in &out.epochs {
            let mut order = epoch.order.clone();
            order.sort();
            assert_eq!(order, vec![0, 1, 2]);
            assert_eq!(epoch.order[0], epoch.leader);
        }
    }

    #[test]
    fn result_nodes_match_pairwise_scan() {
        let (g, idx) = grid(12, 3);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g.clone(), vec![v(0, 1), v(1, 1), v(2, 1)], vec![v(10, 1)], 2.0);
        let prox = ProximityIndex::new(&g, s.comm);
        let out = stage1(&s).unwrap();
        let e = &out.epochs[0];
        // recompute result flags from scratch against the unpruned chain
        for k in 1..e.order.len() {
            let mut copy = e.searches[e.order[k]].clone();
            let earlier: Vec<&AgentSearch> = e.order[..k].iter().map(|&a| &e.searches[a]).collect();
            compute_result_nodes(&mut copy, &earlier, &prox);
            for (u, _) in copy.opened() {
                let want = earlier
                    .iter()
                    .any(|x| x.result_nodes().iter().any(|(r, _)| close(g.coord(*r), g.coord(u), 2.0)));
                assert_eq!(copy.is_result(u), want);
            }
        }
        // boundary: exactly at range counts
        let goal = e.goal;
        let at_range = v(8, 1);
        let follower = &e.searches[e.order[1]];
        if follower.is_opened(at_range) {
            assert!(close(g.coord(at_range), g.coord(goal), 2.0));
        }
    }

    #[test]
    fn backward_validation_prunes_unsupported_nodes() {
        let (g, idx) = grid(12, 1);
        let prox = ProximityIndex::new(&g, CommConfig::euclidean(2.0));
        let at = |c| idx.vertex(c, 0).unwrap();
        let n = g.vertex_count();
        let mut leader = AgentSearch::empty(n, vec![(at(5), 0.0)]);
        leader.open(at(5), 0.0, None);
        leader.set_result(at(5), true);
        let mut mid = AgentSearch::empty(n, vec![(at(4), 0.0)]);
        for c in [3, 4, 6, 7] {
            mid.open(at(c), 1.0, None);
            mid.set_result(at(c), true);
        }
        let mut last = AgentSearch::empty(n, vec![(at(2), 0.0)]);
        for c in [1, 2] {
            last.open(at(c), 1.0, None);
            last.set_result(at(c), true);
        }
        let mut record = EpochRecord {
            goal: at(5),
            leader: 0,
            leader_start: at(5),
            leader_cost: 0.0,
            order: vec![0, 1, 2],
            searches: vec![leader, mid, last],
        };
        // brute-force fixpoint: mid keeps nodes that support the last agent
        backward_validate(&mut record, &prox).unwrap();
        let kept: Vec<VertexId> = record.searches[1].result_nodes().iter().map(|p| p.0).collect();
        assert_eq!(kept, vec![at(3), at(4)]);
        assert_eq!(record.searches[2].result_nodes().len(), 2);
        assert_eq!(record.searches[0].result_nodes(), vec![(at(5), 0.0)]);
    }

    #[test]
    fn backward_validation_keeps_clustered_sets() {
        let (g, idx) = grid(6, 6);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(2, 2), v(3, 2), v(2, 3)], vec![v(3, 3)], 10.0);
        let out = stage1(&s).unwrap();
        let e = &out.epochs[0];
        for &a in &e.order[1..] {
            let search = &e.searches[a];
            // every opened node is within range of the goal, so none was pruned
            assert_eq!(search.result_count(), search.opened_count());
        }
    }

    #[test]
    fn leaf_agents_restart_the_backward_pass() {
        // leader in the middle, one follower on each side out of each other's range
        let (g, idx) = grid(11, 11);
        let prox = ProximityIndex::new(&g, CommConfig::euclidean(1.5));
        let v = |c, r| idx.vertex(c, r).unwrap();
        let n = g.vertex_count();
        let mut leader = AgentSearch::empty(n, vec![(v(5, 5), 0.0)]);
        leader.open(v(5, 5), 0.0, None);
        leader.set_result(v(5, 5), true);
        let mut left = AgentSearch::empty(n, vec![(v(4, 5), 0.0)]);
        let mut right = AgentSearch::empty(n, vec![(v(6, 5), 0.0)]);
        for u in [v(4, 5), v(4, 4)] {
            left.open(u, 1.0, None);
            left.set_result(u, true);
        }
        for u in [v(6, 5), v(6, 6)] {
            right.open(u, 1.0, None);
            right.set_result(u, true);
        }
        let mut record = EpochRecord {
            goal: v(5, 5),
            leader: 0,
            leader_start: v(5, 5),
            leader_cost: 0.0,
            order: vec![0, 1, 2],
            searches: vec![leader, left, right],
        };
        backward_validate(&mut record, &prox).unwrap();
        assert_eq!(record.searches[1].result_count(), 2);
        assert_eq!(record.searches[2].result_count(), 2);
        assert_eq!(record.searches[0].result_count(), 1);
    }

    #[test]
    fn three_agents_two_goals_all_epochs_supported() {
        let (g, idx) = walled(12, 12, &[(5, 4), (5, 5), (5, 6), (5, 7), (6, 7), (7, 7)]);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(1, 1), v(2, 1), v(1, 2)], vec![v(10, 3), v(2, 10)], 3.0);
        let out = stage1(&s).unwrap();
        assert_eq!(out.epochs.len(), 2);
        assert_witnessed(&s, &out);
        assert_results_supported(&s, &out);
        assert_eq!(out.epochs[0].leader_start, s.starts[out.epochs[0].leader]);
        let (first, next) = (&out.epochs[0], &out.epochs[1]);
        for a in 0..3 {
            let mut kept: Vec<VertexId> = first.searches[a].result_nodes().iter().map(|p| p.0).collect();
            kept.sort();
            let starts: Vec<VertexId> = next.searches[a].init_nodes.iter().map(|p| p.0).collect();
            assert_eq!(kept, starts, "agent {a}");
        }
        assert_eq!(first.searches[next.leader].result_count(), 1);
    }

    #[test]
    fn timeout_is_reported() {
        let (g, idx) = grid(30, 30);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(0, 0), v(1, 0)], vec![v(29, 29)], 2.0);
        let err = run_stage1(
            &s,
            &params(&s.graph),
            &Deadline::after(std::time::Duration::ZERO),
            &mut StepTimings::default(),
        )
        .unwrap_err();
        assert_eq!(err.failure, Stage1Failure::Timeout);
        assert_eq!(err.epoch, 0);
    }

    #[test]
    fn timings_are_filled() {
        let (g, idx) = grid(20, 20);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(0, 0), v(1, 0), v(0, 1)], vec![v(15, 15)], 3.0);
        let mut t = StepTimings::default();
        run_stage1(&s, &params(&s.graph), &Deadline::none(), &mut t).unwrap();
        assert!(t.follower_plan > std::time::Duration::ZERO);
        assert_eq!(t.stage2(), std::time::Duration::ZERO);
    }
}
