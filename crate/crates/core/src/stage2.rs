//! Second stage: greedy best-first search in the composite space of all agents.
//!
//! Each epoch starts from the positions and per-agent clocks where the previous
//! one ended. The agent with the lowest clock acts next, either moving along an
//! edge or waiting. A move that breaks the communication links is tolerated
//! while other agents could still act at the same instant to restore them.

use std::cmp::Ordering;
use std::collections::hash_map::Entry as MapEntry;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::comms::{connected_by, CommConfig};
use crate::graph::{multi_source_dijkstra, reverse_graph, Coord, VertexId, WeightedGraph, COST_EPS};
use crate::plan::{ActionKind, Plan, TimedAction};
use crate::scenario::Scenario;
use crate::stage1::{EpochRecord, Stage1Output};
use crate::timing::{timed, Deadline, StepTimings};

/// Default cap on expansions per epoch search.
pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

/// Times are compared on this grid when detecting revisited states.
const TIME_QUANTUM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Stage2Failure {
    #[error("epoch search failed: open list exhausted")]
    Exhausted,
    #[error("epoch search timeout: node budget of {0} exceeded")]
    Budget(usize),
    #[error("timeout")]
    Timeout,
}

impl Stage2Failure {
    pub fn category(&self) -> &'static str {
        match self {
            Stage2Failure::Exhausted => "epoch search failed",
            Stage2Failure::Budget(_) => "epoch search timeout",
            Stage2Failure::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stage 2, epoch {epoch}: {failure}")]
pub struct Stage2Error {
    pub epoch: usize,
    pub failure: Stage2Failure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Params {
    pub node_budget: usize,
}

impl Default for Stage2Params {
    fn default() -> Self {
        Stage2Params {
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// Per-agent cost-to-reach the nearest result node, confined to the vertices
/// the agent opened in the first stage.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicField {
    confined: Vec<Vec<Option<f64>>>,
    /// `term` for every agent and vertex.
    terms: Vec<Vec<f64>>,
    alpha: f64,
    sentinel: f64,
}

impl HeuristicField {
    fn from_costs(confined: Vec<Vec<Option<f64>>>, unconfined: &[Vec<Option<f64>>], alpha: f64, sentinel: f64) -> Self {
        let terms = confined
            .iter()
            .zip(unconfined)
            .map(|(inside, all)| {
                inside
                    .iter()
                    .zip(all)
                    .map(|(c, far)| match c {
                        Some(c) => c.powf(alpha),
                        // keep a gradient towards the region so sentinel states still differ
                        None => sentinel + far.unwrap_or(sentinel).powf(alpha),
                    })
                    .collect()
            })
            .collect();
        HeuristicField {
            confined,
            terms,
            alpha,
            sentinel,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.confined.len()
    }

    /// Confined cost, `None` outside the agent's opened region.
    pub fn cost(&self, agent: usize, v: VertexId) -> Option<f64> {
        self.confined[agent][v.index()]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smallest contribution of an agent standing outside its region. Larger
    /// than the value of any state whose agents are all inside.
    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }

    /// Contribution of one agent to the heuristic value.
    pub fn term(&self, agent: usize, v: VertexId) -> f64 {
        self.terms[agent][v.index()]
    }
}

/// Multi-source shortest paths to every agent's result nodes, run on the
/// reversed graph `reverse`.
pub fn build_heuristic(reverse: &WeightedGraph, epoch: &EpochRecord, alpha: f64) -> HeuristicField {
    let mut confined = Vec::with_capacity(epoch.searches.len());
    let mut unconfined = Vec::with_capacity(epoch.searches.len());
    for search in &epoch.searches {
        let sources: Vec<(VertexId, f64)> = search.result_nodes().into_iter().map(|(v, _)| (v, 0.0)).collect();
        let inside = multi_source_dijkstra(reverse, &sources, |_, _| false, |v| search.is_opened(v))
            .expect("result nodes are graph vertices");
        let all = multi_source_dijkstra(reverse, &sources, |_, _| false, |_| true)
            .expect("result nodes are graph vertices");
        confined.push(inside.cost);
        unconfined.push(all.cost);
    }
    let widest = confined
        .iter()
        .flatten()
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    let n = confined.len() as f64;
    let sentinel = n * (widest + 1.0).powf(alpha) + 1.0;
    HeuristicField::from_costs(confined, &unconfined, alpha, sentinel)
}

/// Sum over agents of the field cost raised to `alpha`.
pub fn heuristic_value(field: &HeuristicField, positions: &[VertexId]) -> f64 {
    positions.iter().enumerate().map(|(a, &v)| field.term(a, v)).sum()
}

/// A node of the composite search.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    pub positions: Vec<VertexId>,
    /// Per-agent clock: when the agent's current action ends.
    pub times: Vec<f64>,
    /// Agents that passed their turn at their current time.
    pub deferred: Vec<bool>,
    /// Time of the action that broke communication, while it stays broken.
    pub speculative_since: Option<f64>,
    /// Arrival time of each agent's latest move.
    pub arrived: Vec<f64>,
}

impl CompositeState {
    pub fn initial(starts: &[VertexId]) -> Self {
        let n = starts.len();
        CompositeState {
            positions: starts.to_vec(),
            times: vec![0.0; n],
            deferred: vec![false; n],
            speculative_since: None,
            arrived: vec![0.0; n],
        }
    }

    pub fn min_time(&self) -> f64 {
        self.times.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The agent that acts next: lowest index among non-deferred agents at the
    /// minimum time.
    pub fn acting_agent(&self) -> Option<usize> {
        let t = self.min_time();
        (0..self.times.len()).find(|&a| self.times[a] <= t + COST_EPS && !self.deferred[a])
    }

    /// Identifies the state up to a common shift of all clocks. Every
    /// transition commutes with such a shift, so of two states with the same
    /// key only the earlier one is worth expanding.
    fn key(&self) -> Vec<i64> {
        let base = self.min_time();
        let mut k = Vec::with_capacity(self.positions.len() * 2 + 2);
        k.extend(self.positions.iter().map(|v| i64::from(v.0)));
        k.extend(self.times.iter().map(|&t| quantize(t - base)));
        let mut bits = 0i64;
        for (a, &d) in self.deferred.iter().enumerate() {
            if d {
                bits |= 1 << (a % 63);
            }
        }
        k.push(bits);
        k.push(self.speculative_since.map_or(i64::MIN, |t| quantize(t - base)));
        k
    }
}

fn quantize(t: f64) -> i64 {
    (t / TIME_QUANTUM).round() as i64
}

/// Applies the speculation rule to a freshly generated child.
///
/// `acted_at` is the departure time of the action that produced it. Returns
/// `None` when the child must be discarded.
pub fn check_speculative(
    mut child: CompositeState,
    acted_at: f64,
    comm: &CommConfig,
    coords: &[Coord],
) -> Option<CompositeState> {
    if connected_by(comm, child.positions.len(), |a| coords[child.positions[a].index()]) {
        child.speculative_since = None;
        return Some(child);
    }
    let stamp = *child.speculative_since.get_or_insert(acted_at);
    if child.min_time() > stamp + COST_EPS {
        return None;
    }
    Some(child)
}

/// If every agent at the minimum time has passed, they all advance to the next
/// distinct clock value. `None` if there is none.
fn normalize(mut s: CompositeState) -> Option<CompositeState> {
    let t = s.min_time();
    let tied: Vec<usize> = (0..s.times.len()).filter(|&a| s.times[a] <= t + COST_EPS).collect();
    if tied.iter().any(|&a| !s.deferred[a]) {
        return Some(s);
    }
    let next = s
        .times
        .iter()
        .copied()
        .filter(|&x| x > t + COST_EPS)
        .fold(f64::INFINITY, f64::min);
    if !next.is_finite() {
        return None;
    }
    for a in tied {
        s.times[a] = next;
        s.deferred[a] = false;
    }
    Some(s)
}

/// Children of `state`: one per free outgoing edge of the acting agent plus
/// one wait, each filtered by the speculation rule.
pub fn expand(state: &CompositeState, graph: &WeightedGraph, comm: &CommConfig) -> Vec<CompositeState> {
    let Some(agent) = state.acting_agent() else {
        return Vec::new();
    };
    let now = state.times[agent];
    let coords = graph.coords();
    let mut out = Vec::new();
    for e in graph.out_edges(state.positions[agent]) {
        // the target must not be another agent's current vertex
        if state.positions.iter().enumerate().any(|(b, &p)| b != agent && p == e.target) {
            continue;
        }
        let mut child = state.clone();
        child.positions[agent] = e.target;
        child.times[agent] = now + e.weight;
        child.arrived[agent] = now + e.weight;
        child.deferred[agent] = false;
        if let Some(c) = normalize(child).and_then(|c| check_speculative(c, now, comm, coords)) {
            out.push(c);
        }
    }
    let mut wait = state.clone();
    wait.deferred[agent] = true;
    if let Some(c) = normalize(wait).and_then(|c| check_speculative(c, now, comm, coords)) {
        out.push(c);
    }
    out
}

/// Actions of one epoch plus the state it ended in.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSegment {
    pub actions: Vec<Vec<TimedAction>>,
    pub end: CompositeState,
    /// When the leader's stay on the goal counts as the visit.
    pub visit_time: f64,
    pub expansions: usize,
}

/// A node kept in the open list, as recorded for post-hoc inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceNode {
    pub positions: Vec<VertexId>,
    pub times: Vec<f64>,
    pub speculative_since: Option<f64>,
}

/// Every node an epoch search put on its open list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub epoch: usize,
    pub nodes: Vec<TraceNode>,
}

struct Entry {
    h: f64,
    leader: f64,
    total: f64,
    seq: usize,
    node: usize,
}

impl Entry {
    fn rank(&self, other: &Self, arena: &[Node]) -> Ordering {
        self.h
            .total_cmp(&other.h)
            .then(self.leader.total_cmp(&other.leader))
            .then(self.total.total_cmp(&other.total))
            .then_with(|| arena[self.node].state.positions.cmp(&arena[other.node].state.positions))
            .then(self.seq.cmp(&other.seq))
    }
}

struct Node {
    state: CompositeState,
    parent: Option<usize>,
    /// Time the agents spent moving since the epoch began.
    moved: f64,
}

/// Search priority. A fleet is ranked by the heuristic value alone. A lone
/// agent is ranked by time moved plus cost-to-go, which makes its search exact.
fn priority(field: &HeuristicField, state: &CompositeState, moved: f64) -> f64 {
    match (state.positions.as_slice(), field.cost(0, state.positions[0])) {
        ([_], Some(c)) => moved + c,
        ([v], None) => moved + field.term(0, *v),
        _ => heuristic_value(field, &state.positions),
    }
}

fn is_terminal(s: &CompositeState, leader: usize, goal: VertexId, prev_visit: f64) -> bool {
    s.positions[leader] == goal && s.speculative_since.is_none() && s.times[leader] >= prev_visit - COST_EPS
}

/// Greedy best-first search for one epoch.
///
/// Ends at the first popped state with the leader on the goal, communication
/// intact and the leader's clock no earlier than the previous goal's visit.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch_search(
    graph: &WeightedGraph,
    comm: &CommConfig,
    initial: CompositeState,
    epoch: &EpochRecord,
    prev_visit: f64,
    field: &HeuristicField,
    params: &Stage2Params,
    deadline: &Deadline,
    mut trace: Option<&mut SearchTrace>,
) -> Result<PlanSegment, Stage2Failure> {
    let leader = epoch.leader;
    let goal = epoch.goal;
    let mut arena: Vec<Node> = Vec::new();
    // earliest quantized minimum clock seen per key
    let mut seen: FxHashMap<Vec<i64>, i64> = FxHashMap::default();
    let mut open: Vec<Entry> = Vec::new();
    let mut heap = IndexHeap::default();
    let mut seq = 0usize;
    let mut push = |state: CompositeState,
                    parent: Option<usize>,
                    arena: &mut Vec<Node>,
                    heap: &mut IndexHeap,
                    open: &mut Vec<Entry>,
                    trace: &mut Option<&mut SearchTrace>| {
        let at = quantize(state.min_time());
        match seen.entry(state.key()) {
            MapEntry::Occupied(mut e) => {
                if *e.get() <= at {
                    return;
                }
                e.insert(at);
            }
            MapEntry::Vacant(e) => {
                e.insert(at);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.nodes.push(TraceNode {
                positions: state.positions.clone(),
                times: state.times.clone(),
                speculative_since: state.speculative_since,
            });
        }
        let moved = parent.map_or(0.0, |p| {
            let before = &arena[p];
            let stepped = before.state.positions != state.positions;
            before.moved + if stepped { state.times[0] - before.state.times[0] } else { 0.0 }
        });
        let entry = Entry {
            h: priority(field, &state, moved),
            leader: field.term(leader, state.positions[leader]),
            total: state.times.iter().sum(),
            seq,
            node: arena.len(),
        };
        seq += 1;
        arena.push(Node { state, parent, moved });
        open.push(entry);
        heap.push(open.len() - 1, open, arena);
    };
    push(initial, None, &mut arena, &mut heap, &mut open, &mut trace);
    let mut expansions = 0usize;
    while let Some(slot) = heap.pop(&open, &arena) {
        let idx = open[slot].node;
        if is_terminal(&arena[idx].state, leader, goal, prev_visit) {
            let end = arena[idx].state.clone();
            let visit_time = end.arrived[leader].max(prev_visit);
            let actions = reconstruct(&arena, idx);
            return Ok(PlanSegment {
                actions,
                end,
                visit_time,
                expansions,
            });
        }
        expansions += 1;
        if expansions > params.node_budget {
            return Err(Stage2Failure::Budget(params.node_budget));
        }
        if expansions % 1024 == 0 && deadline.expired() {
            return Err(Stage2Failure::Timeout);
        }
        for child in expand(&arena[idx].state, graph, comm) {
            push(child, Some(idx), &mut arena, &mut heap, &mut open, &mut trace);
        }
    }
    Err(Stage2Failure::Exhausted)
}

/// Binary min-heap of indices into the entry list, ranked by [`Entry::rank`].
#[derive(Default)]
struct IndexHeap {
    items: Vec<usize>,
}

impl IndexHeap {
    fn less(&self, a: usize, b: usize, open: &[Entry], arena: &[Node]) -> bool {
        open[self.items[a]].rank(&open[self.items[b]], arena) == Ordering::Less
    }

    fn push(&mut self, slot: usize, open: &[Entry], arena: &[Node]) {
        self.items.push(slot);
        let mut i = self.items.len() - 1;
        while i > 0 {
            let p = (i - 1) / 2;
            if !self.less(i, p, open, arena) {
                break;
            }
            self.items.swap(i, p);
            i = p;
        }
    }

    fn pop(&mut self, open: &[Entry], arena: &[Node]) -> Option<usize> {
        if self.items.is_empty() {
            return None;
        }
        let top = self.items.swap_remove(0);
        let n = self.items.len();
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut m = i;
            if l < n && self.less(l, m, open, arena) {
                m = l;
            }
            if r < n && self.less(r, m, open, arena) {
                m = r;
            }
            if m == i {
                break;
            }
            self.items.swap(i, m);
            i = m;
        }
        Some(top)
    }
}

/// Per-agent actions along the parent chain ending at `idx`. Consecutive
/// waits of an agent are merged.
fn reconstruct(arena: &[Node], idx: usize) -> Vec<Vec<TimedAction>> {
    let mut chain = vec![idx];
    while let Some(p) = arena[*chain.last().expect("non-empty")].parent {
        chain.push(p);
    }
    chain.reverse();
    let n = arena[idx].state.positions.len();
    let mut actions: Vec<Vec<TimedAction>> = vec![Vec::new(); n];
    for pair in chain.windows(2) {
        let (a, b) = (&arena[pair[0]].state, &arena[pair[1]].state);
        for agent in 0..n {
            let (from, to) = (a.positions[agent], b.positions[agent]);
            let (t0, t1) = (a.times[agent], b.times[agent]);
            if from != to {
                actions[agent].push(TimedAction::travel(from, to, t0, t1));
            } else if t1 > t0 + COST_EPS {
                match actions[agent].last_mut() {
                    Some(last) if last.kind == ActionKind::Wait && (last.arrive - t0).abs() <= COST_EPS => {
                        last.arrive = t1;
                    }
                    _ => actions[agent].push(TimedAction::wait(from, t0, t1)),
                }
            }
        }
    }
    actions
}

/// Chains epoch searches into a full plan.
pub fn run_stage2(
    scenario: &Scenario,
    stage1: &Stage1Output,
    params: &Stage2Params,
    deadline: &Deadline,
    timings: &mut StepTimings,
    mut traces: Option<&mut Vec<SearchTrace>>,
) -> Result<Plan, Stage2Error> {
    let graph = &*scenario.graph;
    let reverse = reverse_graph(graph);
    let n = scenario.agent_count();
    let mut plan = Plan::new(n);
    let mut state = CompositeState::initial(&scenario.starts);
    let mut prev_visit = 0.0;
    for (epoch, record) in stage1.epochs.iter().enumerate() {
        let field = timed(&mut timings.heuristic_build, || {
            build_heuristic(&reverse, record, scenario.alpha)
        });
        let mut trace = traces.as_ref().map(|_| SearchTrace {
            epoch,
            nodes: Vec::new(),
        });
        let segment = timed(&mut timings.stage2_search, || {
            run_epoch_search(
                graph,
                &scenario.comm,
                state.clone(),
                record,
                prev_visit,
                &field,
                params,
                deadline,
                trace.as_mut(),
            )
        })
        .map_err(|failure| Stage2Error { epoch, failure })?;
        if let (Some(all), Some(t)) = (traces.as_deref_mut(), trace) {
            all.push(t);
        }
        for (agent, acts) in segment.actions.into_iter().enumerate() {
            for a in acts {
                match plan.agents[agent].last_mut() {
                    Some(last)
                        if a.kind == ActionKind::Wait
                            && last.kind == ActionKind::Wait
                            && (last.arrive - a.depart).abs() <= COST_EPS =>
                    {
                        last.arrive = a.arrive;
                    }
                    _ => plan.agents[agent].push(a),
                }
            }
        }
        prev_visit = segment.visit_time;
        state = segment.end;
    }
    Ok(plan)
}
