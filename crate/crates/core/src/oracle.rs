//! Exhaustive reference solver for tiny instances.
//!
//! Uniform-cost search over the joint state of every agent, using the same
//! action model as the second stage (lowest clock acts, moves into occupied
//! vertices are forbidden, a broken link must be repaired at the instant it
//! broke). Goals are credited as soon as some agent is settled on them, so the
//! first complete connected state popped has the minimal makespan.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::comms::fleet_connected;
use crate::graph::{multi_source_dijkstra, Coord, VertexId, COST_EPS};
use crate::plan::{ActionKind, Plan, TimedAction};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_vertices: usize,
    pub max_agents: usize,
    pub max_state_budget: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_vertices: 100,
            max_agents: 3,
            max_state_budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("state budget of {0} exceeded")]
    BudgetExceeded(usize),
    #[error("no plan exists within budget")]
    NoPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub plan: Plan,
    pub makespan: f64,
    pub expanded: usize,
}

#[derive(Debug, Clone)]
struct Joint {
    at: Vec<VertexId>,
    clock: Vec<f64>,
    passed: Vec<bool>,
    broken_at: Option<f64>,
    /// Arrival time of each agent's latest move.
    since: Vec<f64>,
    /// Goals credited so far and the time the last one was credited.
    done: usize,
    last_visit: f64,
}

impl Joint {
    fn earliest(&self) -> f64 {
        self.clock.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn q(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

struct Search<'a> {
    scenario: &'a Scenario,
    coords: &'a [Coord],
}

impl Search<'_> {
    fn connected(&self, at: &[VertexId]) -> bool {
        let pts: Vec<Coord> = at.iter().map(|v| self.coords[v.index()]).collect();
        fleet_connected(&self.scenario.comm, &pts)
    }

    /// Credits every goal that some agent is already settled on for good.
    fn credit(&self, s: &mut Joint) {
        let goals = &self.scenario.goals;
        while s.done < goals.len() {
            let g = goals[s.done];
            let Some(a) = s.at.iter().position(|&v| v == g) else { break };
            let visit = s.since[a].max(s.last_visit);
            // the agent stays until at least its clock, so the stay is certain only up to there
            if visit > s.clock[a] + COST_EPS {
                break;
            }
            s.done += 1;
            s.last_visit = visit;
        }
    }

    fn key(&self, s: &Joint) -> Vec<i64> {
        let remaining = &self.scenario.goals[s.done..];
        let mut k = Vec::with_capacity(s.at.len() * 4 + 4);
        for a in 0..s.at.len() {
            k.push(i64::from(s.at[a].0));
            k.push(q(s.clock[a]));
            k.push(i64::from(s.passed[a]));
            // settling time only matters where a goal may still be credited
            k.push(if remaining.contains(&s.at[a]) { q(s.since[a].max(s.last_visit)) } else { -1 });
        }
        k.push(s.broken_at.map_or(-1, q));
        k.push(s.done as i64);
        k.push(q(s.last_visit));
        k
    }

    /// Bound on the makespan of anything reachable from `s`.
    fn priority(&self, s: &Joint) -> f64 {
        if s.done == self.scenario.goals.len() {
            s.last_visit
        } else {
            s.earliest()
        }
    }

    fn settle(&self, mut s: Joint, acted_at: f64) -> Option<Joint> {
        // advance a fully passed tie group to the next clock
        let t = s.earliest();
        let group: Vec<usize> = (0..s.clock.len()).filter(|&a| s.clock[a] <= t + COST_EPS).collect();
        if group.iter().all(|&a| s.passed[a]) {
            let next = s.clock.iter().copied().filter(|&c| c > t + COST_EPS).fold(f64::INFINITY, f64::min);
            if !next.is_finite() {
                return None;
            }
            for a in group {
                s.clock[a] = next;
                s.passed[a] = false;
            }
        }
        if self.connected(&s.at) {
            s.broken_at = None;
        } else {
            let stamp = *s.broken_at.get_or_insert(acted_at);
            if s.earliest() > stamp + COST_EPS {
                return None;
            }
        }
        self.credit(&mut s);
        Some(s)
    }

    fn successors(&self, s: &Joint) -> Vec<Joint> {
        let t = s.earliest();
        let Some(agent) = (0..s.clock.len()).find(|&a| s.clock[a] <= t + COST_EPS && !s.passed[a]) else {
            return Vec::new();
        };
        let now = s.clock[agent];
        let mut out = Vec::new();
        for e in self.scenario.graph.out_edges(s.at[agent]) {
            if s.at.contains(&e.target) {
                continue;
            }
            let mut c = s.clone();
            c.at[agent] = e.target;
            c.clock[agent] = now + e.weight;
            c.since[agent] = now + e.weight;
            c.passed[agent] = false;
            out.extend(self.settle(c, now));
        }
        let mut w = s.clone();
        w.passed[agent] = true;
        out.extend(self.settle(w, now));
        out
    }
}

/// Minimal-makespan plan by uniform-cost search over joint states.
pub fn optimal_plan(scenario: &Scenario, limits: &OracleLimits) -> Result<OracleResult, OracleError> {
    let graph = &scenario.graph;
    if graph.vertex_count() > limits.max_vertices {
        return Err(OracleError::TooLarge(format!(
            "{} vertices, limit {}",
            graph.vertex_count(),
            limits.max_vertices
        )));
    }
    if scenario.agent_count() > limits.max_agents {
        return Err(OracleError::TooLarge(format!(
            "{} agents, limit {}",
            scenario.agent_count(),
            limits.max_agents
        )));
    }
    let search = Search {
        scenario,
        coords: graph.coords(),
    };
    let sources: Vec<(VertexId, f64)> = scenario.starts.iter().map(|&v| (v, 0.0)).collect();
    let reach = multi_source_dijkstra(graph, &sources, |_, _| false, |_| true).map_err(|_| OracleError::NoPlan)?;
    if scenario.goals.iter().any(|g| reach.get(*g).is_none()) {
        return Err(OracleError::NoPlan);
    }
    let n = scenario.agent_count();
    let mut root = Joint {
        at: scenario.starts.clone(),
        clock: vec![0.0; n],
        passed: vec![false; n],
        broken_at: None,
        since: vec![0.0; n],
        done: 0,
        last_visit: 0.0,
    };
    if !search.connected(&root.at) {
        return Err(OracleError::NoPlan);
    }
    search.credit(&mut root);
    let mut states: Vec<(Joint, Option<usize>)> = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut heap: BinaryHeap<Reverse<(i64, usize)>> = BinaryHeap::new();
    seen.insert(search.key(&root));
    heap.push(Reverse((q(search.priority(&root)), 0)));
    states.push((root, None));
    let mut expanded = 0usize;
    while let Some(Reverse((_, idx))) = heap.pop() {
        let s = &states[idx].0;
        if s.done == scenario.goals.len() && s.broken_at.is_none() {
            let makespan = s.last_visit;
            return Ok(OracleResult {
                plan: rebuild(&states, idx),
                makespan,
                expanded,
            });
        }
        expanded += 1;
        if expanded > limits.max_state_budget {
            return Err(OracleError::BudgetExceeded(limits.max_state_budget));
        }
        for child in search.successors(s) {
            if seen.insert(search.key(&child)) {
                let k = states.len();
                heap.push(Reverse((q(search.priority(&child)), k)));
                states.push((child, Some(idx)));
            }
        }
    }
    Err(OracleError::NoPlan)
}

fn rebuild(states: &[(Joint, Option<usize>)], last: usize) -> Plan {
    let mut chain = vec![last];
    while let Some(p) = states[*chain.last().expect("non-empty")].1 {
        chain.push(p);
    }
    chain.reverse();
    let n = states[last].0.at.len();
    let mut plan = Plan::new(n);
    for w in chain.windows(2) {
        let (a, b) = (&states[w[0]].0, &states[w[1]].0);
        for agent in 0..n {
            let acts = &mut plan.agents[agent];
            if a.at[agent] != b.at[agent] {
                acts.push(TimedAction::travel(a.at[agent], b.at[agent], a.clock[agent], b.clock[agent]));
            } else if b.clock[agent] > a.clock[agent] + COST_EPS {
                match acts.last_mut() {
                    Some(prev) if prev.kind == ActionKind::Wait => prev.arrive = b.clock[agent],
                    _ => acts.push(TimedAction::wait(a.at[agent], a.clock[agent], b.clock[agent])),
                }
            }
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::CommConfig;
    use crate::graph::{distance, WeightedGraph};
    use crate::map_io::{build_graph, CellIndex, GridMap};
    use crate::plan::validate_plan;
    use std::sync::Arc;

    fn grid(w: usize, h: usize) -> (WeightedGraph, CellIndex) {
        build_graph(&GridMap::open(w, h)).unwrap()
    }

    fn scenario(g: WeightedGraph, starts: Vec<VertexId>, goals: Vec<VertexId>, limit: f64) -> Scenario {
        let comm = if limit.is_finite() { CommConfig::euclidean(limit) } else { CommConfig::unlimited() };
        Scenario::new(Arc::new(g), starts, goals, comm, 1.5).unwrap()
    }

    #[test]
    fn corridor_single_agent() {
        let (g, idx) = grid(5, 1);
        let at = |c| idx.vertex(c, 0).unwrap();
        let s = scenario(g, vec![at(0)], vec![at(4)], 1.0);
        let r = optimal_plan(&s, &OracleLimits::default()).unwrap();
        assert!((r.makespan - 4.0).abs() < 1e-9);
        assert!(validate_plan(&s, &r.plan).ok);
    }

    #[test]
    fn unconstrained_pair_sends_the_nearer_agent() {
        let (g, idx) = grid(7, 7);
        let v = |c, r| idx.vertex(c, r).unwrap();
        for (a, b, goal) in [((0, 0), (6, 6), (5, 4)), ((3, 3), (0, 6), (0, 0)), ((1, 5), (2, 5), (6, 0))] {
            let (a, b, goal) = (v(a.0, a.1), v(b.0, b.1), v(goal.0, goal.1));
            let s = scenario(g.clone(), vec![a, b], vec![goal], f64::INFINITY);
            let r = optimal_plan(&s, &OracleLimits::default()).unwrap();
            let want = distance(&g, a, goal).unwrap().min(distance(&g, b, goal).unwrap());
            assert!((r.makespan - want).abs() < 1e-9, "{} vs {want}", r.makespan);
            assert!(validate_plan(&s, &r.plan).ok);
        }
    }

    #[test]
    fn single_agent_tour_matches_dijkstra() {
        let mut m = GridMap::open(6, 6);
        m.set(2, 1, false);
        m.set(2, 2, false);
        m.set(2, 3, false);
        let (g, idx) = build_graph(&m).unwrap();
        let v = |c, r| idx.vertex(c, r).unwrap();
        let goals = vec![v(4, 2), v(0, 3), v(5, 5)];
        let s = scenario(g.clone(), vec![v(0, 0)], goals.clone(), f64::INFINITY);
        let r = optimal_plan(&s, &OracleLimits::default()).unwrap();
        let mut want = 0.0;
        let mut at = v(0, 0);
        for &goal in &goals {
            want += distance(&g, at, goal).unwrap();
            at = goal;
        }
        assert!((r.makespan - want).abs() < 1e-9);
    }

    #[test]
    fn constrained_pair_on_open_grid() {
        let (g, idx) = grid(6, 6);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g.clone(), vec![v(0, 0), v(1, 0)], vec![v(5, 5), v(0, 5)], 2.5);
        let r = optimal_plan(&s, &OracleLimits::default()).unwrap();
        let report = validate_plan(&s, &r.plan);
        assert!(report.ok, "{:?}", report.violations);
        assert!((report.makespan.unwrap() - r.makespan).abs() < 1e-9);
        // never better than the unconstrained optimum
        let free = scenario(g, vec![v(0, 0), v(1, 0)], vec![v(5, 5), v(0, 5)], f64::INFINITY);
        let loose = optimal_plan(&free, &OracleLimits::default()).unwrap();
        assert!(loose.makespan <= r.makespan + 1e-9);
    }

    #[test]
    fn tight_range_forces_a_detour_or_wait() {
        // agents must stay adjacent; the follower trails the leader
        let (g, idx) = grid(6, 2);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(0, 0), v(0, 1)], vec![v(5, 0)], 1.0);
        let r = optimal_plan(&s, &OracleLimits::default()).unwrap();
        assert!((r.makespan - 5.0).abs() < 1e-9);
        assert!(validate_plan(&s, &r.plan).ok);
    }

    #[test]
    fn limits_are_enforced() {
        let (g, idx) = grid(12, 12);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(0, 0)], vec![v(5, 5)], 2.0);
        assert!(matches!(optimal_plan(&s, &OracleLimits::default()), Err(OracleError::TooLarge(_))));
        let (g, idx) = grid(8, 8);
        let v = |c, r| idx.vertex(c, r).unwrap();
        let s = scenario(g, vec![v(0, 0), v(1, 0)], vec![v(7, 7)], 1.5);
        let tiny = OracleLimits {
            max_state_budget: 5,
            ..OracleLimits::default()
        };
        assert_eq!(optimal_plan(&s, &tiny), Err(OracleError::BudgetExceeded(5)));
    }

    #[test]
    fn unreachable_goal_has_no_plan() {
        let mut m = GridMap::open(5, 1);
        m.set(2, 0, false);
        let (g, idx) = build_graph(&m).unwrap();
        let at = |c| idx.vertex(c, 0).unwrap();
        let s = scenario(g, vec![at(0)], vec![at(4)], 1.0);
        assert_eq!(optimal_plan(&s, &OracleLimits::default()), Err(OracleError::NoPlan));
    }
}
