//! Plan data model and an independent plan validator.
//!
//! The validator re-derives every constraint from the scenario and the raw
//! action lists. It deliberately shares nothing with the planning stages.
//!
//! Timing semantics: a moving agent occupies its target vertex from the moment
//! it departs, so positions are piecewise constant and change only at action
//! boundaries. An agent *visits* a vertex while it is settled there, i.e. from
//! the arrival of the move onto it until the departure of its next move.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::comms::{components, fleet_connected};
use crate::graph::{Coord, VertexId, COST_EPS};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Move,
    Wait,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Move => "move",
            ActionKind::Wait => "wait",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedAction {
    pub kind: ActionKind,
    pub from: VertexId,
    pub to: VertexId,
    pub depart: f64,
    pub arrive: f64,
}

impl TimedAction {
    pub fn travel(from: VertexId, to: VertexId, depart: f64, arrive: f64) -> Self {
        TimedAction {
            kind: ActionKind::Move,
            from,
            to,
            depart,
            arrive,
        }
    }

    pub fn wait(at: VertexId, depart: f64, arrive: f64) -> Self {
        TimedAction {
            kind: ActionKind::Wait,
            from: at,
            to: at,
            depart,
            arrive,
        }
    }

    pub fn duration(&self) -> f64 {
        self.arrive - self.depart
    }
}

/// One ordered action list per agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    pub agents: Vec<Vec<TimedAction>>,
}

impl Plan {
    pub fn new(agent_count: usize) -> Self {
        Plan {
            agents: vec![Vec::new(); agent_count],
        }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// Time at which the last action of any agent ends.
    pub fn end_time(&self) -> f64 {
        self.agents
            .iter()
            .filter_map(|a| a.last())
            .map(|a| a.arrive)
            .fold(0.0, f64::max)
    }

    /// Vertex occupied by `agent` at time `t` (departures at `t` already applied).
    pub fn position_at(&self, agent: usize, start: VertexId, t: f64) -> VertexId {
        self.agents[agent]
            .iter()
            .take_while(|a| a.depart <= t + COST_EPS)
            .last()
            .map_or(start, |a| a.to)
    }

    pub fn action_count(&self) -> usize {
        self.agents.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    Collision,
    Communication,
    GoalOrder,
    Continuity,
    EdgeExistence,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Collision => "collision",
            ViolationKind::Communication => "communication",
            ViolationKind::GoalOrder => "goal-order",
            ViolationKind::Continuity => "continuity",
            ViolationKind::EdgeExistence => "edge-existence",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    pub kind: ViolationKind,
    pub agents: Vec<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {} agents={:?}: {}", self.time, self.kind, self.agents, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub makespan: Option<f64>,
    pub goal_visit_times: Vec<f64>,
}

impl ValidationReport {
    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("goal {index} ({vertex}) is never visited in order")]
    GoalNotVisited { index: usize, vertex: VertexId },
    #[error("plan has {plan} agents, scenario has {scenario}")]
    AgentCountMismatch { plan: usize, scenario: usize },
}

/// Closed intervals during which an agent is settled on a vertex.
fn settled_intervals(start: VertexId, actions: &[TimedAction]) -> Vec<(VertexId, f64, f64)> {
    let mut out = Vec::new();
    let (mut at, mut since) = (start, 0.0);
    for a in actions {
        if a.kind == ActionKind::Move {
            out.push((at, since, a.depart));
            at = a.to;
            since = a.arrive;
        }
    }
    out.push((at, since, f64::INFINITY));
    out
}

/// Earliest visit time of every goal, each no earlier than its predecessor's.
pub fn goal_visit_times(scenario: &Scenario, plan: &Plan) -> Result<Vec<f64>, PlanError> {
    if plan.agent_count() != scenario.agent_count() {
        return Err(PlanError::AgentCountMismatch {
            plan: plan.agent_count(),
            scenario: scenario.agent_count(),
        });
    }
    let settled: Vec<_> = scenario
        .starts
        .iter()
        .zip(&plan.agents)
        .flat_map(|(&s, acts)| settled_intervals(s, acts))
        .collect();
    let mut times = Vec::with_capacity(scenario.goal_count());
    let mut prev = 0.0;
    for (index, &goal) in scenario.goals.iter().enumerate() {
        let visit = settled
            .iter()
            .filter(|(v, _, end)| *v == goal && *end >= prev - COST_EPS)
            .map(|&(_, begin, _)| f64::max(begin, prev))
            .min_by(f64::total_cmp)
            .ok_or(PlanError::GoalNotVisited { index, vertex: goal })?;
        times.push(visit);
        prev = visit;
    }
    Ok(times)
}

/// Time at which the final goal is visited. Motion after that is not counted.
pub fn makespan(scenario: &Scenario, plan: &Plan) -> Result<f64, PlanError> {
    Ok(goal_visit_times(scenario, plan)?.last().copied().unwrap_or(0.0))
}

/// Half-open occupancy intervals `[begin, end)`; the final one is unbounded.
fn occupancy(start: VertexId, actions: &[TimedAction]) -> Vec<(VertexId, f64, f64)> {
    let mut out = Vec::new();
    let first_depart = actions.first().map_or(f64::INFINITY, |a| a.depart);
    out.push((start, 0.0, first_depart));
    for (k, a) in actions.iter().enumerate() {
        let end = actions.get(k + 1).map_or(f64::INFINITY, |n| n.depart.max(a.arrive));
        out.push((a.to, a.depart, end));
    }
    out
}

/// Re-checks every problem constraint and reports all violations found.
pub fn validate_plan(scenario: &Scenario, plan: &Plan) -> ValidationReport {
    let mut violations = Vec::new();
    let graph = &scenario.graph;
    if plan.agent_count() != scenario.agent_count() {
        violations.push(Violation {
            time: 0.0,
            kind: ViolationKind::Continuity,
            agents: Vec::new(),
            detail: format!(
                "plan has {} agents, scenario has {}",
                plan.agent_count(),
                scenario.agent_count()
            ),
        });
        return ValidationReport {
            ok: false,
            violations,
            makespan: None,
            goal_visit_times: Vec::new(),
        };
    }

    // continuity and edge existence
    for (agent, actions) in plan.agents.iter().enumerate() {
        let mut at = scenario.starts[agent];
        let mut clock = 0.0;
        for a in actions {
            let bad = |detail: String| Violation {
                time: a.depart,
                kind: ViolationKind::Continuity,
                agents: vec![agent],
                detail,
            };
            if !graph.contains(a.from) || !graph.contains(a.to) {
                violations.push(Violation {
                    time: a.depart,
                    kind: ViolationKind::EdgeExistence,
                    agents: vec![agent],
                    detail: format!("unknown vertex in {} {}->{}", a.kind, a.from, a.to),
                });
                return ValidationReport {
                    ok: false,
                    violations,
                    makespan: None,
                    goal_visit_times: Vec::new(),
                };
            }
            if a.from != at {
                violations.push(bad(format!("departs from {} but agent is at {}", a.from, at)));
            }
            if (a.depart - clock).abs() > COST_EPS {
                violations.push(bad(format!("departs at {} but previous action ended at {}", a.depart, clock)));
            }
            if a.arrive < a.depart - COST_EPS {
                violations.push(bad(format!("arrives at {} before departing at {}", a.arrive, a.depart)));
            }
            match a.kind {
                ActionKind::Wait if a.to != a.from => {
                    violations.push(bad(format!("wait changes vertex {}->{}", a.from, a.to)));
                }
                ActionKind::Move => match graph.edge_weight(a.from, a.to) {
                    None => violations.push(Violation {
                        time: a.depart,
                        kind: ViolationKind::EdgeExistence,
                        agents: vec![agent],
                        detail: format!("no edge {}->{}", a.from, a.to),
                    }),
                    Some(w) if (a.duration() - w).abs() > COST_EPS => violations.push(Violation {
                        time: a.depart,
                        kind: ViolationKind::Continuity,
                        agents: vec![agent],
                        detail: format!("move {}->{} takes {} but edge weight is {}", a.from, a.to, a.duration(), w),
                    }),
                    Some(_) => {}
                },
                ActionKind::Wait => {}
            }
            at = a.to;
            clock = a.arrive;
        }
    }

    // vertex collisions
    let mut by_vertex: BTreeMap<VertexId, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for (agent, actions) in plan.agents.iter().enumerate() {
        for (v, b, e) in occupancy(scenario.starts[agent], actions) {
            if e - b > COST_EPS {
                by_vertex.entry(v).or_default().push((b, e, agent));
            }
        }
    }
    for (v, mut spans) in by_vertex {
        spans.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
        for i in 0..spans.len() {
            for j in i + 1..spans.len() {
                let ((b1, e1, a1), (b2, e2, a2)) = (spans[i], spans[j]);
                if b2 >= e1 - COST_EPS {
                    continue;
                }
                if a1 != a2 && b1 < e2 - COST_EPS {
                    violations.push(Violation {
                        time: b1.max(b2),
                        kind: ViolationKind::Collision,
                        agents: vec![a1.min(a2), a1.max(a2)],
                        detail: format!("both occupy {v}"),
                    });
                }
            }
        }
    }

    // communication at every event time
    let mut events: Vec<f64> = std::iter::once(0.0)
        .chain(plan.agents.iter().flatten().flat_map(|a| [a.depart, a.arrive]))
        .collect();
    events.sort_by(f64::total_cmp);
    events.dedup_by(|a, b| (*a - *b).abs() <= COST_EPS);
    for &t in &events {
        let coords: Vec<Coord> = (0..plan.agent_count())
            .map(|i| graph.coord(plan.position_at(i, scenario.starts[i], t)))
            .collect();
        if !fleet_connected(&scenario.comm, &coords) {
            let parts = components(&scenario.comm, &coords);
            let agents = parts.iter().skip(1).flatten().copied().collect();
            violations.push(Violation {
                time: t,
                kind: ViolationKind::Communication,
                agents,
                detail: format!("fleet split into {} groups {:?}", parts.len(), parts),
            });
        }
    }

    // goal order
    let (goal_visit_times, makespan) = match goal_visit_times(scenario, plan) {
        Ok(times) => {
            let m = times.last().copied();
            (times, m)
        }
        Err(e) => {
            violations.push(Violation {
                time: plan.end_time(),
                kind: ViolationKind::GoalOrder,
                agents: Vec::new(),
                detail: e.to_string(),
            });
            (Vec::new(), None)
        }
    };

    ValidationReport {
        ok: violations.is_empty(),
        violations,
        makespan,
        goal_visit_times,
    }
}
