//! File formats: scenario documents (TOML), plans and first-stage dumps (JSON).
//!
//! A scenario file looks like
//!
//! ```toml
//! map = "maps/open16.map"   # relative to the scenario file
//! scale = 1.0
//! lambda = 4.0              # `inf` disables the constraint
//! alpha = 1.5
//! agents = 3
//! seed = 7
//! start_center = [1, 1]     # or `starts = [[0, 0], [1, 0], [0, 1]]`
//! goals = [[12, 3], [4, 14]]
//! order_goals = false       # reorder goals with the tour heuristic
//! ```
//!
//! Cells are `[col, row]` pairs everywhere.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::CommConfig;
use crate::graph::VertexId;
use crate::map_io::{build_graph, parse_movingai, scale_map, CellIndex, GridMap, MapError};
use crate::plan::{ActionKind, Plan, TimedAction};
use crate::scenario::{order_goals_tsp, random_starts, Scenario, ScenarioError, DEFAULT_ALPHA};
use crate::stage1::Stage1Output;

pub type Cell = [usize; 2];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("map {path}: {source}")]
    Map { path: PathBuf, source: MapError },
    #[error("cell [{}, {}] is not a passable cell of the map", .0[0], .0[1])]
    UnknownCell(Cell),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl IoError {
    pub fn category(&self) -> &'static str {
        match self {
            IoError::Read { .. } | IoError::Write { .. } => "io error",
            IoError::Parse(_) | IoError::Map { .. } | IoError::UnknownCell(_) => "parse error",
            IoError::Scenario(e) => e.category(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn default_scale() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// The on-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub map: PathBuf,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_center: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<Vec<Cell>>,
    pub goals: Vec<Cell>,
    #[serde(default)]
    pub order_goals: bool,
}

/// A scenario together with the grid it was built from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub spec: ScenarioSpec,
    pub grid: GridMap,
    pub cells: CellIndex,
    pub scenario: Scenario,
}

impl LoadedScenario {
    pub fn vertex(&self, cell: Cell) -> Result<VertexId, IoError> {
        self.cells.vertex(cell[0], cell[1]).ok_or(IoError::UnknownCell(cell))
    }

    pub fn cell(&self, v: VertexId) -> Cell {
        let (c, r) = self.cells.cell(v);
        [c, r]
    }
}

impl ScenarioSpec {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario specs always serialize")
    }

    /// Builds the instance on an already scaled grid.
    pub fn build(&self, grid: GridMap) -> Result<LoadedScenario, IoError> {
        let (graph, cells) = build_graph(&grid).map_err(|source| IoError::Map {
            path: self.map.clone(),
            source,
        })?;
        let graph = Arc::new(graph);
        if !(self.lambda > 0.0) {
            return Err(ScenarioError::Structure(format!("lambda must be positive, got {}", self.lambda)).into());
        }
        let comm = CommConfig::euclidean(self.lambda);
        let at = |cell: Cell| cells.vertex(cell[0], cell[1]).ok_or(IoError::UnknownCell(cell));
        let mut goals = self.goals.iter().map(|&c| at(c)).collect::<Result<Vec<_>, _>>()?;
        let starts = match (&self.starts, self.start_center) {
            (Some(list), None) => {
                if self.agents.is_some_and(|n| n != list.len()) {
                    return Err(ScenarioError::Structure(format!(
                        "agents = {} but {} starts listed",
                        self.agents.unwrap_or_default(),
                        list.len()
                    ))
                    .into());
                }
                list.iter().map(|&c| at(c)).collect::<Result<Vec<_>, _>>()?
            }
            (None, Some(center)) => {
                let n = self
                    .agents
                    .ok_or_else(|| ScenarioError::Structure("start_center requires agents".into()))?;
                random_starts(&graph, &comm, at(center)?, n, self.seed)?
            }
            _ => {
                return Err(
                    ScenarioError::Structure("exactly one of starts and start_center is required".into()).into()
                )
            }
        };
        if self.order_goals && !goals.is_empty() {
            let depot = match self.start_center {
                Some(c) => at(c)?,
                None => *starts.first().ok_or_else(|| ScenarioError::Structure("no agents".into()))?,
            };
            goals = order_goals_tsp(&graph, depot, &goals)?;
        }
        let scenario = Scenario::new(graph, starts, goals, comm, self.alpha)?;
        Ok(LoadedScenario {
            spec: self.clone(),
            grid,
            cells,
            scenario,
        })
    }
}

/// Reads a map file and applies the scale factor.
pub fn load_map(path: &Path, scale: f64) -> Result<GridMap, IoError> {
    let text = read_text(path)?;
    let map_err = |source| IoError::Map {
        path: path.to_path_buf(),
        source,
    };
    let grid = parse_movingai(&text).map_err(map_err)?;
    if scale == 1.0 {
        Ok(grid)
    } else {
        scale_map(&grid, scale).map_err(map_err)
    }
}

/// Loads a scenario file; the map path is resolved against the file's directory.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, IoError> {
    let spec = ScenarioSpec::parse(&read_text(path)?)?;
    let map_path = path.parent().unwrap_or(Path::new(".")).join(&spec.map);
    let grid = load_map(&map_path, spec.scale)?;
    spec.build(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    pub kind: String,
    pub from: Cell,
    pub to: Cell,
    pub depart: f64,
    pub arrive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRecord {
    pub agent: usize,
    pub actions: Vec<ActionRecord>,
}

/// Serialized plan. Field order is fixed so identical plans give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub scenario_hash: String,
    pub makespan: Option<f64>,
    pub goal_visit_times: Vec<f64>,
    pub agents: Vec<AgentRecord>,
}

impl PlanDocument {
    pub fn new(loaded: &LoadedScenario, plan: &Plan, makespan: Option<f64>, goal_visit_times: Vec<f64>) -> Self {
        let agents = plan
            .agents
            .iter()
            .enumerate()
            .map(|(agent, acts)| AgentRecord {
                agent,
                actions: acts
                    .iter()
                    .map(|a| ActionRecord {
                        kind: a.kind.to_string(),
                        from: loaded.cell(a.from),
                        to: loaded.cell(a.to),
                        depart: a.depart,
                        arrive: a.arrive,
                    })
                    .collect(),
            })
            .collect();
        PlanDocument {
            scenario_hash: loaded.scenario.fingerprint(),
            makespan,
            goal_visit_times,
            agents,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plans always serialize");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))
    }

    /// Maps cells back to vertices of `loaded`.
    pub fn to_plan(&self, loaded: &LoadedScenario) -> Result<Plan, IoError> {
        let mut plan = Plan::new(self.agents.len());
        for (slot, rec) in self.agents.iter().enumerate() {
            if rec.agent != slot {
                return Err(IoError::Parse(format!("agent records out of order at {slot}")));
            }
            for a in &rec.actions {
                let from = loaded.vertex(a.from)?;
                let to = loaded.vertex(a.to)?;
                let kind = match a.kind.as_str() {
                    "move" => ActionKind::Move,
                    "wait" => ActionKind::Wait,
                    other => return Err(IoError::Parse(format!("unknown action kind '{other}'"))),
                };
                plan.agents[slot].push(TimedAction {
                    kind,
                    from,
                    to,
                    depart: a.depart,
                    arrive: a.arrive,
                });
            }
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDump {
    pub agent: usize,
    pub init: Vec<Cell>,
    pub opened: Vec<Cell>,
    pub result: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDump {
    pub goal: Cell,
    pub leader: usize,
    pub leader_cost: f64,
    pub order: Vec<usize>,
    pub agents: Vec<AgentDump>,
}

/// Opened, result and initial cells of every agent in every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Dump {
    pub kind: String,
    pub scenario_hash: String,
    pub epochs: Vec<EpochDump>,
}

pub const STAGE1_KIND: &str = "stage1";

impl Stage1Dump {
    pub fn new(loaded: &LoadedScenario, output: &Stage1Output) -> Self {
        let epochs = output
            .epochs
            .iter()
            .map(|e| EpochDump {
                goal: loaded.cell(e.goal),
                leader: e.leader,
                leader_cost: e.leader_cost,
                order: e.order.clone(),
                agents: e
                    .searches
                    .iter()
                    .enumerate()
                    .map(|(agent, s)| AgentDump {
                        agent,
                        init: s.init_nodes.iter().map(|&(v, _)| loaded.cell(v)).collect(),
                        opened: s.opened().map(|(v, _)| loaded.cell(v)).collect(),
                        result: s.result_nodes().into_iter().map(|(v, _)| loaded.cell(v)).collect(),
                    })
                    .collect(),
            })
            .collect();
        Stage1Dump {
            kind: STAGE1_KIND.to_string(),
            scenario_hash: loaded.scenario.fingerprint(),
            epochs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dumps always serialize");
        s.push('\n');
        s
    }
}

/// Either artifact the renderer accepts.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Plan(PlanDocument),
    Stage1(Stage1Dump),
}

pub fn parse_artifact(text: &str) -> Result<Artifact, IoError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))?;
    let parse_err = |e: serde_json::Error| IoError::Parse(e.to_string());
    if value.get("kind").and_then(|k| k.as_str()) == Some(STAGE1_KIND) {
        serde_json::from_value(value).map(Artifact::Stage1).map_err(parse_err)
    } else {
        serde_json::from_value(value).map(Artifact::Plan).map_err(parse_err)
    }
}
