//! Benchmark suites: parameter grids, per-instance records and aggregates.
//!
//! ```toml
//! timeout = 30.0        # seconds per instance
//! workers = 2
//!
//! [[maps]]
//! map = "rooms30.map"
//! scales = [1.0]
//! start_center = [3, 3]
//! random_goals = 3      # or `goals = [[..], ..]`
//! agents = [1, 2, 4]
//! lambdas = [2.0, 4.0, 8.0]
//! seeds = [1, 2, 3]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{multi_source_dijkstra, VertexId};
use crate::io::{load_map, read_text, Cell, IoError, LoadedScenario, ScenarioSpec};
use crate::map_io::{build_graph, GridMap};
use crate::scenario::{order_goals_tsp, DEFAULT_ALPHA};
use crate::solver::{solve_timed, Solution, SolverConfig};
use crate::stage2::{Stage2Params, DEFAULT_NODE_BUDGET};
use crate::timing::StepTimings;

fn default_workers() -> usize {
    1
}

fn default_scales() -> Vec<f64> {
    vec![1.0]
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSet {
    pub map: PathBuf,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    pub start_center: Cell,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<Cell>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_goals: Option<usize>,
    /// Reorder goals with the tour heuristic before solving.
    #[serde(default = "default_true")]
    pub order_goals: bool,
    pub agents: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    /// Seconds per instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout: Option<f64>,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub maps: Vec<MapSet>,
}

impl BenchSuite {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), IoError> {
        let suite = Self::parse(&read_text(path)?)?;
        Ok((suite, path.parent().unwrap_or(Path::new(".")).to_path_buf()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub id: String,
    pub map: String,
    pub scale: f64,
    pub agents: usize,
    pub lambda: f64,
    pub seed: u64,
    pub goals: usize,
    pub outcome: Outcome,
    /// Error category for failures and timeouts.
    pub category: String,
    pub makespan: Option<f64>,
    /// Single-agent shortest tour from the start center through the goals.
    pub baseline: Option<f64>,
    pub steps: StepTimings,
    pub wall: Duration,
}

impl BenchRecord {
    /// Share of the measured step time spent in the first stage.
    pub fn stage1_fraction(&self) -> Option<f64> {
        let total = self.steps.total().as_secs_f64();
        (total > 0.0).then(|| self.steps.stage1().as_secs_f64() / total)
    }
}

/// A record plus the instance and solution behind it.
#[derive(Debug, Clone)]
pub struct InstanceRun {
    pub record: BenchRecord,
    pub loaded: Option<LoadedScenario>,
    pub solution: Option<Solution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub map: String,
    pub scale: f64,
    pub agents: usize,
    pub lambda: f64,
    pub runs: usize,
    pub successes: usize,
    pub failure_pct: f64,
    pub median_makespan: Option<f64>,
    pub median_baseline: Option<f64>,
    pub median_wall_ms: f64,
    pub median_stage1_fraction: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

struct Job {
    map_key: usize,
    spec: ScenarioSpec,
    id: String,
    map: String,
    scale: f64,
    seed: u64,
    agents: usize,
}

struct PreparedMap {
    grid: GridMap,
    goals: Result<Vec<Cell>, String>,
    baseline: Option<f64>,
}

fn draw_goals(grid: &GridMap, center: Cell, count: usize, seed: u64) -> Result<Vec<Cell>, String> {
    let (graph, cells) = build_graph(grid).map_err(|e| e.to_string())?;
    let c = cells
        .vertex(center[0], center[1])
        .ok_or_else(|| format!("start center {center:?} is blocked"))?;
    let reach = multi_source_dijkstra(&graph, &[(c, 0.0)], |_, _| false, |_| true).map_err(|e| e.to_string())?;
    let mut pool: Vec<VertexId> = reach.settled.iter().copied().filter(|&v| v != c).collect();
    if pool.len() < count {
        return Err(format!("only {} goal candidates", pool.len()));
    }
    pool.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    pool.shuffle(&mut rng);
    Ok(pool[..count]
        .iter()
        .map(|&v| {
            let (c, r) = cells.cell(v);
            [c, r]
        })
        .collect())
}

fn baseline_tour(grid: &GridMap, center: Cell, goals: &[Cell], order: bool) -> Option<f64> {
    let (graph, cells) = build_graph(grid).ok()?;
    let depot = cells.vertex(center[0], center[1])?;
    let mut gs: Vec<VertexId> = goals.iter().map(|g| cells.vertex(g[0], g[1])).collect::<Option<_>>()?;
    if order {
        gs = order_goals_tsp(&graph, depot, &gs).ok()?;
    }
    let mut at = depot;
    let mut total = 0.0;
    for g in gs {
        total += crate::graph::distance(&graph, at, g)?;
        at = g;
    }
    Some(total)
}

/// Expands the suite and runs every instance. Failures are recorded, never fatal.
///
/// Map paths are resolved against `base`.
pub fn run_suite(suite: &BenchSuite, base: &Path) -> Result<Vec<InstanceRun>, IoError> {
    let mut prepared: Vec<PreparedMap> = Vec::new();
    let mut prepared_index: BTreeMap<(usize, u64, u64), usize> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (set_no, set) in suite.maps.iter().enumerate() {
        let path = base.join(&set.map);
        for &scale in &set.scales {
            let grid = load_map(&path, scale)?;
            for &seed in &set.seeds {
                let goal_seed = if set.goals.is_some() { 0 } else { seed };
                let key = (set_no, scale.to_bits(), goal_seed);
                let map_key = *prepared_index.entry(key).or_insert_with(|| {
                    let goals = match (&set.goals, set.random_goals) {
                        (Some(g), _) => Ok(g.clone()),
                        (None, Some(k)) => draw_goals(&grid, set.start_center, k, seed),
                        (None, None) => Err("suite map needs goals or random_goals".to_string()),
                    };
                    let baseline = goals
                        .as_ref()
                        .ok()
                        .and_then(|g| baseline_tour(&grid, set.start_center, g, set.order_goals));
                    prepared.push(PreparedMap {
                        grid: grid.clone(),
                        goals,
                        baseline,
                    });
                    prepared.len() - 1
                });
                for &agents in &set.agents {
                    for &lambda in &set.lambdas {
                        let map = set.map.display().to_string();
                        let spec = ScenarioSpec {
                            map: set.map.clone(),
                            scale,
                            lambda,
                            alpha: set.alpha,
                            agents: Some(agents),
                            seed,
                            start_center: Some(set.start_center),
                            starts: None,
                            goals: prepared[map_key].goals.clone().unwrap_or_default(),
                            order_goals: set.order_goals,
                        };
                        jobs.push(Job {
                            map_key,
                            id: format!("{map}@{scale}/n{agents}/l{lambda}/s{seed}"),
                            map,
                            scale,
                            seed,
                            agents,
                            spec,
                        });
                    }
                }
            }
        }
    }

    let config = SolverConfig {
        timeout: suite.timeout.map(Duration::from_secs_f64),
        stage2: Stage2Params {
            node_budget: suite.node_budget,
        },
        ..SolverConfig::default()
    };
    let slots: Vec<Mutex<Option<InstanceRun>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let workers = suite.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = {
                    let mut n = next.lock().expect("job counter");
                    let k = *n;
                    *n += 1;
                    k
                };
                let Some(job) = jobs.get(k) else { break };
                let run = run_job(job, &prepared[job.map_key], &config);
                *slots[k].lock().expect("result slot") = Some(run);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
        .collect())
}

fn run_job(job: &Job, map: &PreparedMap, config: &SolverConfig) -> InstanceRun {
    let mut record = BenchRecord {
        id: job.id.clone(),
        map: job.map.clone(),
        scale: job.scale,
        agents: job.agents,
        lambda: job.spec.lambda,
        seed: job.seed,
        goals: job.spec.goals.len(),
        outcome: Outcome::Failure,
        category: String::new(),
        makespan: None,
        baseline: map.baseline,
        steps: StepTimings::default(),
        wall: Duration::ZERO,
    };
    if let Err(msg) = &map.goals {
        record.category = format!("invalid suite: {msg}");
        return InstanceRun {
            record,
            loaded: None,
            solution: None,
        };
    }
    let loaded = match job.spec.build(map.grid.clone()) {
        Ok(l) => l,
        Err(e) => {
            record.category = e.category().to_string();
            return InstanceRun {
                record,
                loaded: None,
                solution: None,
            };
        }
    };
    let start = Instant::now();
    let result = solve_timed(&loaded.scenario, config, &mut record.steps);
    record.wall = start.elapsed();
    let solution = match result {
        Ok(sol) => {
            record.outcome = Outcome::Success;
            record.makespan = Some(sol.makespan);
            Some(sol)
        }
        Err(e) => {
            record.outcome = if e.is_timeout() { Outcome::Timeout } else { Outcome::Failure };
            record.category = e.category().to_string();
            None
        }
    };
    InstanceRun {
        record,
        loaded: Some(loaded),
        solution,
    }
}

/// Groups records by map, scale, agent count and limit.
pub fn aggregate(records: &[BenchRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, u64, usize, u64), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.map.clone(), r.scale.to_bits(), r.agents, r.lambda.to_bits()))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let ok: Vec<&&BenchRecord> = rs.iter().filter(|r| r.outcome == Outcome::Success).collect();
            let mut makespans: Vec<f64> = ok.iter().filter_map(|r| r.makespan).collect();
            let mut baselines: Vec<f64> = rs.iter().filter_map(|r| r.baseline).collect();
            let mut walls: Vec<f64> = rs.iter().map(|r| r.wall.as_secs_f64() * 1e3).collect();
            let mut fractions: Vec<f64> = ok.iter().filter_map(|r| r.stage1_fraction()).collect();
            Aggregate {
                map: rs[0].map.clone(),
                scale: rs[0].scale,
                agents: rs[0].agents,
                lambda: rs[0].lambda,
                runs: rs.len(),
                successes: ok.len(),
                failure_pct: 100.0 * (rs.len() - ok.len()) as f64 / rs.len() as f64,
                median_makespan: median(&mut makespans),
                median_baseline: median(&mut baselines),
                median_wall_ms: median(&mut walls).unwrap_or(0.0),
                median_stage1_fraction: median(&mut fractions),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

/// Comma-delimited record table. Timing columns vary run to run; leave them
/// out for byte-stable output.
pub fn records_csv(records: &[BenchRecord], with_timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "id", "map", "scale", "agents", "lambda", "seed", "goals", "outcome", "category", "makespan", "baseline",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if with_timing {
        header.extend(StepTimings::NAMES.iter().map(|n| format!("{n}_ms")));
        header.extend(["stage1_ms", "stage2_ms", "wall_ms"].map(String::from));
    }
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.map.clone(),
            r.scale.to_string(),
            r.agents.to_string(),
            r.lambda.to_string(),
            r.seed.to_string(),
            r.goals.to_string(),
            r.outcome.as_str().to_string(),
            r.category.clone(),
            opt(r.makespan),
            opt(r.baseline),
        ];
        if with_timing {
            row.extend(r.steps.values().iter().map(|&d| ms(d)));
            row.extend([ms(r.steps.stage1()), ms(r.steps.stage2()), ms(r.wall)]);
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn aggregates_csv(aggs: &[Aggregate], with_timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "map",
        "scale",
        "agents",
        "lambda",
        "runs",
        "successes",
        "failure_pct",
        "median_makespan",
        "median_baseline",
    ];
    if with_timing {
        header.extend(["median_wall_ms", "median_stage1_fraction"]);
    }
    w.write_record(&header).expect("in-memory write");
    for a in aggs {
        let mut row = vec![
            a.map.clone(),
            a.scale.to_string(),
            a.agents.to_string(),
            a.lambda.to_string(),
            a.runs.to_string(),
            a.successes.to_string(),
            format!("{:.1}", a.failure_pct),
            opt(a.median_makespan),
            opt(a.median_baseline),
        ];
        if with_timing {
            row.extend([
                format!("{:.3}", a.median_wall_ms),
                a.median_stage1_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
            ]);
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
