//! Runs both stages end to end.

use std::time::Duration;

use thiserror::Error;

use crate::plan::{goal_visit_times, Plan, PlanError};
use crate::scenario::{validate_scenario, Scenario, ScenarioError};
use crate::stage1::{run_stage1, Stage1Error, Stage1Output, Stage1Params};
use crate::stage2::{run_stage2, SearchTrace, Stage2Error, Stage2Params};
use crate::timing::{Deadline, StepTimings};

#[derive(Debug, Clone, Default)]
pub struct SolverConfig {
    /// Derived from the graph when absent.
    pub stage1: Option<Stage1Params>,
    pub stage2: Stage2Params,
    pub timeout: Option<Duration>,
    /// Record every node the second stage pushes.
    pub record_traces: bool,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Stage1(#[from] Stage1Error),
    #[error(transparent)]
    Stage2(#[from] Stage2Error),
    #[error("solver produced an incomplete plan: {0}")]
    Incomplete(#[from] PlanError),
}

impl SolveError {
    pub fn category(&self) -> &'static str {
        match self {
            SolveError::Scenario(e) => e.category(),
            SolveError::Stage1(e) => e.failure.category(),
            SolveError::Stage2(e) => e.failure.category(),
            SolveError::Incomplete(_) => "incomplete plan",
        }
    }

    pub fn is_timeout(&self) -> bool {
        self.category() == "timeout"
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: Plan,
    pub makespan: f64,
    pub goal_visit_times: Vec<f64>,
    pub stage1: Stage1Output,
    pub timings: StepTimings,
    pub traces: Vec<SearchTrace>,
}

/// Validates the scenario, then runs the first and second stage.
pub fn solve(scenario: &Scenario, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve_timed(scenario, config, &mut StepTimings::default())
}

/// Like [`solve`], but accumulates step timings into `timings` even when the
/// run fails.
pub fn solve_timed(
    scenario: &Scenario,
    config: &SolverConfig,
    timings: &mut StepTimings,
) -> Result<Solution, SolveError> {
    validate_scenario(scenario)?;
    let deadline = config.timeout.map_or_else(Deadline::none, Deadline::after);
    let params = config.stage1.unwrap_or_else(|| Stage1Params::for_graph(&scenario.graph));
    let stage1 = run_stage1(scenario, &params, &deadline, timings)?;
    let mut traces = Vec::new();
    let plan = run_stage2(
        scenario,
        &stage1,
        &config.stage2,
        &deadline,
        timings,
        config.record_traces.then_some(&mut traces),
    )?;
    let visits = goal_visit_times(scenario, &plan)?;
    Ok(Solution {
        makespan: *visits.last().expect("at least one goal"),
        goal_visit_times: visits,
        plan,
        stage1,
        timings: *timings,
        traces,
    })
}
