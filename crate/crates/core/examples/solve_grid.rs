// Solve a small scenario file and check the result with the validator.
//
// `cargo run --example solve_grid`

use std::error::Error;
use std::path::Path;

use ccpp::io::load_scenario;
use ccpp::plan::validate_plan;
use ccpp::solver::{solve, SolverConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tiny.toml");
    let loaded = load_scenario(&path)?;
    let sol = solve(&loaded.scenario, &SolverConfig::default())?;

    println!("makespan {:.1}", sol.makespan);
    for (goal, t) in loaded.scenario.goals.iter().zip(&sol.goal_visit_times) {
        println!("  goal {:?} visited at {t:.1}", loaded.cell(*goal));
    }
    for (agent, actions) in sol.plan.agents.iter().enumerate() {
        let end = actions.last().map_or(loaded.scenario.starts[agent], |a| a.to);
        println!("  agent {agent}: {} actions, ends at {:?}", actions.len(), loaded.cell(end));
    }

    let report = validate_plan(&loaded.scenario, &sol.plan);
    if !report.ok {
        return Err(format!("solver plan rejected: {:?}", report.violations).into());
    }
    println!("validator: ok");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
