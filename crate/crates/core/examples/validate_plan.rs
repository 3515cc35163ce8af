// The validator on a good plan, a tampered one, and one checked against the
// wrong scenario.

use std::error::Error;
use std::path::Path;

use ccpp::io::{load_scenario, PlanDocument};
use ccpp::plan::{validate_plan, ViolationKind};
use ccpp::solver::{solve, SolverConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tiny.toml");
    let loaded = load_scenario(&path)?;
    let sol = solve(&loaded.scenario, &SolverConfig::default())?;

    // round trip through the plan file format
    let doc = PlanDocument::new(&loaded, &sol.plan, Some(sol.makespan), sol.goal_visit_times.clone());
    let plan = PlanDocument::parse(&doc.to_json())?.to_plan(&loaded)?;
    let report = validate_plan(&loaded.scenario, &plan);
    println!("original: ok={} makespan={:?}", report.ok, report.makespan);

    let mut tampered = plan.clone();
    let agent = (0..tampered.agent_count())
        .find(|&a| tampered.agents[a].len() > 1)
        .ok_or("no agent with two actions")?;
    tampered.agents[agent][0].arrive += 0.5;
    let report = validate_plan(&loaded.scenario, &tampered);
    println!("tampered: ok={}", report.ok);
    for v in report.violations.iter().take(3) {
        println!("  {v}");
    }
    if !report.has(ViolationKind::Continuity) {
        return Err("expected a continuity violation".into());
    }

    let mut other = loaded.scenario.clone();
    other.starts.reverse();
    let report = validate_plan(&other, &plan);
    println!("wrong scenario: ok={}, {} violation(s)", report.ok, report.violations.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
