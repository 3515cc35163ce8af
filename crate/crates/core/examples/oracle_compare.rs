// Compare the heuristic planner against the exhaustive optimum on a tiny map.

use std::error::Error;
use std::sync::Arc;

use ccpp::comms::CommConfig;
use ccpp::map_io::{build_graph, GridMap};
use ccpp::oracle::{optimal_plan, OracleLimits};
use ccpp::plan::validate_plan;
use ccpp::scenario::Scenario;
use ccpp::solver::{solve, SolverConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut grid = GridMap::open(6, 6);
    grid.set(2, 2, false);
    grid.set(3, 2, false);
    let (graph, cells) = build_graph(&grid)?;
    let graph = Arc::new(graph);
    let at = |c, r| cells.vertex(c, r).expect("open cell");

    for limit in [1.5, 2.5, 10.0] {
        let scenario = Scenario::new(
            graph.clone(),
            vec![at(0, 0), at(1, 0)],
            vec![at(4, 4), at(0, 5)],
            CommConfig::euclidean(limit),
            1.5,
        )?;
        let planned = solve(&scenario, &SolverConfig::default())?;
        let best = optimal_plan(&scenario, &OracleLimits::default())?;
        assert!(validate_plan(&scenario, &best.plan).ok);
        println!(
            "limit {limit:>4}: planner {:.1}, optimum {:.1} ({} states), ratio {:.3}",
            planned.makespan,
            best.makespan,
            best.expanded,
            planned.makespan / best.makespan
        );
        if planned.makespan < best.makespan - 1e-9 {
            return Err("planner beat the optimum".into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
