// Look at what the first stage decides per goal: leader, follower order and
// how far each agent's search spread.

use std::error::Error;
use std::sync::Arc;

use ccpp::comms::CommConfig;
use ccpp::map_io::{build_graph, GridMap};
use ccpp::scenario::Scenario;
use ccpp::stage1::{run_stage1, Stage1Params};
use ccpp::timing::{Deadline, StepTimings};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // 14x10 room split by a wall with a doorway at column 6
    let mut grid = GridMap::open(14, 10);
    for col in (0..14).filter(|&c| c != 6) {
        grid.set(col, 5, false);
    }
    let (graph, cells) = build_graph(&grid)?;
    let at = |c, r| cells.vertex(c, r).expect("open cell");
    let scenario = Scenario::new(
        Arc::new(graph),
        vec![at(1, 1), at(2, 1), at(1, 2)],
        vec![at(12, 2), at(3, 8)],
        CommConfig::euclidean(3.0),
        1.5,
    )?;

    let params = Stage1Params::for_graph(&scenario.graph);
    let mut timings = StepTimings::default();
    let out = run_stage1(&scenario, &params, &Deadline::none(), &mut timings)?;

    for (i, epoch) in out.epochs.iter().enumerate() {
        println!(
            "epoch {i}: goal {:?}, leader {} from {:?} (cost {:.1}), order {:?}",
            cells.cell(epoch.goal),
            epoch.leader,
            cells.cell(epoch.leader_start),
            epoch.leader_cost,
            epoch.order
        );
        for (agent, search) in epoch.searches.iter().enumerate() {
            println!(
                "  agent {agent}: {} init, {} opened, {} result",
                search.init_nodes.len(),
                search.opened_count(),
                search.result_count()
            );
        }
    }
    println!("first stage took {:?}", timings.stage1());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
