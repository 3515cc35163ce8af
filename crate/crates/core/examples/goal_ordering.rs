// Goal tours: the order a scenario lists its goals in versus the reordered tour.

use std::error::Error;
use std::path::Path;

use ccpp::graph::{distance, VertexId, WeightedGraph};
use ccpp::io::load_map;
use ccpp::map_io::build_graph;
use ccpp::scenario::order_goals_tsp;

fn tour_length(graph: &WeightedGraph, depot: VertexId, goals: &[VertexId]) -> f64 {
    let mut at = depot;
    let mut total = 0.0;
    for &g in goals {
        total += distance(graph, at, g).expect("reachable");
        at = g;
    }
    total
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let map = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/rooms30.map");
    let (graph, cells) = build_graph(&load_map(&map, 1.0)?)?;
    let at = |c, r| cells.vertex(c, r).expect("open cell");
    let depot = at(3, 3);
    let listed = vec![at(26, 5), at(5, 24), at(25, 26), at(14, 3), at(3, 14), at(16, 16)];

    let ordered = order_goals_tsp(&graph, depot, &listed)?;
    let cells_of = |gs: &[VertexId]| gs.iter().map(|&g| cells.cell(g)).collect::<Vec<_>>();
    println!("listed  {:.1}  {:?}", tour_length(&graph, depot, &listed), cells_of(&listed));
    println!("ordered {:.1}  {:?}", tour_length(&graph, depot, &ordered), cells_of(&ordered));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
