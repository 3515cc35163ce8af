// Reading a map in the MovingAI text format, scaling it and routing on it.

use std::error::Error;

use ccpp::graph::shortest_paths;
use ccpp::map_io::{build_graph, parse_movingai, scale_map};

const MAP: &str = "type octile
height 6
width 8
map
........
.@@@@...
.@......
.@..TT..
.@......
........
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let grid = parse_movingai(MAP)?;
    println!("{}x{} map, {} open cells", grid.width(), grid.height(), grid.passable_count());

    for factor in [1.0, 2.0] {
        let scaled = scale_map(&grid, factor)?;
        let (graph, cells) = build_graph(&scaled)?;
        let from = cells.vertex(0, 0).ok_or("blocked corner")?;
        let to = cells
            .vertex(scaled.width() - 1, scaled.height() - 1)
            .ok_or("blocked corner")?;
        let costs = shortest_paths(&graph, from)?;
        println!(
            "x{factor}: {} vertices, {} edges, corner to corner {:.1}",
            graph.vertex_count(),
            graph.edge_count(),
            costs.get(to).ok_or("unreachable")?
        );
    }
    print!("{}", grid.to_movingai());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
