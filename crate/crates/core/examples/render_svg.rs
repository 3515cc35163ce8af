// Draw a solved plan and the first-stage search of its first goal as SVG.
//
// Files go to the system temp directory unless a directory is given:
// `cargo run --example render_svg -- out/`

use std::error::Error;
use std::path::{Path, PathBuf};

use ccpp::io::{load_scenario, write_text, Stage1Dump};
use ccpp::render::{render_plan, render_stage1, RenderOptions};
use ccpp::solver::{solve, SolverConfig};

fn render_into(dir: &Path) -> Result<Vec<PathBuf>, Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tiny.toml");
    let loaded = load_scenario(&path)?;
    let sol = solve(&loaded.scenario, &SolverConfig::default())?;
    let opts = RenderOptions::default();

    let plan_svg = render_plan(&loaded, &sol.plan, &opts)?;
    let dump = Stage1Dump::new(&loaded, &sol.stage1);
    let stage1_svg = render_stage1(&loaded, &dump, &opts)?;

    let outputs = vec![dir.join("tiny_plan.svg"), dir.join("tiny_stage1.svg")];
    write_text(&outputs[0], &plan_svg)?;
    write_text(&outputs[1], &stage1_svg)?;
    Ok(outputs)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .filter(|p| p.is_dir())
        .unwrap_or_else(std::env::temp_dir);
    for out in render_into(&dir)? {
        let bytes = std::fs::metadata(&out)?.len();
        println!("wrote {} ({bytes} bytes)", out.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
