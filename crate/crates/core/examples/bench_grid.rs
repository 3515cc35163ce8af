// A small benchmark grid: agent counts times communication limits on one map,
// with the per-instance table and the medians.

use std::error::Error;
use std::path::Path;

use ccpp::bench::{aggregate, aggregates_csv, records_csv, run_suite, BenchSuite};

const SUITE: &str = r#"
timeout = 20.0

[[maps]]
map = "open16.map"
start_center = [2, 2]
random_goals = 3
agents = [1, 2, 3]
lambdas = [2.0, 4.0]
seeds = [1, 2]
"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let suite = BenchSuite::parse(SUITE)?;
    let base = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let runs = run_suite(&suite, &base)?;
    let records: Vec<_> = runs.into_iter().map(|r| r.record).collect();

    print!("{}", records_csv(&records, false));
    println!();
    print!("{}", aggregates_csv(&aggregate(&records), false));

    if records.len() != 12 {
        return Err(format!("expected 12 records, got {}", records.len()).into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
