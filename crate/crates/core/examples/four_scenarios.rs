//! The four canonical scenarios written to CSV and summarized in one report.
//!
//! ```text
//! cargo run --release --example four_scenarios -- out_dir
//! ```

use std::path::PathBuf;

use ddopt::experiment::{cmd_report, cmd_run, ExperimentSpec};
use ddopt::Scenario;

fn main() -> ddopt::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "traces".into()));
    std::fs::create_dir_all(&dir).map_err(|e| ddopt::Error::Trace(e.to_string()))?;
    let mut paths = Vec::new();
    for sc in Scenario::ALL {
        let path = dir.join(format!("{sc}.csv"));
        let exp = cmd_run(&ExperimentSpec::scenario(sc), &path)?;
        println!("{sc}: {} rows -> {}", exp.rows.len(), path.display());
        paths.push(path);
    }
    println!("\n{}", cmd_report(&paths)?);
    Ok(())
}
