//! Runs a bundled simulation scenario (or a TOML file) and prints the
//! results table. Usage: `simulate_table [name-or-path] [reps] [bootstrap]`.

use std::path::Path;

use rakecal::simulation::{bundled_scenario, run_scenario, ScenarioConfig};

fn main() -> rakecal::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let which = args.first().map(String::as_str).unwrap_or("outcome_error");
    let mut cfg = if which.ends_with(".toml") {
        ScenarioConfig::load(Path::new(which))?
    } else {
        bundled_scenario(which)?
    };
    if let Some(r) = args.get(1) {
        cfg.reps = r.parse().expect("reps must be an integer");
    }
    if let Some(b) = args.get(2) {
        cfg.bootstrap = b.parse().expect("bootstrap must be an integer");
    }
    let result = run_scenario(&cfg)?;
    print!("{}", result.to_table());
    eprintln!("runtime {:.1}s", result.runtime.as_secs_f64());
    Ok(())
}
