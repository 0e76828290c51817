//! Tunes the uniform censoring interval for each simulation effect size
//! and censoring level, as stored in the scenario registry.

use rakecal::simulation::{tune_censoring, ScenarioConfig};

fn main() -> rakecal::Result<()> {
    println!("{:>8} {:>7} {:>8} {:>12} {:>9}", "beta_x", "target", "length", "lower", "achieved");
    for beta_x in [0.0, 1.5f64.ln(), 3f64.ln()] {
        for target in [0.25, 0.75] {
            let cfg = ScenarioConfig::base(beta_x, 0.5, 0.5, 0.15);
            let tuned = tune_censoring(&cfg, target, 0.005)?;
            println!(
                "{:>8.4} {:>7.2} {:>8.1} {:>12.9} {:>9.5}",
                beta_x, target, tuned.interval.length, tuned.interval.lower, tuned.achieved
            );
        }
    }
    Ok(())
}
