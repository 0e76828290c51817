//! Stratified bootstrap standard errors and percentile intervals for the
//! GRN and RC estimators on the bundled dataset.

use std::path::Path;

use rakecal::calibration::{ErrorMode, ErrorModelSpec};
use rakecal::cli_io::load_dataset;
use rakecal::estimators::{bootstrap_estimator, estimate, Estimator, EstimatorSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/two_phase_example.csv"));
    let data = load_dataset(path)?;
    let settings = EstimatorSettings::new(ErrorModelSpec::for_mode(ErrorMode::Both));
    let b = 200;
    for est in [Estimator::Grn, Estimator::Rc] {
        let point = estimate(est, &data.cohort, &data.design, &settings)?;
        let boot = bootstrap_estimator(est, &data.cohort, &data.design, &settings, b, 42)?;
        println!("{} ({} of {} replicates)", est.label(), boot.b_effective, boot.b_requested);
        let normal = boot.normal_interval(&point.beta);
        for (k, name) in data.x_names.iter().chain(&data.z_names).enumerate() {
            println!(
                "  {name:<4} beta {:+.4}  se {:.4}  percentile ({:+.4}, {:+.4})  normal ({:+.4}, {:+.4})",
                point.beta[k], boot.se[k], boot.ci[k].0, boot.ci[k].1, normal[k].0, normal[k].1
            );
        }
    }
    Ok(())
}
