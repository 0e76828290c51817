//! Weighted Cox regression on a small hand-made cohort: coefficients,
//! model standard errors and dfbeta influence residuals.

use rakecal::survival_core::{dfbeta_residuals, fit_cox, FitOptions, SurvivalRecord};

fn main() -> rakecal::Result<()> {
    // (time, event, x, z)
    let data = [
        (5.0, true, 0.3, 1.0),
        (8.0, false, -1.2, 0.0),
        (2.5, true, -0.6, 1.0),
        (6.1, true, 0.9, 0.0),
        (9.3, false, 0.4, 1.0),
        (1.7, true, 1.8, 0.0),
        (4.2, true, -0.7, 0.0),
        (7.7, true, 1.2, 1.0),
        (3.3, false, 0.2, 0.0),
        (6.8, true, -0.1, 1.0),
        (2.9, true, 0.5, 0.0),
        (10.4, false, -0.3, 1.0),
    ];
    let records: Vec<SurvivalRecord> = data
        .iter()
        .map(|&(t, d, x, z)| SurvivalRecord::new(t, d, vec![x, z]))
        .collect();

    let fit = fit_cox(&records, &FitOptions::default())?.require_converged()?;
    let se = fit.std_errors()?;
    println!("converged in {} iterations, log PL {:.6}", fit.iterations, fit.loglik);
    for (k, name) in ["x", "z"].iter().enumerate() {
        println!(
            "{name}: beta {:+.5}  se {:.5}  HR {:.4}",
            fit.beta[k],
            se[k],
            fit.hazard_ratios()[k]
        );
    }

    let dfb = dfbeta_residuals(&fit, &records)?;
    println!("\nlargest influence on beta_x:");
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| dfb[(b, 0)].abs().total_cmp(&dfb[(a, 0)].abs()));
    for &i in order.iter().take(3) {
        println!("  subject {i}: dfbeta {:+.5}", dfb[(i, 0)]);
    }

    // Same fit with case weights doubled for events.
    let weighted: Vec<SurvivalRecord> = records
        .iter()
        .map(|r| r.clone().with_weight(if r.event { 2.0 } else { 1.0 }))
        .collect();
    let wfit = fit_cox(&weighted, &FitOptions::default())?;
    println!("\nevent-weighted beta: {:+.5} {:+.5}", wfit.beta[0], wfit.beta[1]);
    Ok(())
}
