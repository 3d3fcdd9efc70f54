//! Does the censoring-aware sandwich track the true sampling variance?
//! Ratio of the mean estimated variance to the Monte Carlo MSE for the
//! Weibull(2, 5) design with 10% censoring.

use robsurv::data::{censoring_mean_for_rate, Distribution, SyntheticDesign};
use robsurv::montecarlo::{run_variance_ratio, ExperimentKind, ExperimentSpec};

fn main() -> robsurv::Result<()> {
    let life = Distribution::weibull(2.0, 5.0)?;
    let design = SyntheticDesign::new(life.clone(), censoring_mean_for_rate(&life, 0.10)?, 7);
    for n in [50, 200] {
        let spec = ExperimentSpec::new(ExperimentKind::VarianceRatio, design.clone(), n, 400, vec![0.0, 0.5, 1.0]);
        let report = run_variance_ratio(&spec)?;
        println!("n = {n}");
        for row in &report.estimation {
            println!("  alpha {:<4} {:<6} ratio {:.3}", row.alpha, row.component, row.ratio);
        }
    }
    Ok(())
}
