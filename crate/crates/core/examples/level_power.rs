//! Level and power of the Wald-type tests under the Weibull(2, 5) design,
//! clean and with 5% Exp(5) contamination. Pass a replication count as the
//! first argument (default 200).

use robsurv::cli::{experiment_spec, Experiment};
use robsurv::montecarlo::run_level_power;

fn main() -> robsurv::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    for eps in [0.0, 0.05] {
        let mut spec = experiment_spec(Experiment::LevelPower, eps, 2018)?;
        spec.replications = reps;
        spec.alpha_grid = vec![0.0, 0.3, 0.5, 1.0];
        let report = run_level_power(&spec)?;
        println!("contamination {eps}");
        for row in &report.rejections {
            println!("  alpha {:<4} {:<20} {:.3} ± {:.3}", row.alpha, row.hypothesis, row.rate, row.std_error);
        }
    }
    Ok(())
}
