//! Calibrate exponential censoring to a target rate and check it by
//! simulation.

use robsurv::data::{censoring_mean_for_rate, censoring_probability, simulate, Distribution, SyntheticDesign};

fn main() -> robsurv::Result<()> {
    let lifetimes = [Distribution::exponential(1.0)?, Distribution::weibull(2.0, 5.0)?, Distribution::weibull(100.0, 0.8)?];
    for life in lifetimes {
        for rate in [0.1, 0.3] {
            let mean = censoring_mean_for_rate(&life, rate)?;
            let sample = simulate(&SyntheticDesign::new(life.clone(), mean, 1), 50_000)?;
            println!(
                "{:?} {:?}: target {rate}, censoring mean {mean:.4}, exact {:.4}, simulated {:.4}",
                life.family,
                life.theta,
                censoring_probability(&life, mean)?,
                sample.censoring_fraction()
            );
        }
    }
    Ok(())
}
