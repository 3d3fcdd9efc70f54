//! p-value of a composite Wald-type test as a function of the tuning
//! parameter: is Veteran arm A exponential (Weibull shape 1)?

use robsurv::cli::{hypothesis_parse, ParsedHypothesis};
use robsurv::data::veteran;
use robsurv::estimator::{fit_grid, FitConfig};
use robsurv::hypothesis::{wald_statistic, TestReport};
use robsurv::model::Family;

fn main() -> robsurv::Result<()> {
    let ParsedHypothesis::OneSample(h) = hypothesis_parse("shape=1 dir=less", Family::Weibull)? else {
        unreachable!("one-sample grammar")
    };
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sample = &veteran()["A"];
    let mut reports = Vec::new();
    for fit in fit_grid(sample, Family::Weibull, &grid, &FitConfig::default())? {
        let rep = wald_statistic(&fit?, &h)?;
        println!("alpha {:<4} signed root {:>7.3}  p {:.4}", rep.alpha_dpd, rep.statistic, rep.p_value);
        reports.push(rep);
    }
    let path = std::env::temp_dir().join("robsurv_pvalue_curve.csv");
    TestReport::write_csv(&reports, std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
