//! Kaplan–Meier estimate for each Veteran arm, with the log-log cumulative
//! hazard whose straightness suggests a Weibull fit.

use robsurv::data::veteran;
use robsurv::kmpl::kmpl_fit;

fn main() -> robsurv::Result<()> {
    for (arm, sample) in veteran() {
        let km = kmpl_fit(&sample);
        let path = std::env::temp_dir().join(format!("robsurv_km_{arm}.csv"));
        km.write_csv(std::fs::File::create(&path)?)?;
        // least-squares slope of log(-log S) on log t estimates the shape
        let pts: Vec<(f64, f64)> = km
            .support
            .iter()
            .zip(&km.cdf_values)
            .filter(|(_, f)| **f > 0.0 && **f < 1.0)
            .map(|(t, f)| (t.ln(), (-(1.0 - f).ln()).ln()))
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        println!(
            "arm {arm}: {} jumps, residual mass {:.3}, log-log slope {slope:.3}, wrote {}",
            km.support.len(),
            km.residual_mass,
            path.display()
        );
    }
    Ok(())
}
