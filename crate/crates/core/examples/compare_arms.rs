//! Two-sample comparison of the Veteran arms: equal shapes against a
//! larger shape in the standard arm, both two-sided and one-sided.

use robsurv::data::veteran;
use robsurv::estimator::{fit, FitConfig};
use robsurv::hypothesis::Direction;
use robsurv::model::Family;
use robsurv::twosample::{one_sided_wald, two_sample_wald, TwoSampleRestriction};

fn main() -> robsurv::Result<()> {
    let arms = veteran();
    let shapes = TwoSampleRestriction::component(2, 1)?.with_description("shape1=shape2");
    let homogeneity = TwoSampleRestriction::homogeneity(2);
    for alpha in [0.0, 0.2, 0.5, 1.0] {
        let cfg = FitConfig::with_alpha(alpha);
        let a = fit(&arms["A"], Family::Weibull, &cfg)?;
        let b = fit(&arms["B"], Family::Weibull, &cfg)?;
        let two = two_sample_wald(&a, &b, &shapes)?;
        let one = one_sided_wald(&a, &b, &shapes, Direction::Greater)?;
        let all = two_sample_wald(&a, &b, &homogeneity)?;
        println!(
            "alpha {alpha:<4} shapes {:.3} vs {:.3}: two-sided p {:.3}, greater p {:.3}; full homogeneity p {:.3}",
            a.theta_hat[1], b.theta_hat[1], two.p_value, one.p_value, all.p_value
        );
    }
    Ok(())
}
