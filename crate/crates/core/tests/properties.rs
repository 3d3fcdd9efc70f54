//! Cross-module statistical properties that need moderately large samples.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robsurv::data::{censoring_mean_for_rate, simulate, CensoredObservation, CensoredSample, Distribution, SyntheticDesign};
use robsurv::estimator::{fit, FitConfig};
use robsurv::influence::if_estimator;
use robsurv::model::Family;
use robsurv::montecarlo::{run_variance_ratio, ExperimentKind, ExperimentSpec};
use robsurv::varest::{gamma_tables, psi_matrix, u_hat};

fn exponential_draws(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect()
}

#[test]
fn one_added_point_tracks_the_influence_function() {
    let x = exponential_draws(500, 3);
    let clean = CensoredSample::uncensored(&x).unwrap();
    let n = x.len() as f64;
    for alpha in [0.5, 1.0] {
        let cfg = FitConfig::with_alpha(alpha);
        let base = fit(&clean, Family::Exponential, &cfg).unwrap();
        let theta = base.theta_hat[0];
        let grid: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        let curve: Vec<f64> = grid
            .iter()
            .map(|&t| if_estimator(Family::Exponential, &[theta], alpha, t).unwrap()[0])
            .collect();
        let sup = curve.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (&t, &influence) in grid.iter().zip(&curve) {
            let bumped = clean.with_observation(CensoredObservation { z: t, delta: true }).unwrap();
            let moved = fit(&bumped, Family::Exponential, &cfg).unwrap().theta_hat[0] - theta;
            // IF = Λ⁻¹ψ is the negative of the sensitivity dθ/dε
            let empirical = -n * moved;
            assert!(
                (empirical - influence).abs() <= 0.15 * influence.abs().max(0.1 * sup),
                "alpha {alpha}, t {t}: empirical {empirical}, IF {influence}"
            );
        }
    }
}

#[test]
fn large_sample_fit_is_within_three_standard_errors() {
    let life = Distribution::weibull(2.0, 5.0).unwrap();
    let design = SyntheticDesign::new(life.clone(), censoring_mean_for_rate(&life, 0.10).unwrap(), 99);
    let sample = simulate(&design, 10_000).unwrap();
    let f = fit(&sample, Family::Weibull, &FitConfig::with_alpha(0.5)).unwrap();
    assert!(f.converged);
    for ((est, se), truth) in f.theta_hat.iter().zip(f.std_errors()).zip([2.0, 5.0]) {
        assert!((est - truth).abs() <= 3.0 * se, "{est} vs {truth} (se {se})");
    }
}

#[test]
fn u_hat_is_centered_in_large_samples() {
    let design = SyntheticDesign::new(Distribution::exponential(1.0).unwrap(), 4.0, 5);
    let sample = simulate(&design, 10_000).unwrap();
    let alpha: f64 = 0.3;
    let c = alpha / (1.0 + alpha).powi(2);
    let psi = psi_matrix(&sample, 1, |z| DVector::from_element(1, (1.0 - z) * (-alpha * z).exp() - c)).unwrap();
    let u = u_hat(&gamma_tables(&sample), &psi);
    let n = u.nrows() as f64;
    let mean = u.column(0).sum() / n;
    let sd = (u.column(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
}

#[test]
fn variance_ratio_is_reasonable_at_small_n() {
    let life = Distribution::weibull(2.0, 5.0).unwrap();
    let design = SyntheticDesign::new(life.clone(), censoring_mean_for_rate(&life, 0.10).unwrap(), 17);
    let spec = ExperimentSpec::new(ExperimentKind::VarianceRatio, design, 50, 400, vec![0.0, 0.5, 1.0]);
    let report = run_variance_ratio(&spec).unwrap();
    assert!(!report.invalid);
    for row in &report.estimation {
        assert!((0.6..=1.6).contains(&row.ratio), "{row:?}");
    }
}
