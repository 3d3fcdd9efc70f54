//! Monte Carlo studies: rejection rates of Wald-type tests, empirical MSE of
//! the MDPDE and the ratio of the sandwich variance to the empirical MSE.
//!
//! Replication `i` draws from stream `i` of the design's seed, so results do
//! not depend on how replications are scheduled across workers. Failed fits
//! are excluded from rates and counted; a study whose failures exceed
//! [`MAX_FAILURE_RATE`] of the replications is flagged invalid.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cli::{hypothesis_parse, ParsedHypothesis};
use crate::data::{simulate_replication, SyntheticDesign};
use crate::error::{Error, Result};
use crate::estimator::{fit_grid, FitConfig, FitResult};
use crate::hypothesis::{wald_statistic, Restriction};
use crate::model::Family;
use crate::twosample::{two_sample_wald, TwoSampleRestriction};

pub const MAX_FAILURE_RATE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LevelPower,
    Mse,
    VarianceRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Data-generating design; fits use the family of its lifetime law and
    /// errors are measured against its parameters.
    pub design: SyntheticDesign,
    pub n: usize,
    pub replications: usize,
    pub alpha_grid: Vec<f64>,
    /// One-sample hypotheses in the command-line grammar, e.g. `shape=5`.
    pub hypotheses: Vec<String>,
    pub level: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Random restarts per fit.
    pub n_multistart: usize,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, design: SyntheticDesign, n: usize, replications: usize, alpha_grid: Vec<f64>) -> Self {
        Self {
            kind,
            design,
            n,
            replications,
            alpha_grid,
            hypotheses: Vec::new(),
            level: 0.05,
            workers: None,
            n_multistart: 0,
        }
    }

    pub fn with_hypotheses<S: Into<String>>(mut self, hypotheses: impl IntoIterator<Item = S>) -> Self {
        self.hypotheses = hypotheses.into_iter().map(Into::into).collect();
        self
    }

    pub fn family(&self) -> Family {
        self.design.lifetime.family
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.replications == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("replications and sample size must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {}", self.level)));
        }
        check_grid(&self.alpha_grid)?;
        if self.kind == ExperimentKind::LevelPower && self.hypotheses.is_empty() {
            return Err(Error::InvalidArgument("a level/power study needs at least one hypothesis".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("worker count must be positive".into()));
        }
        Ok(())
    }

    fn restrictions(&self) -> Result<Vec<Restriction>> {
        self.hypotheses
            .iter()
            .map(|h| match hypothesis_parse(h, self.family())? {
                ParsedHypothesis::OneSample(r) => Ok(r),
                ParsedHypothesis::TwoSample(_) => Err(Error::InvalidArgument(format!(
                    "`{h}` is a two-sample hypothesis"
                ))),
            })
            .collect()
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig {
            n_multistart: self.n_multistart,
            ..FitConfig::default()
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::InvalidArgument("alpha grid must be nonempty and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("alpha grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Rejection tally for one `(α, hypothesis)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub alpha: f64,
    pub hypothesis: String,
    pub rejections: usize,
    pub successes: usize,
    pub failures: usize,
    /// `rejections / successes`.
    pub rate: f64,
    /// `√(rate(1 − rate)/successes)`.
    pub std_error: f64,
    pub seed: u64,
}

/// Estimation summary for one `(α, component)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub alpha: f64,
    pub component: String,
    pub n: usize,
    pub mse: f64,
    /// Mean of `Σ̂_ii / n`.
    pub mean_variance: f64,
    /// `mean_variance / mse`.
    pub ratio: f64,
    pub successes: usize,
    pub failures: usize,
    pub seed: u64,
}

/// p-values of one `(α, hypothesis)` cell in replication order; failed
/// replications are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueSeries {
    pub alpha: f64,
    pub hypothesis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rejections: Vec<RejectionRow>,
    pub estimation: Vec<EstimationRow>,
    pub p_values: Vec<PValueSeries>,
    /// Largest failure count over the α grid.
    pub failures: usize,
    pub invalid: bool,
    pub wall_time_secs: f64,
}

impl ExperimentReport {
    /// Rows as CSV: rejection rows for level/power studies, estimation rows
    /// otherwise.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.spec.kind == ExperimentKind::LevelPower {
            for r in &self.rejections {
                w.serialize(r)?;
            }
        } else {
            for r in &self.estimation {
                w.serialize(r)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let s = &self.spec;
        let d = &s.design;
        let mut out = String::new();
        let _ = writeln!(out, "{:?} study, seed {}", s.kind, d.seed);
        let _ = writeln!(
            out,
            "lifetime {} ({}), censoring mean {}, contamination {} from {}",
            d.lifetime.family,
            crate::hypothesis::join(&d.lifetime.theta),
            d.censoring_mean,
            d.contamination_fraction,
            d.contamination
                .as_ref()
                .map_or("none".to_string(), |c| format!("{} ({})", c.family, crate::hypothesis::join(&c.theta)))
        );
        let _ = writeln!(out, "n = {}, replications = {}, level = {}", s.n, s.replications, s.level);
        for r in &self.rejections {
            let _ = writeln!(
                out,
                "  alpha {:<5} {:<28} rate {:.3} (se {:.3}, {} failed)",
                r.alpha, r.hypothesis, r.rate, r.std_error, r.failures
            );
        }
        for r in &self.estimation {
            let _ = writeln!(
                out,
                "  alpha {:<5} {:<8} mse {:.5e}  mean var {:.5e}  ratio {:.3} ({} failed)",
                r.alpha, r.component, r.mse, r.mean_variance, r.ratio, r.failures
            );
        }
        let _ = writeln!(
            out,
            "failures: {}{}; wall time {:.1}s",
            self.failures,
            if self.invalid { " (INVALID: above 2%)" } else { "" },
            self.wall_time_secs
        );
        out
    }
}

/// Run `job` over `0..count` on `workers` threads, keeping index order.
pub(crate) fn parallel_map<T, F>(count: usize, workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match workers {
        None => Ok((0..count).into_par_iter().map(job).collect()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
        }
    }
}

/// Per-α fit outcome of one replication.
type Fits = Vec<Option<FitResult>>;

fn replicate_fits(spec: &ExperimentSpec, cfg: &FitConfig, index: usize) -> Fits {
    let k = spec.alpha_grid.len();
    let Ok(sim) = simulate_replication(&spec.design, spec.n, index as u64) else {
        return vec![None; k];
    };
    match fit_grid(&sim.sample, spec.family(), &spec.alpha_grid, cfg) {
        Ok(fits) => fits.into_iter().map(|r| r.ok().filter(|f| f.converged)).collect(),
        Err(_) => vec![None; k],
    }
}

fn run_fits(spec: &ExperimentSpec) -> Result<Vec<Fits>> {
    let cfg = spec.fit_config();
    parallel_map(spec.replications, spec.workers, |i| replicate_fits(spec, &cfg, i))
}

fn is_invalid(failures: usize, replications: usize) -> bool {
    failures as f64 > MAX_FAILURE_RATE * replications as f64
}

/// Rejection rates of every hypothesis at every α.
pub fn run_level_power(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let restrictions = spec.restrictions()?;
    let cfg = spec.fit_config();
    // per replication: per α: per hypothesis p-value
    let outcomes: Vec<Vec<Vec<Option<f64>>>> = parallel_map(spec.replications, spec.workers, |i| {
        replicate_fits(spec, &cfg, i)
            .into_iter()
            .map(|f| {
                restrictions
                    .iter()
                    .map(|r| f.as_ref().and_then(|f| wald_statistic(f, r).ok()).map(|t| t.p_value))
                    .collect()
            })
            .collect()
    })?;
    let mut rejections = Vec::new();
    let mut p_values = Vec::new();
    let mut worst = 0;
    for (a, &alpha) in spec.alpha_grid.iter().enumerate() {
        for (h, r) in restrictions.iter().enumerate() {
            let values: Vec<f64> = outcomes.iter().filter_map(|o| o[a][h]).collect();
            let row = rejection_row(alpha, &spec.hypotheses[h], &values, spec.replications, spec.level, spec.design.seed);
            worst = worst.max(row.failures);
            rejections.push(row);
            p_values.push(PValueSeries {
                alpha,
                hypothesis: r.description.clone(),
                values,
            });
        }
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        rejections,
        estimation: Vec::new(),
        p_values,
        failures: worst,
        invalid: is_invalid(worst, spec.replications),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn rejection_row(alpha: f64, hypothesis: &str, p_values: &[f64], replications: usize, level: f64, seed: u64) -> RejectionRow {
    let successes = p_values.len();
    let rejections = p_values.iter().filter(|p| **p < level).count();
    let rate = if successes == 0 { f64::NAN } else { rejections as f64 / successes as f64 };
    RejectionRow {
        alpha,
        hypothesis: hypothesis.to_string(),
        rejections,
        successes,
        failures: replications - successes,
        rate,
        std_error: (rate * (1.0 - rate) / successes as f64).sqrt(),
        seed,
    }
}

/// Empirical MSE of θ̂ about the design parameters, per α and component.
pub fn run_mse(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_estimation(spec)
}

/// `R_α = mean(Σ̂_ii/n) / MSE_i` per α and component.
pub fn run_variance_ratio(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_estimation(spec)
}

fn run_estimation(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let fits = run_fits(spec)?;
    let names: Vec<String> = spec.family().param_names().iter().map(|s| s.to_string()).collect();
    let mut estimation = Vec::new();
    let mut worst = 0;
    for (a, &alpha) in spec.alpha_grid.iter().enumerate() {
        let draws: Vec<Option<Estimate>> = fits
            .iter()
            .map(|f| {
                f[a].as_ref().map(|f| Estimate {
                    theta: f.theta_hat.clone(),
                    variance: (0..f.theta_hat.len()).map(|i| f.sigma_hat[(i, i)]).collect(),
                })
            })
            .collect();
        let rows = estimation_rows(alpha, &names, &spec.design.lifetime.theta, spec.n, &draws, spec.design.seed);
        worst = worst.max(rows.first().map_or(0, |r| r.failures));
        estimation.extend(rows);
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        rejections: Vec::new(),
        estimation,
        p_values: Vec::new(),
        failures: worst,
        invalid: is_invalid(worst, spec.replications),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// One replication's estimate and the diagonal of its `Σ̂` (√n scale).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Aggregate estimates into MSE and variance-ratio rows; `None` entries are
/// failures.
pub fn estimation_rows(alpha: f64, names: &[String], theta0: &[f64], n: usize, draws: &[Option<Estimate>], seed: u64) -> Vec<EstimationRow> {
    let ok: Vec<&Estimate> = draws.iter().flatten().collect();
    let k = ok.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mse = ok.iter().map(|e| (e.theta[i] - theta0[i]).powi(2)).sum::<f64>() / k;
            let mean_variance = ok.iter().map(|e| e.variance[i] / n as f64).sum::<f64>() / k;
            EstimationRow {
                alpha,
                component: name.clone(),
                n,
                mse,
                mean_variance,
                ratio: mean_variance / mse,
                successes: ok.len(),
                failures: draws.len() - ok.len(),
                seed,
            }
        })
        .collect()
}

/// Two-sample calibration or power study under a common α grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleSpec {
    pub arm1: SyntheticDesign,
    pub arm2: SyntheticDesign,
    pub n1: usize,
    pub n2: usize,
    pub replications: usize,
    pub alpha_grid: Vec<f64>,
    /// Two-sample hypothesis in the command-line grammar, e.g. `shape1=shape2`.
    pub hypothesis: String,
    pub level: f64,
    pub workers: Option<usize>,
    pub n_multistart: usize,
}

/// Rejection rates and p-values of a two-sample test. Arm 1 of replication
/// `i` uses stream `2i` of its design and arm 2 stream `2i + 1`, so the two
/// arms never share draws even when the designs coincide.
pub fn run_two_sample(spec: &TwoSampleSpec) -> Result<ExperimentReport> {
    spec.arm1.validate()?;
    spec.arm2.validate()?;
    check_grid(&spec.alpha_grid)?;
    let family = spec.arm1.lifetime.family;
    if spec.arm2.lifetime.family != family {
        return Err(Error::InvalidArgument("both arms must come from the same family".into()));
    }
    if spec.replications == 0 || spec.n1 == 0 || spec.n2 == 0 {
        return Err(Error::InvalidArgument("replications and arm sizes must be positive".into()));
    }
    let restriction: TwoSampleRestriction = match hypothesis_parse(&spec.hypothesis, family)? {
        ParsedHypothesis::TwoSample(r) => r,
        ParsedHypothesis::OneSample(_) => {
            return Err(Error::InvalidArgument(format!("`{}` is a one-sample hypothesis", spec.hypothesis)))
        }
    };
    let start = Instant::now();
    let cfg = FitConfig {
        n_multistart: spec.n_multistart,
        ..FitConfig::default()
    };
    let arm_fits = |design: &SyntheticDesign, n: usize, stream: u64| -> Fits {
        let k = spec.alpha_grid.len();
        match simulate_replication(design, n, stream).and_then(|s| fit_grid(&s.sample, family, &spec.alpha_grid, &cfg)) {
            Ok(fits) => fits.into_iter().map(|r| r.ok().filter(|f| f.converged)).collect(),
            Err(_) => vec![None; k],
        }
    };
    let outcomes: Vec<Vec<Option<f64>>> = parallel_map(spec.replications, spec.workers, |i| {
        let f1 = arm_fits(&spec.arm1, spec.n1, 2 * i as u64);
        let f2 = arm_fits(&spec.arm2, spec.n2, 2 * i as u64 + 1);
        f1.iter()
            .zip(&f2)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => two_sample_wald(a, b, &restriction).ok().map(|r| r.p_value),
                _ => None,
            })
            .collect()
    })?;
    let mut rejections = Vec::new();
    let mut p_values = Vec::new();
    let mut worst = 0;
    for (a, &alpha) in spec.alpha_grid.iter().enumerate() {
        let values: Vec<f64> = outcomes.iter().filter_map(|o| o[a]).collect();
        let row = rejection_row(alpha, &spec.hypothesis, &values, spec.replications, spec.level, spec.arm1.seed);
        worst = worst.max(row.failures);
        rejections.push(row);
        p_values.push(PValueSeries {
            alpha,
            hypothesis: restriction.description.clone(),
            values,
        });
    }
    let mut echo = ExperimentSpec::new(ExperimentKind::LevelPower, spec.arm1.clone(), spec.n1, spec.replications, spec.alpha_grid.clone())
        .with_hypotheses([spec.hypothesis.clone()]);
    echo.level = spec.level;
    echo.workers = spec.workers;
    echo.n_multistart = spec.n_multistart;
    Ok(ExperimentReport {
        spec: echo,
        rejections,
        estimation: Vec::new(),
        p_values,
        failures: worst,
        invalid: is_invalid(worst, spec.replications),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Kolmogorov–Smirnov distance of `values` from Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
