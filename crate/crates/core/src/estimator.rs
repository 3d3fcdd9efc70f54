//! Minimum density power divergence fitting with Kaplan–Meier weights.
//!
//! For `α > 0` the objective is
//! `H(θ) = ξ_α(θ) − (1 + 1/α) Σ_j w_j f_θ(x_j)^α`, and for `α = 0` it is the
//! weighted negative log-likelihood `−Σ_j w_j ln f_θ(x_j)`. In both cases
//! `∇H = (1+α) Σ_j w_j ψ_α(x_j; θ)`, so stationary points solve the weighted
//! estimating equation.
//!
//! Parameters are optimized on the log scale. Each start runs a damped Newton
//! iteration on the log-scale estimating equation; when that stalls the
//! objective is minimized by Nelder–Mead and Newton is retried from there.
//! Among all starts the solution with the smallest objective wins.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::CensoredSample;
use crate::error::{Error, Result};
use crate::kmpl::{kmpl_fit, KmplFit};
use crate::linalg;
use crate::model::{psi_with, weighted_integrals, Family, LifetimeModel, WeightedIntegrals};
use crate::optim::nelder_mead;
use crate::quadrature::QuadratureConfig;
use crate::varest::{self, CovarianceEstimate, LambdaMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub alpha: f64,
    pub start: Option<Vec<f64>>,
    pub alpha_grid: Option<Vec<f64>>,
    /// Tolerance on the scale-free estimating-equation residual.
    pub tol_gradient: f64,
    pub max_iter: usize,
    /// Random restarts in addition to the primary start.
    pub n_multistart: usize,
    pub seed: u64,
    pub lambda: LambdaMethod,
    #[serde(skip)]
    pub quadrature: QuadratureConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            start: None,
            alpha_grid: None,
            tol_gradient: 1e-8,
            max_iter: 200,
            n_multistart: 5,
            seed: 0x5eed,
            lambda: LambdaMethod::Model,
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.tol_gradient > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub theta_hat: Vec<f64>,
    pub alpha: f64,
    pub n: usize,
    pub objective_value: f64,
    /// `‖diag(θ̂) Σ w ψ(x; θ̂)‖ / ξ_α(θ̂)`, which is free of the time scale.
    pub eqn_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(with = "linalg::serde_rows")]
    pub lambda_hat: DMatrix<f64>,
    #[serde(with = "linalg::serde_rows")]
    pub c_hat: DMatrix<f64>,
    #[serde(with = "linalg::serde_rows")]
    pub sigma_hat: DMatrix<f64>,
    pub lambda_condition: f64,
    pub residual_mass: f64,
    pub residual_flag: bool,
}

impl FitResult {
    /// Standard errors of θ̂, `sqrt(diag(Σ̂)/n)`.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.theta_hat.len())
            .map(|i| (self.sigma_hat[(i, i)] / self.n as f64).sqrt())
            .collect()
    }

    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_hat)
    }
}

/// Objective, estimating function and integrals at one θ.
struct Evaluation {
    objective: f64,
    /// `Σ w ψ(x; θ)`.
    eqn: DVector<f64>,
    xi: f64,
}

struct Problem<'a> {
    model: &'a dyn LifetimeModel,
    alpha: f64,
    points: Vec<(f64, f64)>,
    quadrature: QuadratureConfig,
}

impl Problem<'_> {
    fn integrals(&self, theta: &[f64]) -> Result<WeightedIntegrals> {
        if self.alpha == 0.0 {
            // ξ₀ = 1 and J₀ = 0 exactly; K is not needed while fitting
            self.model.validate(theta)?;
            let p = self.model.dim();
            return Ok(WeightedIntegrals {
                alpha: 0.0,
                xi: 1.0,
                j: DVector::zeros(p),
                k: DMatrix::zeros(p, p),
            });
        }
        weighted_integrals(self.model, theta, self.alpha, &self.quadrature)
    }

    fn objective(&self, theta: &[f64]) -> Result<f64> {
        let w = self.integrals(theta)?;
        self.objective_with(theta, &w)
    }

    fn objective_with(&self, theta: &[f64], w: &WeightedIntegrals) -> Result<f64> {
        let a = self.alpha;
        let mut sum = 0.0;
        for &(x, wt) in &self.points {
            let lf = self.model.ln_pdf(theta, x);
            let term = if a == 0.0 { lf } else { (a * lf).exp() };
            if !term.is_finite() {
                return Err(Error::NonFinite(format!("density at support point {x}")));
            }
            sum += wt * term;
        }
        Ok(if a == 0.0 { -sum } else { w.xi - (1.0 + 1.0 / a) * sum })
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let w = self.integrals(theta)?;
        let objective = self.objective_with(theta, &w)?;
        let p = self.model.dim();
        let mut eqn = DVector::zeros(p);
        for &(x, wt) in &self.points {
            eqn += psi_with(self.model, theta, &w, x) * wt;
        }
        if eqn.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimating equation".into()));
        }
        Ok(Evaluation {
            objective,
            eqn,
            xi: w.xi,
        })
    }

    /// Log-scale estimating function `diag(θ) Σ w ψ`, the η-gradient of `H/(1+α)`.
    fn log_eqn(&self, theta: &[f64], e: &Evaluation) -> DVector<f64> {
        DVector::from_fn(theta.len(), |i, _| theta[i] * e.eqn[i])
    }
}

fn exp_vec(eta: &DVector<f64>) -> Vec<f64> {
    eta.iter().map(|v| v.exp()).collect()
}

struct Solution {
    theta: Vec<f64>,
    objective: f64,
    residual: f64,
    converged: bool,
    iterations: usize,
}

fn newton(problem: &Problem, start: &[f64], tol: f64, max_iter: usize) -> Result<Solution> {
    let p = start.len();
    let mut eta = DVector::from_iterator(p, start.iter().map(|v| v.ln()));
    let mut theta = exp_vec(&eta);
    let mut eval = problem.evaluate(&theta)?;
    let mut g = problem.log_eqn(&theta, &eval);
    let mut iterations = 0;
    let mut polished = false;
    while iterations < max_iter {
        if g.norm() / eval.xi < tol {
            // one extra step past the tolerance, kept only if it helps
            if polished {
                break;
            }
            polished = true;
        }
        iterations += 1;
        // central-difference Jacobian of the log-scale equation
        let h = 1e-5;
        let mut jac = DMatrix::zeros(p, p);
        for k in 0..p {
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[k] += h;
            em[k] -= h;
            let (tp, tm) = (exp_vec(&ep), exp_vec(&em));
            let gp = problem.log_eqn(&tp, &problem.evaluate(&tp)?);
            let gm = problem.log_eqn(&tm, &problem.evaluate(&tm)?);
            jac.set_column(k, &((gp - gm) / (2.0 * h)));
        }
        let jac = linalg::symmetrize(&jac);
        let mut dir = match jac.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -&g,
        };
        if dir.dot(&g) >= 0.0 {
            dir = -&g;
        }
        let max_step = 1.0;
        if dir.norm() > max_step {
            dir *= max_step / dir.norm();
        }
        let slope = (1.0 + problem.alpha) * dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand_eta = &eta + &dir * step;
            let cand = exp_vec(&cand_eta);
            if let Ok(e) = problem.evaluate(&cand) {
                let gc = problem.log_eqn(&cand, &e);
                let armijo = e.objective <= eval.objective + 1e-4 * step * slope;
                let flat = e.objective <= eval.objective + 1e-12 * eval.objective.abs().max(1e-300)
                    && gc.norm() < g.norm();
                if armijo || flat {
                    accepted = Some((cand_eta, cand, e, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((_, _, _, gc)) if polished && gc.norm() >= g.norm() => break,
            Some((ne, nt, e, gc)) => {
                eta = ne;
                theta = nt;
                eval = e;
                g = gc;
            }
            None => break,
        }
    }
    let residual = g.norm() / eval.xi;
    Ok(Solution {
        converged: residual < tol,
        residual,
        objective: eval.objective,
        theta,
        iterations,
    })
}

fn simplex_then_newton(problem: &Problem, start: &[f64], cfg: &FitConfig) -> Result<Solution> {
    let log_start: Vec<f64> = start.iter().map(|v| v.ln()).collect();
    let nm = nelder_mead(
        |eta| {
            let theta: Vec<f64> = eta.iter().map(|v| v.exp()).collect();
            problem.objective(&theta).unwrap_or(f64::INFINITY)
        },
        &log_start,
        0.3,
        1e-14,
        1e-10,
        20 * cfg.max_iter,
    );
    let theta: Vec<f64> = nm.x.iter().map(|v| v.exp()).collect();
    let mut sol = newton(problem, &theta, cfg.tol_gradient, cfg.max_iter)?;
    sol.iterations += nm.iterations;
    Ok(sol)
}

/// Data-driven starting value.
pub fn initial_guess(sample: &CensoredSample, family: Family) -> Vec<f64> {
    let total: f64 = sample.times().sum();
    let mean = (total / sample.len() as f64).max(f64::MIN_POSITIVE);
    match family {
        Family::Exponential => {
            let events = sample.n_events();
            let t = if events > 0 { total / events as f64 } else { mean };
            vec![t.max(f64::MIN_POSITIVE)]
        }
        Family::Weibull => {
            // straight line through the log-log cumulative hazard
            let km = kmpl_fit(sample);
            let pts: Vec<(f64, f64)> = km
                .support
                .iter()
                .zip(&km.cdf_values)
                .filter(|(t, g)| **t > 0.0 && **g > 0.0 && **g < 1.0)
                .map(|(t, g)| (t.ln(), (-(-g).ln_1p()).ln()))
                .collect();
            if pts.len() >= 2 {
                let m = pts.len() as f64;
                let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
                let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                if sxx > 0.0 {
                    let b = sxy / sxx;
                    let intercept = my - b * mx;
                    let sigma = (-intercept / b).exp();
                    if b > 0.0 && b.is_finite() && sigma > 0.0 && sigma.is_finite() {
                        return vec![sigma, b];
                    }
                }
            }
            vec![mean, 1.0]
        }
    }
}

/// KMPL-weighted DPD objective (negative weighted log-likelihood at `α = 0`).
pub fn mdpde_objective(sample: &CensoredSample, family: Family, theta: &[f64], alpha: f64) -> Result<f64> {
    let km = kmpl_fit(sample);
    let problem = Problem {
        model: family.model(),
        alpha,
        points: km.weights(),
        quadrature: QuadratureConfig::default(),
    };
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    problem.objective(theta)
}

/// Weighted estimating function `Σ_j w_j ψ_α(x_j; θ)`.
pub fn estimating_equation(sample: &CensoredSample, family: Family, theta: &[f64], alpha: f64) -> Result<DVector<f64>> {
    let km = kmpl_fit(sample);
    let problem = Problem {
        model: family.model(),
        alpha,
        points: km.weights(),
        quadrature: QuadratureConfig::default(),
    };
    problem.evaluate(theta).map(|e| e.eqn)
}

fn solve(sample: &CensoredSample, km: &KmplFit, family: Family, cfg: &FitConfig) -> Result<Solution> {
    let model = family.model();
    let problem = Problem {
        model,
        alpha: cfg.alpha,
        points: km.weights(),
        quadrature: cfg.quadrature,
    };
    let primary = match &cfg.start {
        Some(s) => {
            model.validate(s)?;
            s.clone()
        }
        None => initial_guess(sample, family),
    };
    let mut starts = vec![primary.clone()];
    if cfg.start.is_some() {
        starts.push(initial_guess(sample, family));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.n_multistart {
        starts.push(
            primary
                .iter()
                .map(|v| v * (0.6 * (rng.random::<f64>() - 0.5) * 2.0).exp())
                .collect(),
        );
    }

    let mut best: Option<Solution> = None;
    let mut last_err = None;
    for s in &starts {
        let attempt = match newton(&problem, s, cfg.tol_gradient, cfg.max_iter) {
            Ok(sol) if sol.converged => Ok(sol),
            _ => simplex_then_newton(&problem, s, cfg),
        };
        match attempt {
            Ok(sol) => {
                let better = match &best {
                    None => true,
                    Some(b) => match (sol.converged, b.converged) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => sol.objective < b.objective,
                    },
                };
                if better {
                    best = Some(sol);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::NonFinite("no start could be evaluated".into())))
}

/// Covariance pieces at a given θ.
pub fn covariance_at(
    sample: &CensoredSample,
    km: &KmplFit,
    family: Family,
    theta: &[f64],
    alpha: f64,
    method: LambdaMethod,
    quadrature: &QuadratureConfig,
) -> Result<CovarianceEstimate> {
    let model = family.model();
    let w = weighted_integrals(model, theta, alpha, quadrature)?;
    let psi = varest::psi_matrix(sample, model.dim(), |x| psi_with(model, theta, &w, x))?;
    let c = varest::c_from_u(&varest::u_hat(&varest::gamma_tables(sample), &psi));
    let lambda = match method {
        LambdaMethod::Model => crate::model::check_lambda(w.k.clone())?,
        LambdaMethod::Empirical => varest::empirical_lambda(km, theta, |t, x| {
            let wt = weighted_integrals(model, t, alpha, quadrature)?;
            Ok(psi_with(model, t, &wt, x))
        })?,
    };
    CovarianceEstimate::new(lambda, c)
}

/// Fit the MDPDE at `cfg.alpha` and attach the sandwich covariance.
pub fn fit(sample: &CensoredSample, family: Family, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let km = kmpl_fit(sample);
    let sol = solve(sample, &km, family, cfg)?;
    let cov = covariance_at(sample, &km, family, &sol.theta, cfg.alpha, cfg.lambda, &cfg.quadrature)?;
    Ok(FitResult {
        family,
        theta_hat: sol.theta,
        alpha: cfg.alpha,
        n: sample.len(),
        objective_value: sol.objective,
        eqn_residual: sol.residual,
        converged: sol.converged,
        iterations: sol.iterations,
        lambda_condition: cov.lambda_condition,
        lambda_hat: cov.lambda_hat,
        c_hat: cov.c_hat,
        sigma_hat: cov.sigma_hat,
        residual_mass: km.residual_mass,
        residual_flag: km.residual_flagged(),
    })
}

/// Fit along an ascending α grid, warm-starting each fit from the previous
/// estimate. Failures are returned in place and do not stop the sweep.
pub fn fit_grid(sample: &CensoredSample, family: Family, alpha_grid: &[f64], cfg: &FitConfig) -> Result<Vec<Result<FitResult>>> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if alpha_grid[0] < 0.0 || alpha_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("alpha grid must be ascending and start at a nonnegative value".into()));
    }
    let mut out = Vec::with_capacity(alpha_grid.len());
    let mut warm = cfg.start.clone();
    for &alpha in alpha_grid {
        let c = FitConfig {
            alpha,
            start: warm.clone(),
            ..cfg.clone()
        };
        let r = fit(sample, family, &c);
        if let Ok(f) = &r {
            if f.converged {
                warm = Some(f.theta_hat.clone());
            }
        }
        out.push(r);
    }
    Ok(out)
}
