//! One-sample Wald-type tests of `H₀: m(θ) = 0`.
//!
//! The statistic is `W = n m(θ̂)ᵀ [M(θ̂)ᵀ Σ̂ M(θ̂)]⁻¹ m(θ̂)` with `M = ∂mᵀ/∂θ`
//! (p×r), referred to `χ²_r`. Only the unrestricted fit is needed, so composite
//! nulls never require a restricted estimate.
//!
//! Throughout, `alpha_dpd` is the divergence tuning parameter and `level` is
//! the significance level.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::influence::noncentral_chi2_sf;
use crate::linalg;
use crate::special::{chi2_critical, chi2_sf, normal_cdf, normal_sf};

/// Relative singular-value tolerance for the rank check on `M`.
pub const RANK_TOL: f64 = 1e-10;
/// Allowed gap between an analytic Jacobian and its finite-difference check.
pub const JACOBIAN_TOL: f64 = 1e-6;

pub type RestrictionFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Alternative for one-sided tests with `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `H₁: m > 0`.
    Greater,
    /// `H₁: m < 0`.
    Less,
}

impl Direction {
    /// Upper-tail p-value of the signed root statistic.
    pub fn p_value(self, signed: f64) -> f64 {
        match self {
            Direction::Greater => normal_sf(signed),
            Direction::Less => normal_cdf(signed),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Greater => "greater",
            Direction::Less => "less",
        })
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "greater" | "gt" | ">" => Ok(Direction::Greater),
            "less" | "lt" | "<" => Ok(Direction::Less),
            other => Err(Error::InvalidArgument(format!("unknown direction `{other}`"))),
        }
    }
}

/// A restriction `m: ℝᵖ → ℝʳ` with its Jacobian `M(θ)` (p×r, columns are the
/// gradients of the components of `m`).
#[derive(Clone)]
pub struct Restriction {
    p: usize,
    r: usize,
    m: RestrictionFn,
    jacobian: JacobianFn,
    /// Analytic Jacobians supplied by callers are checked against finite
    /// differences on every evaluation.
    verify: bool,
    pub description: String,
    pub direction: Option<Direction>,
}

impl fmt::Debug for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Restriction")
            .field("p", &self.p)
            .field("r", &self.r)
            .field("description", &self.description)
            .field("direction", &self.direction)
            .finish()
    }
}

impl Restriction {
    /// `m(θ) = θ − θ₀`, `M = I`.
    pub fn simple(theta0: Vec<f64>) -> Result<Self> {
        if theta0.is_empty() || theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("null value must be a finite nonempty vector".into()));
        }
        let p = theta0.len();
        let description = format!("theta = ({})", join(&theta0));
        let t0 = theta0.clone();
        Ok(Self {
            p,
            r: p,
            m: Arc::new(move |t| DVector::from_fn(p, |i, _| t[i] - t0[i])),
            jacobian: Arc::new(move |_| DMatrix::identity(p, p)),
            verify: false,
            description,
            direction: None,
        })
    }

    /// `m(θ) = θ_index − value` in a `p`-parameter model.
    pub fn component(p: usize, index: usize, value: f64) -> Result<Self> {
        if index >= p || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "component {index} out of range for p = {p} or non-finite value"
            )));
        }
        let mut a = DMatrix::zeros(1, p);
        a[(0, index)] = 1.0;
        let mut r = Self::linear(a, DVector::from_element(1, value))?;
        r.description = format!("theta[{index}] = {value}");
        Ok(r)
    }

    /// `m(θ) = Aθ − b` with `A` r×p.
    pub fn linear(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (r, p) = a.shape();
        if b.len() != r || r == 0 || r > p {
            return Err(Error::InvalidArgument(format!(
                "linear restriction needs 1 <= r <= p and matching b, got A {r}x{p}, b {}",
                b.len()
            )));
        }
        let rank = linalg::rank(&a, RANK_TOL);
        if rank < r {
            return Err(Error::RankDeficient { rank, expected: r });
        }
        let at = a.transpose();
        let description = format!("A theta = ({})", join(b.as_slice()));
        Ok(Self {
            p,
            r,
            m: Arc::new(move |t| &a * DVector::from_column_slice(t) - &b),
            jacobian: Arc::new(move |_| at.clone()),
            verify: false,
            description,
            direction: None,
        })
    }

    /// A user-supplied restriction. Without an analytic Jacobian, central
    /// differences are used; with one, it is checked against them.
    pub fn custom(p: usize, r: usize, m: RestrictionFn, jacobian: Option<JacobianFn>, description: impl Into<String>) -> Result<Self> {
        if r == 0 || r > p {
            return Err(Error::InvalidArgument(format!("need 1 <= r <= p, got r = {r}, p = {p}")));
        }
        let (jacobian, verify) = match jacobian {
            Some(j) => (j, true),
            None => {
                let mm = m.clone();
                let j: JacobianFn = Arc::new(move |t| fd_jacobian(&*mm, t, r));
                (j, false)
            }
        };
        Ok(Self {
            p,
            r,
            m,
            jacobian,
            verify,
            description: description.into(),
            direction: None,
        })
    }

    /// `A·m` for a nonsingular r×r `A`; the Wald statistic is unchanged.
    pub fn transformed(&self, a: DMatrix<f64>) -> Result<Self> {
        if a.shape() != (self.r, self.r) {
            return Err(Error::InvalidArgument(format!("transform must be {0}x{0}", self.r)));
        }
        linalg::inverse(&a, "restriction transform")?;
        let (m, j) = (self.m.clone(), self.jacobian.clone());
        let a2 = a.clone();
        Ok(Self {
            p: self.p,
            r: self.r,
            m: Arc::new(move |t| &a * m(t)),
            jacobian: Arc::new(move |t| j(t) * a2.transpose()),
            verify: self.verify,
            description: format!("A ({})", self.description),
            direction: self.direction,
        })
    }

    pub fn with_direction(mut self, direction: Direction) -> Result<Self> {
        if self.r != 1 {
            return Err(Error::InvalidArgument(format!(
                "one-sided alternatives need r = 1, got r = {}",
                self.r
            )));
        }
        self.direction = Some(direction);
        Ok(self)
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        let v = (self.m)(theta);
        if v.len() != self.r || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("restriction `{}` at ({})", self.description, join(theta))));
        }
        Ok(v)
    }

    /// `m(θ)` and `M(θ)`, with the rank (and, for analytic Jacobians, the
    /// finite-difference) checks applied.
    pub fn evaluate(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let m = self.m(theta)?;
        let big_m = (self.jacobian)(theta);
        if big_m.shape() != (self.p, self.r) {
            return Err(Error::InvalidArgument(format!(
                "jacobian must be {}x{}, got {:?}",
                self.p,
                self.r,
                big_m.shape()
            )));
        }
        if self.verify {
            let gap = self.jacobian_gap(theta)?;
            let scale = 1.0 + big_m.amax();
            if gap > JACOBIAN_TOL * scale {
                return Err(Error::InvalidArgument(format!(
                    "jacobian of `{}` disagrees with finite differences by {gap:e}",
                    self.description
                )));
            }
        }
        let rank = linalg::rank(&big_m, RANK_TOL);
        if rank < self.r {
            return Err(Error::RankDeficient { rank, expected: self.r });
        }
        Ok((m, big_m))
    }

    /// Largest absolute gap between `M(θ)` and its central-difference estimate.
    pub fn jacobian_gap(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        let fd = fd_jacobian(&*self.m, theta, self.r);
        Ok(((self.jacobian)(theta) - fd).amax())
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.p {
            return Err(Error::InvalidArgument(format!(
                "restriction expects {} parameters, got {}",
                self.p,
                theta.len()
            )));
        }
        Ok(())
    }
}

/// Central-difference Jacobian in the p×r layout.
pub(crate) fn fd_jacobian(m: &(dyn Fn(&[f64]) -> DVector<f64> + Send + Sync), theta: &[f64], r: usize) -> DMatrix<f64> {
    let p = theta.len();
    let mut out = DMatrix::zeros(p, r);
    let mut t = theta.to_vec();
    for i in 0..p {
        let h = 1e-6 * (1.0 + theta[i].abs());
        t[i] = theta[i] + h;
        let up = m(&t);
        t[i] = theta[i] - h;
        let down = m(&t);
        t[i] = theta[i];
        for k in 0..r {
            out[(i, k)] = (up[k] - down[k]) / (2.0 * h);
        }
    }
    out
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Outcome of a one-sample test. For one-sided tests `statistic` is the
/// signed root `sign(m)√W` and `df` is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub hypothesis: String,
    pub alpha_dpd: f64,
    pub n: usize,
    pub statistic: f64,
    pub df: usize,
    pub direction: Option<Direction>,
    pub p_value: f64,
    /// Condition number of `MᵀΣ̂M`.
    pub inner_condition: f64,
    pub lambda_condition: f64,
    pub residual_flag: bool,
}

impl TestReport {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }

    pub fn write_csv<W: Write>(reports: &[TestReport], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in reports {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TestReport>> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut out = Vec::new();
        for row in rd.deserialize() {
            out.push(row?);
        }
        Ok(out)
    }
}

/// `(m, M, MᵀΣM)` at θ.
fn inner(restriction: &Restriction, theta: &[f64], sigma: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if sigma.shape() != (restriction.p(), restriction.p()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be {0}x{0}",
            restriction.p()
        )));
    }
    let (m, big_m) = restriction.evaluate(theta)?;
    let star = linalg::symmetrize(&(big_m.transpose() * sigma * &big_m));
    Ok((m, big_m, star))
}

/// `mᵀ (MᵀΣM)⁻¹ m`.
pub fn w_bar(theta: &[f64], restriction: &Restriction, sigma: &DMatrix<f64>) -> Result<f64> {
    let (m, _, star) = inner(restriction, theta, sigma)?;
    Ok(linalg::quad_form(&linalg::inverse(&star, "M^T Sigma M")?, &m))
}

/// The Wald-type statistic for a converged fit. When the restriction carries
/// a direction the one-sided signed-root test is returned instead.
pub fn wald_statistic(fit: &FitResult, restriction: &Restriction) -> Result<TestReport> {
    if !fit.converged {
        return Err(Error::NotConverged(format!(
            "alpha = {}, residual {:e}",
            fit.alpha, fit.eqn_residual
        )));
    }
    let (m, _, star) = inner(restriction, &fit.theta_hat, &fit.sigma_hat)?;
    let inv = linalg::inverse(&star, "M^T Sigma M")?;
    let w = fit.n as f64 * linalg::quad_form(&inv, &m);
    let (statistic, df, p_value) = match restriction.direction {
        None => (w, restriction.r(), chi2_sf(w, restriction.r() as f64)),
        Some(dir) => {
            let s = m[0].signum() * w.sqrt();
            let s = if m[0] == 0.0 { 0.0 } else { s };
            (s, 1, dir.p_value(s))
        }
    };
    Ok(TestReport {
        hypothesis: restriction.description.clone(),
        alpha_dpd: fit.alpha,
        n: fit.n,
        statistic,
        df,
        direction: restriction.direction,
        p_value: p_value.clamp(0.0, 1.0),
        inner_condition: linalg::condition_number(&star),
        lambda_condition: fit.lambda_condition,
        residual_flag: fit.residual_flag,
    })
}

/// Normal approximation to the power at a fixed alternative `θ*`:
/// `1 − Φ((√n/σ*)(χ²_{r,level}/n − W̄(θ*)))`, with `σ*² = ∇W̄ᵀ Σ ∇W̄` and the
/// gradient taken by central differences on `W̄` with Σ held fixed.
pub fn power_approx(theta_star: &[f64], restriction: &Restriction, sigma: &DMatrix<f64>, n: usize, level: f64) -> Result<f64> {
    check_level(level)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let wb = w_bar(theta_star, restriction, sigma)?;
    if wb == 0.0 {
        return Err(Error::NullViolated(
            "power approximation is undefined at a point satisfying the null".into(),
        ));
    }
    let p = theta_star.len();
    let mut grad = DVector::zeros(p);
    let mut t = theta_star.to_vec();
    for i in 0..p {
        let h = 1e-5 * (1.0 + theta_star[i].abs());
        t[i] = theta_star[i] + h;
        let up = w_bar(&t, restriction, sigma)?;
        t[i] = theta_star[i] - h;
        let down = w_bar(&t, restriction, sigma)?;
        t[i] = theta_star[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    let s2 = linalg::quad_form(sigma, &grad);
    if !(s2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_*^2 must be positive, got {s2:e}")));
    }
    let n = n as f64;
    let crit = chi2_critical(level, restriction.r() as f64);
    Ok(normal_sf(n.sqrt() / s2.sqrt() * (crit / n - wb)))
}

/// Asymptotic power under `θₙ = θ₀ + d/√n`: the upper tail of `χ²_r(ncp)` at
/// the level-`level` critical value, `ncp = dᵀM(MᵀΣM)⁻¹Mᵀd`.
pub fn contiguous_power(d: &[f64], restriction: &Restriction, theta0: &[f64], sigma: &DMatrix<f64>, level: f64) -> Result<f64> {
    check_level(level)?;
    let ncp = contiguous_ncp(d, restriction, theta0, sigma)?;
    let r = restriction.r() as f64;
    Ok(noncentral_chi2_sf(chi2_critical(level, r), r, ncp))
}

/// The noncentrality `dᵀM(MᵀΣM)⁻¹Mᵀd`.
pub fn contiguous_ncp(d: &[f64], restriction: &Restriction, theta0: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    if d.len() != restriction.p() {
        return Err(Error::InvalidArgument("shift has the wrong dimension".into()));
    }
    let (_, big_m, star) = inner(restriction, theta0, sigma)?;
    let md = big_m.transpose() * DVector::from_column_slice(d);
    Ok(linalg::quad_form(&linalg::inverse(&star, "M^T Sigma M")?, &md).max(0.0))
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fake_fit(theta: Vec<f64>, sigma: DMatrix<f64>, n: usize) -> FitResult {
        let p = theta.len();
        FitResult {
            family: if p == 1 { Family::Exponential } else { Family::Weibull },
            theta_hat: theta,
            alpha: 0.3,
            n,
            objective_value: 0.0,
            eqn_residual: 0.0,
            converged: true,
            iterations: 1,
            lambda_hat: DMatrix::identity(p, p),
            c_hat: sigma.clone(),
            sigma_hat: sigma,
            lambda_condition: 1.0,
            residual_mass: 0.0,
            residual_flag: false,
        }
    }

    fn sigma2() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 2.5])
    }

    #[test]
    fn simple_equals_direct_quadratic_form() {
        let fit = fake_fit(vec![2.1, 4.6], sigma2(), 100);
        let rep = wald_statistic(&fit, &Restriction::simple(vec![2.0, 5.0]).unwrap()).unwrap();
        let diff = DVector::from_vec(vec![0.1, -0.4]);
        let direct = 100.0 * linalg::quad_form(&sigma2().try_inverse().unwrap(), &diff);
        assert_relative_eq!(rep.statistic, direct, max_relative = 1e-10);
        assert_eq!(rep.df, 2);
        assert_relative_eq!(rep.p_value, chi2_sf(direct, 2.0), epsilon = 1e-14);
    }

    #[test]
    fn exact_null_gives_zero_and_unit_p() {
        let fit = fake_fit(vec![2.0, 5.0], sigma2(), 100);
        let rep = wald_statistic(&fit, &Restriction::simple(vec![2.0, 5.0]).unwrap()).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert_eq!(rep.p_value, 1.0);
    }

    #[test]
    fn scalar_component_reduction() {
        let fit = fake_fit(vec![2.1, 4.6], sigma2(), 100);
        let rep = wald_statistic(&fit, &Restriction::component(2, 1, 5.0).unwrap()).unwrap();
        assert_relative_eq!(rep.statistic, 100.0 * 0.16 / 2.5, max_relative = 1e-12);
        assert_eq!(rep.df, 1);
    }

    #[test]
    fn unconverged_fit_is_rejected() {
        let mut fit = fake_fit(vec![2.1, 4.6], sigma2(), 100);
        fit.converged = false;
        let e = wald_statistic(&fit, &Restriction::simple(vec![2.0, 5.0]).unwrap());
        assert!(matches!(e, Err(Error::NotConverged(_))));
    }

    #[test]
    fn singular_inner_matrix_is_reported() {
        let fit = fake_fit(vec![2.1, 4.6], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 100);
        let e = wald_statistic(&fit, &Restriction::component(2, 1, 5.0).unwrap());
        assert!(matches!(e, Err(Error::Singular { .. })));
    }

    #[test]
    fn rank_deficient_jacobian_is_reported() {
        let m: RestrictionFn = Arc::new(|t| DVector::from_vec(vec![t[0] - 1.0, 2.0 * t[0] - 2.0]));
        let r = Restriction::custom(2, 2, m, None, "dup").unwrap();
        assert!(matches!(r.evaluate(&[1.5, 2.0]), Err(Error::RankDeficient { rank: 1, expected: 2 })));
    }

    #[test]
    fn wrong_analytic_jacobian_is_caught() {
        let m: RestrictionFn = Arc::new(|t| DVector::from_vec(vec![t[0] * t[1] - 10.0]));
        let good: JacobianFn = Arc::new(|t| DMatrix::from_column_slice(2, 1, &[t[1], t[0]]));
        let bad: JacobianFn = Arc::new(|t| DMatrix::from_column_slice(2, 1, &[t[1], 2.0 * t[0]]));
        let ok = Restriction::custom(2, 1, m.clone(), Some(good), "prod").unwrap();
        assert!(ok.jacobian_gap(&[2.0, 5.0]).unwrap() < 1e-8);
        assert!(ok.evaluate(&[2.0, 5.0]).is_ok());
        let wrong = Restriction::custom(2, 1, m, Some(bad), "prod").unwrap();
        assert!(wrong.evaluate(&[2.0, 5.0]).is_err());
    }

    #[test]
    fn one_sided_signs_and_p_values() {
        let fit = fake_fit(vec![2.1, 4.6], sigma2(), 100);
        let base = Restriction::component(2, 1, 5.0).unwrap();
        let two = wald_statistic(&fit, &base).unwrap();
        let g = wald_statistic(&fit, &base.clone().with_direction(Direction::Greater).unwrap()).unwrap();
        let l = wald_statistic(&fit, &base.with_direction(Direction::Less).unwrap()).unwrap();
        assert!(g.statistic < 0.0);
        assert_relative_eq!(g.statistic * g.statistic, two.statistic, max_relative = 1e-12);
        assert_relative_eq!(g.p_value + l.p_value, 1.0, epsilon = 1e-14);
        assert_relative_eq!(two.p_value, 2.0 * g.p_value.min(l.p_value), max_relative = 1e-10);
        assert!(Restriction::simple(vec![1.0, 2.0]).unwrap().with_direction(Direction::Less).is_err());
    }

    #[test]
    fn power_midpoint_and_consistency() {
        let r = Restriction::component(2, 1, 5.0).unwrap();
        let s = sigma2();
        let theta = [2.0, 4.5];
        let wb = w_bar(&theta, &r, &s).unwrap();
        let crit = chi2_critical(0.05, 1.0);
        // choose n so that crit / n = W̄ exactly (non-integer n is not allowed,
        // so compare against the formula at the nearest integer instead)
        let n = (crit / wb).round() as usize;
        let pw = power_approx(&theta, &r, &s, n, 0.05).unwrap();
        let sigma_star = (s[(1, 1)] * (2.0 * (theta[1] - 5.0) / s[(1, 1)]).powi(2)).sqrt();
        let expect = normal_sf((n as f64).sqrt() / sigma_star * (crit / n as f64 - wb));
        assert_relative_eq!(pw, expect, epsilon = 1e-8);
        let big = power_approx(&theta, &r, &s, 100_000, 0.05).unwrap();
        assert!(big > 0.999999);
        assert!(matches!(power_approx(&[2.0, 5.0], &r, &s, 100, 0.05), Err(Error::NullViolated(_))));
    }

    #[test]
    fn contiguous_power_null_and_scalar_identity() {
        let r = Restriction::component(2, 1, 5.0).unwrap();
        let s = sigma2();
        let p0 = contiguous_power(&[0.0, 0.0], &r, &[2.0, 5.0], &s, 0.05).unwrap();
        assert_relative_eq!(p0, 0.05, epsilon = 1e-12);
        let d = [0.7, 3.0];
        let ncp: f64 = 9.0 / 2.5;
        let z = normal_quantile_upper(0.025);
        let direct = normal_sf(z - ncp.sqrt()) + normal_cdf(-z - ncp.sqrt());
        let pw = contiguous_power(&d, &r, &[2.0, 5.0], &s, 0.05).unwrap();
        assert_relative_eq!(pw, direct, epsilon = 1e-10);
    }

    fn normal_quantile_upper(q: f64) -> f64 {
        chi2_critical(2.0 * q, 1.0).sqrt()
    }

    #[test]
    fn report_csv_roundtrip() {
        let fit = fake_fit(vec![2.1, 4.6], sigma2(), 100);
        let reps = vec![
            wald_statistic(&fit, &Restriction::simple(vec![2.0, 5.0]).unwrap()).unwrap(),
            wald_statistic(&fit, &Restriction::component(2, 1, 5.0).unwrap().with_direction(Direction::Greater).unwrap()).unwrap(),
        ];
        let mut buf = Vec::new();
        TestReport::write_csv(&reps, &mut buf).unwrap();
        assert_eq!(TestReport::read_csv(&buf[..]).unwrap(), reps);
    }

    proptest! {
        #[test]
        fn invariant_to_linear_reparameterization(
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
            t0 in 1.5f64..2.5, t1 in 3.0f64..6.0,
        ) {
            prop_assume!((a * d - b * c).abs() > 0.1);
            let fit = fake_fit(vec![t0, t1], sigma2(), 80);
            let base = Restriction::simple(vec![2.0, 5.0]).unwrap();
            let t = base.transformed(DMatrix::from_row_slice(2, 2, &[a, b, c, d])).unwrap();
            let w1 = wald_statistic(&fit, &base).unwrap().statistic;
            let w2 = wald_statistic(&fit, &t).unwrap().statistic;
            prop_assert!((w1 - w2).abs() <= 1e-10 * (1.0 + w1));
        }

        #[test]
        fn p_value_is_chi2_tail(t1 in 3.0f64..7.0) {
            let fit = fake_fit(vec![2.0, t1], sigma2(), 50);
            let rep = wald_statistic(&fit, &Restriction::component(2, 1, 5.0).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&rep.p_value));
            prop_assert!((rep.p_value - chi2_sf(rep.statistic, 1.0)).abs() < 1e-15);
        }
    }
}
