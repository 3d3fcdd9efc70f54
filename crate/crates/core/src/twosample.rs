//! Two-sample Wald-type tests of `H₀: m(θ₁, θ₂) = 0` from independently
//! fitted arms.
//!
//! With `N = n₁ + n₂` the pooled covariance is
//! `Σ̃ = (n₂/N) M₁ᵀΣ̂₁M₁ + (n₁/N) M₂ᵀΣ̂₂M₂` and the statistic is
//! `(n₁n₂/N) mᵀΣ̃⁻¹m ~ χ²_r`. For `r = 1` the signed root is the one-sided
//! statistic, referred to the standard normal.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::hypothesis::{check_level, Direction, JACOBIAN_TOL, RANK_TOL};
use crate::influence::noncentral_chi2_sf;
use crate::linalg;
use crate::special::{chi2_critical, chi2_sf, normal_sf};

pub type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync>;
pub type PairJacobianFn = Arc<dyn Fn(&[f64], &[f64]) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>;

/// `m(θ₁, θ₂)` with Jacobians `M₁`, `M₂` (each p×r).
#[derive(Clone)]
pub struct TwoSampleRestriction {
    p: usize,
    r: usize,
    m: PairFn,
    jacobians: PairJacobianFn,
    verify: bool,
    pub description: String,
    pub direction: Option<Direction>,
}

impl fmt::Debug for TwoSampleRestriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoSampleRestriction")
            .field("p", &self.p)
            .field("r", &self.r)
            .field("description", &self.description)
            .field("direction", &self.direction)
            .finish()
    }
}

impl TwoSampleRestriction {
    /// `θ₁ = θ₂`.
    pub fn homogeneity(p: usize) -> Self {
        Self {
            p,
            r: p,
            m: Arc::new(move |a, b| DVector::from_fn(p, |i, _| a[i] - b[i])),
            jacobians: Arc::new(move |_, _| (DMatrix::identity(p, p), -DMatrix::identity(p, p))),
            verify: false,
            description: "theta1 = theta2".into(),
            direction: None,
        }
    }

    /// `θ₁[index] = θ₂[index]`.
    pub fn component(p: usize, index: usize) -> Result<Self> {
        if index >= p {
            return Err(Error::InvalidArgument(format!("component {index} out of range for p = {p}")));
        }
        let mut e = DMatrix::zeros(p, 1);
        e[(index, 0)] = 1.0;
        Ok(Self {
            p,
            r: 1,
            m: Arc::new(move |a, b| DVector::from_element(1, a[index] - b[index])),
            jacobians: Arc::new(move |_, _| (e.clone(), -e.clone())),
            verify: false,
            description: format!("theta1[{index}] = theta2[{index}]"),
            direction: None,
        })
    }

    /// A user-supplied restriction; missing Jacobians come from central
    /// differences, supplied ones are checked against them.
    pub fn custom(p: usize, r: usize, m: PairFn, jacobians: Option<PairJacobianFn>, description: impl Into<String>) -> Result<Self> {
        if r == 0 || r > 2 * p {
            return Err(Error::InvalidArgument(format!("need 1 <= r <= 2p, got r = {r}, p = {p}")));
        }
        let (jacobians, verify) = match jacobians {
            Some(j) => (j, true),
            None => {
                let mm = m.clone();
                let j: PairJacobianFn = Arc::new(move |a, b| fd_pair(&*mm, a, b, r));
                (j, false)
            }
        };
        Ok(Self {
            p,
            r,
            m,
            jacobians,
            verify,
            description: description.into(),
            direction: None,
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

    /// `(m, M₁, M₂)` with the rank check on the stacked `[M₁; M₂]`.
    pub fn evaluate(&self, theta1: &[f64], theta2: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        if theta1.len() != self.p || theta2.len() != self.p {
            return Err(Error::InvalidArgument(format!("restriction expects {} parameters per arm", self.p)));
        }
        let m = (self.m)(theta1, theta2);
        if m.len() != self.r || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("restriction `{}`", self.description)));
        }
        let (m1, m2) = (self.jacobians)(theta1, theta2);
        if m1.shape() != (self.p, self.r) || m2.shape() != (self.p, self.r) {
            return Err(Error::InvalidArgument("jacobians have the wrong shape".into()));
        }
        if self.verify {
            let gap = self.jacobian_gap(theta1, theta2)?;
            if gap > JACOBIAN_TOL * (1.0 + m1.amax().max(m2.amax())) {
                return Err(Error::InvalidArgument(format!(
                    "jacobians of `{}` disagree with finite differences by {gap:e}",
                    self.description
                )));
            }
        }
        let mut stacked = DMatrix::zeros(2 * self.p, self.r);
        stacked.rows_mut(0, self.p).copy_from(&m1);
        stacked.rows_mut(self.p, self.p).copy_from(&m2);
        let rank = linalg::rank(&stacked, RANK_TOL);
        if rank < self.r {
            return Err(Error::RankDeficient { rank, expected: self.r });
        }
        Ok((m, m1, m2))
    }

    pub fn jacobian_gap(&self, theta1: &[f64], theta2: &[f64]) -> Result<f64> {
        let (m1, m2) = (self.jacobians)(theta1, theta2);
        let (f1, f2) = fd_pair(&*self.m, theta1, theta2, self.r);
        Ok((m1 - f1).amax().max((m2 - f2).amax()))
    }
}

fn fd_pair(m: &(dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync), a: &[f64], b: &[f64], r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let j1 = crate::hypothesis::fd_jacobian(&|t: &[f64]| m(t, b), a, r);
    let j2 = crate::hypothesis::fd_jacobian(&|t: &[f64]| m(a, t), b, r);
    (j1, j2)
}

/// `(n₂/N) M₁ᵀΣ₁M₁ + (n₁/N) M₂ᵀΣ₂M₂`.
pub fn pooled_sigma(m1: &DMatrix<f64>, sigma1: &DMatrix<f64>, n1: usize, m2: &DMatrix<f64>, sigma2: &DMatrix<f64>, n2: usize) -> DMatrix<f64> {
    let total = (n1 + n2) as f64;
    linalg::symmetrize(
        &(m1.transpose() * sigma1 * m1 * (n2 as f64 / total) + m2.transpose() * sigma2 * m2 * (n1 as f64 / total)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleReport {
    pub hypothesis: String,
    pub alpha_dpd: f64,
    pub n1: usize,
    pub n2: usize,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub se1: Vec<f64>,
    pub se2: Vec<f64>,
    /// `W` for two-sided tests, `sign(m)√W` for one-sided ones.
    pub statistic: f64,
    pub df: usize,
    pub direction: Option<Direction>,
    pub p_value: f64,
    #[serde(with = "linalg::serde_rows")]
    pub pooled_sigma: DMatrix<f64>,
    pub pooled_condition: f64,
    pub residual_flag: bool,
}

/// Flat form of [`TwoSampleReport`] for CSV output; vectors are written as
/// `;`-separated lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleRow {
    pub hypothesis: String,
    pub alpha_dpd: f64,
    pub n1: usize,
    pub n2: usize,
    pub theta1: String,
    pub theta2: String,
    pub se1: String,
    pub se2: String,
    pub statistic: f64,
    pub df: usize,
    pub direction: Option<Direction>,
    pub p_value: f64,
    pub pooled_condition: f64,
    pub residual_flag: bool,
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl TwoSampleReport {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }

    pub fn row(&self) -> TwoSampleRow {
        TwoSampleRow {
            hypothesis: self.hypothesis.clone(),
            alpha_dpd: self.alpha_dpd,
            n1: self.n1,
            n2: self.n2,
            theta1: list(&self.theta1),
            theta2: list(&self.theta2),
            se1: list(&self.se1),
            se2: list(&self.se2),
            statistic: self.statistic,
            df: self.df,
            direction: self.direction,
            p_value: self.p_value,
            pooled_condition: self.pooled_condition,
            residual_flag: self.residual_flag,
        }
    }

    pub fn write_csv<W: Write>(reports: &[TwoSampleReport], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in reports {
            w.serialize(r.row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TwoSampleRow>> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut out = Vec::new();
        for row in rd.deserialize() {
            out.push(row?);
        }
        Ok(out)
    }
}

fn check_fits(fit1: &FitResult, fit2: &FitResult) -> Result<()> {
    for (i, f) in [fit1, fit2].iter().enumerate() {
        if !f.converged {
            return Err(Error::NotConverged(format!("arm {} at alpha = {}", i + 1, f.alpha)));
        }
    }
    if fit1.alpha != fit2.alpha {
        return Err(Error::InvalidArgument(format!(
            "arms were fitted with different tuning parameters ({} and {})",
            fit1.alpha, fit2.alpha
        )));
    }
    if fit1.family != fit2.family {
        return Err(Error::InvalidArgument("arms were fitted with different families".into()));
    }
    Ok(())
}

/// The two-sample statistic. A restriction with a direction yields the
/// one-sided test.
pub fn two_sample_wald(fit1: &FitResult, fit2: &FitResult, restriction: &TwoSampleRestriction) -> Result<TwoSampleReport> {
    check_fits(fit1, fit2)?;
    let (n1, n2) = (fit1.n, fit2.n);
    let (m, m1, m2) = restriction.evaluate(&fit1.theta_hat, &fit2.theta_hat)?;
    let tilde = pooled_sigma(&m1, &fit1.sigma_hat, n1, &m2, &fit2.sigma_hat, n2);
    let inv = linalg::inverse(&tilde, "pooled covariance")?;
    let w = (n1 * n2) as f64 / (n1 + n2) as f64 * linalg::quad_form(&inv, &m);
    let (statistic, df, p_value) = match restriction.direction {
        None => (w, restriction.r(), chi2_sf(w, restriction.r() as f64)),
        Some(dir) => {
            let s = if m[0] == 0.0 { 0.0 } else { m[0].signum() * w.sqrt() };
            (s, 1, dir.p_value(s))
        }
    };
    Ok(TwoSampleReport {
        hypothesis: restriction.description.clone(),
        alpha_dpd: fit1.alpha,
        n1,
        n2,
        theta1: fit1.theta_hat.clone(),
        theta2: fit2.theta_hat.clone(),
        se1: fit1.std_errors(),
        se2: fit2.std_errors(),
        statistic,
        df,
        direction: restriction.direction,
        p_value: p_value.clamp(0.0, 1.0),
        pooled_condition: linalg::condition_number(&tilde),
        pooled_sigma: tilde,
        residual_flag: fit1.residual_flag || fit2.residual_flag,
    })
}

/// Signed-root test of an `r = 1` restriction against `direction`.
pub fn one_sided_wald(fit1: &FitResult, fit2: &FitResult, restriction: &TwoSampleRestriction, direction: Direction) -> Result<TwoSampleReport> {
    let r = restriction.clone().with_direction(direction)?;
    two_sample_wald(fit1, fit2, &r)
}

/// Normal approximation to the power at fixed `(θ₁, θ₂)` off the null:
/// `1 − Φ(√(N/(n₁n₂)) / (2√l) · (χ²_{r,level} − (n₁n₂/N) l))` with
/// `l = mᵀΣ̃⁻¹m`.
#[allow(clippy::too_many_arguments)]
pub fn two_sample_power_approx(
    theta1: &[f64],
    theta2: &[f64],
    restriction: &TwoSampleRestriction,
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    n1: usize,
    n2: usize,
    level: f64,
) -> Result<f64> {
    check_level(level)?;
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument("arm sizes must be positive".into()));
    }
    let (m, m1, m2) = restriction.evaluate(theta1, theta2)?;
    let tilde = pooled_sigma(&m1, sigma1, n1, &m2, sigma2, n2);
    let l = linalg::quad_form(&linalg::inverse(&tilde, "pooled covariance")?, &m);
    if !(l > 0.0) {
        return Err(Error::NullViolated(
            "power approximation is undefined at a point satisfying the null".into(),
        ));
    }
    let h = (n1 * n2) as f64 / (n1 + n2) as f64;
    let crit = chi2_critical(level, restriction.r() as f64);
    Ok(normal_sf((1.0 / h).sqrt() / (2.0 * l.sqrt()) * (crit - h * l)))
}

/// Asymptotic power under `θ_i = θ_{i0} + Δ_i/√n_i` with `n₁/N → n1_share`.
///
/// `√(n₁n₂/N)·m` tends to `√(1−ω₁) M₁ᵀΔ₁ + √ω₁ M₂ᵀΔ₂` and `Σ̃` to
/// `(1−ω₁)M₁ᵀΣ₁M₁ + ω₁M₂ᵀΣ₂M₂`, giving a `χ²_r(ncp)` limit.
#[allow(clippy::too_many_arguments)]
pub fn two_sample_contiguous(
    delta1: &[f64],
    delta2: &[f64],
    restriction: &TwoSampleRestriction,
    theta10: &[f64],
    theta20: &[f64],
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    n1_share: f64,
    level: f64,
) -> Result<f64> {
    check_level(level)?;
    let ncp = two_sample_ncp(delta1, delta2, restriction, theta10, theta20, sigma1, sigma2, n1_share)?;
    let r = restriction.r() as f64;
    Ok(noncentral_chi2_sf(chi2_critical(level, r), r, ncp))
}

/// Noncentrality of the contiguous limit in [`two_sample_contiguous`].
#[allow(clippy::too_many_arguments)]
pub fn two_sample_ncp(
    delta1: &[f64],
    delta2: &[f64],
    restriction: &TwoSampleRestriction,
    theta10: &[f64],
    theta20: &[f64],
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    n1_share: f64,
) -> Result<f64> {
    if !(n1_share > 0.0 && n1_share < 1.0) {
        return Err(Error::InvalidArgument(format!("arm share must lie in (0, 1), got {n1_share}")));
    }
    if delta1.len() != restriction.p() || delta2.len() != restriction.p() {
        return Err(Error::InvalidArgument("shifts have the wrong dimension".into()));
    }
    let (_, m1, m2) = restriction.evaluate(theta10, theta20)?;
    let w1 = 1.0 - n1_share;
    let w = m1.transpose() * DVector::from_column_slice(delta1) * w1.sqrt()
        + m2.transpose() * DVector::from_column_slice(delta2) * n1_share.sqrt();
    let tilde = linalg::symmetrize(&(m1.transpose() * sigma1 * &m1 * w1 + m2.transpose() * sigma2 * &m2 * n1_share));
    Ok(linalg::quad_form(&linalg::inverse(&tilde, "pooled covariance")?, &w).max(0.0))
}

fn short(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for TwoSampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{} (alpha = {}): statistic {:.4}, p = {:.4}; arm 1 ({}), arm 2 ({})",
            self.hypothesis,
            self.direction.map(|d| format!(" vs {d}")).unwrap_or_default(),
            self.alpha_dpd,
            self.statistic,
            self.p_value,
            short(&self.theta1),
            short(&self.theta2)
        )
    }
}
