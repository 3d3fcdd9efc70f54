//! Parametric lifetime families and the α-weighted model integrals
//!
//! ```text
//! ξ_α(θ) = ∫ f^{1+α}        J_α(θ) = ∫ u f^{1+α}        K_α(θ) = ∫ u uᵀ f^{1+α}
//! ψ_α(x; θ) = J_α(θ) − u_θ(x) f_θ(x)^α
//! ```
//!
//! Both shipped families have closed forms for these integrals (the Weibull
//! ones through gamma, digamma and trigamma). The generic path integrates on
//! the probability scale through the quantile map `x = Q(t)`, so
//! `∫ g f^{1+α} dx = ∫₀¹ g(Q(t)) f(Q(t))^α dt`; the transformed integrand
//! lives on a bounded interval and the Weibull density singularity at zero
//! (shape < 1) becomes an integrable endpoint singularity.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{integrate_vec, QuadratureConfig};
use crate::special::{digamma, trigamma};
use statrs::function::gamma::ln_gamma;

/// A lifetime distribution on `(0, ∞)` indexed by a positive parameter vector.
pub trait LifetimeModel: Send + Sync {
    fn dim(&self) -> usize;
    fn param_names(&self) -> &'static [&'static str];
    fn validate(&self, theta: &[f64]) -> Result<()>;
    fn ln_pdf(&self, theta: &[f64], x: f64) -> f64;
    fn cdf(&self, theta: &[f64], x: f64) -> f64;
    fn quantile(&self, theta: &[f64], u: f64) -> f64;
    /// Gradient of `ln f_θ(x)` in θ, written into `out`.
    fn score_into(&self, theta: &[f64], x: f64, out: &mut [f64]);

    fn pdf(&self, theta: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.ln_pdf(theta, x).exp()
        }
    }

    /// Closed-form `(ξ, J, K)` where available.
    fn closed_form_integrals(&self, _theta: &[f64], _alpha: f64) -> Option<WeightedIntegrals> {
        None
    }
}

fn check_positive(names: &[&str], theta: &[f64]) -> Result<()> {
    if theta.len() != names.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} parameter(s), got {}",
            names.len(),
            theta.len()
        )));
    }
    for (name, v) in names.iter().zip(theta) {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// Exponential distribution with mean θ.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exponential;

impl LifetimeModel for Exponential {
    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mean"]
    }

    fn validate(&self, theta: &[f64]) -> Result<()> {
        check_positive(self.param_names(), theta)
    }

    fn ln_pdf(&self, theta: &[f64], x: f64) -> f64 {
        -theta[0].ln() - x / theta[0]
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-x / theta[0]).exp_m1()
        }
    }

    fn quantile(&self, theta: &[f64], u: f64) -> f64 {
        -theta[0] * (-u).ln_1p()
    }

    fn score_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let t = theta[0];
        out[0] = (x - t) / (t * t);
    }

    fn closed_form_integrals(&self, theta: &[f64], alpha: f64) -> Option<WeightedIntegrals> {
        let t = theta[0];
        let c = 1.0 + alpha;
        let xi = t.powf(-alpha) / c;
        let j = -alpha * t.powf(-alpha - 1.0) / (c * c);
        let k = (1.0 + alpha * alpha) / (c * c * c) * t.powf(-alpha - 2.0);
        Some(WeightedIntegrals {
            alpha,
            xi,
            j: DVector::from_element(1, j),
            k: DMatrix::from_element(1, 1, k),
        })
    }
}

/// Weibull distribution with `F(x) = 1 − exp(−(x/σ)^b)`, parameters `(σ, b)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Weibull;

impl LifetimeModel for Weibull {
    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["scale", "shape"]
    }

    fn validate(&self, theta: &[f64]) -> Result<()> {
        check_positive(self.param_names(), theta)
    }

    fn ln_pdf(&self, theta: &[f64], x: f64) -> f64 {
        let (s, b) = (theta[0], theta[1]);
        let lz = (x / s).ln();
        b.ln() - s.ln() + (b - 1.0) * lz - (b * lz).exp()
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-(x / theta[0]).powf(theta[1])).exp_m1()
        }
    }

    fn quantile(&self, theta: &[f64], u: f64) -> f64 {
        theta[0] * (-(-u).ln_1p()).powf(1.0 / theta[1])
    }

    fn score_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let (s, b) = (theta[0], theta[1]);
        let lz = (x / s).ln();
        let zb = (b * lz).exp();
        out[0] = b / s * (zb - 1.0);
        out[1] = 1.0 / b + lz * (1.0 - zb);
    }

    /// With `y = (x/σ)^b` every integral is a combination of
    /// `∫ y^{s−1} (ln y)^m e^{−(1+α)y} dy`, which has digamma/trigamma forms.
    /// Finite only for `b > α/(1+α)`.
    fn closed_form_integrals(&self, theta: &[f64], alpha: f64) -> Option<WeightedIntegrals> {
        let (s, b) = (theta[0], theta[1]);
        let c = 1.0 + alpha;
        let k = c - alpha / b;
        if !(k > 0.0) {
            return None;
        }
        let ln_c = c.ln();
        // moments[m][j] = ∫ y^{k+m−1} (ln y)^j e^{−cy} dy
        let moment = |shape: f64| {
            let g = (ln_gamma(shape) - shape * ln_c).exp();
            let l = digamma(shape) - ln_c;
            [g, g * l, g * (l * l + trigamma(shape))]
        };
        let m = [moment(k), moment(k + 1.0), moment(k + 2.0)];
        let a = (b / s).powf(alpha);
        let xi = a * m[0][0];
        let j_s = a * (b / s) * (m[1][0] - m[0][0]);
        let j_b = a / b * (m[0][0] + m[0][1] - m[1][1]);
        let k_ss = a * (b / s).powi(2) * (m[2][0] - 2.0 * m[1][0] + m[0][0]);
        let k_sb = a / s * (m[1][0] - m[0][0] + 2.0 * m[1][1] - m[0][1] - m[2][1]);
        let k_bb = a / (b * b) * (m[0][0] + 2.0 * (m[0][1] - m[1][1]) + m[0][2] - 2.0 * m[1][2] + m[2][2]);
        Some(WeightedIntegrals {
            alpha,
            xi,
            j: DVector::from_vec(vec![j_s, j_b]),
            k: DMatrix::from_row_slice(2, 2, &[k_ss, k_sb, k_sb, k_bb]),
        })
    }
}

/// The shipped families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Weibull,
}

impl Family {
    pub fn model(self) -> &'static dyn LifetimeModel {
        match self {
            Family::Exponential => &Exponential,
            Family::Weibull => &Weibull,
        }
    }

    pub fn dim(self) -> usize {
        self.model().dim()
    }

    pub fn param_names(self) -> &'static [&'static str] {
        self.model().param_names()
    }

    /// Index of a parameter by name, accepting common aliases.
    pub fn param_index(self, name: &str) -> Option<usize> {
        let name = name.trim().to_ascii_lowercase();
        match (self, name.as_str()) {
            (Family::Exponential, "mean" | "theta" | "scale" | "rate_inv") => Some(0),
            (Family::Weibull, "scale" | "sigma" | "a") => Some(0),
            (Family::Weibull, "shape" | "b" | "k") => Some(1),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Exponential => "exponential",
            Family::Weibull => "weibull",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(Family::Exponential),
            "weibull" | "wei" => Ok(Family::Weibull),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

/// `ξ_α`, `J_α` and `K_α` at a fixed `(θ, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedIntegrals {
    pub alpha: f64,
    pub xi: f64,
    pub j: DVector<f64>,
    pub k: DMatrix<f64>,
}

/// Score vector `u_θ(x)`; requires `x > 0`.
pub fn score(model: &dyn LifetimeModel, theta: &[f64], x: f64) -> Result<DVector<f64>> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "score needs a positive finite point, got {x}"
        )));
    }
    model.validate(theta)?;
    let mut out = DVector::zeros(model.dim());
    model.score_into(theta, x, out.as_mut_slice());
    Ok(out)
}

/// `(ξ_α, J_α, K_α)`, closed form when the model offers one.
pub fn weighted_integrals(
    model: &dyn LifetimeModel,
    theta: &[f64],
    alpha: f64,
    cfg: &QuadratureConfig,
) -> Result<WeightedIntegrals> {
    check_alpha(alpha)?;
    model.validate(theta)?;
    match model.closed_form_integrals(theta, alpha) {
        Some(w) => Ok(w),
        None => weighted_integrals_quadrature(model, theta, alpha, cfg),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must be finite and nonnegative, got {alpha}"
        )))
    }
}

/// `(ξ_α, J_α, K_α)` by quadrature, ignoring any closed form.
pub fn weighted_integrals_quadrature(
    model: &dyn LifetimeModel,
    theta: &[f64],
    alpha: f64,
    cfg: &QuadratureConfig,
) -> Result<WeightedIntegrals> {
    check_alpha(alpha)?;
    model.validate(theta)?;
    let p = model.dim();
    let dim = 1 + p + p * p;
    let mut u = vec![0.0; p];
    let v = integrate_vec(
        |t, out| {
            let x = model.quantile(theta, t);
            if !(x > 0.0 && x.is_finite()) {
                return;
            }
            let w = if alpha == 0.0 {
                1.0
            } else {
                (alpha * model.ln_pdf(theta, x)).exp()
            };
            model.score_into(theta, x, &mut u);
            out[0] = w;
            for a in 0..p {
                out[1 + a] = u[a] * w;
                for b in 0..p {
                    out[1 + p + a * p + b] = u[a] * u[b] * w;
                }
            }
        },
        0.0,
        1.0,
        dim,
        cfg,
    )?;
    let mut k = DMatrix::from_row_slice(p, p, &v[1 + p..]);
    k = linalg::symmetrize(&k);
    Ok(WeightedIntegrals {
        alpha,
        xi: v[0],
        j: DVector::from_row_slice(&v[1..1 + p]),
        k,
    })
}

/// `ψ_α(x; θ) = J_α − u_θ(x) f_θ(x)^α` given precomputed integrals.
pub fn psi_with(model: &dyn LifetimeModel, theta: &[f64], w: &WeightedIntegrals, x: f64) -> DVector<f64> {
    let p = model.dim();
    let mut u = vec![0.0; p];
    model.score_into(theta, x, &mut u);
    let fa = if w.alpha == 0.0 {
        1.0
    } else {
        (w.alpha * model.ln_pdf(theta, x)).exp()
    };
    DVector::from_fn(p, |i, _| w.j[i] - u[i] * fa)
}

/// The MDPDE ψ-function at a single point.
pub fn mdpde_psi(
    model: &dyn LifetimeModel,
    theta: &[f64],
    alpha: f64,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<DVector<f64>> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "psi needs a positive finite point, got {x}"
        )));
    }
    let w = weighted_integrals(model, theta, alpha, cfg)?;
    Ok(psi_with(model, theta, &w, x))
}

/// `Λ(ψ_α; θ) = ∫ ∂ψ_α/∂θ dF_θ` at the model, which equals `K_α(θ)`.
pub fn lambda_model(
    model: &dyn LifetimeModel,
    theta: &[f64],
    alpha: f64,
    cfg: &QuadratureConfig,
) -> Result<DMatrix<f64>> {
    let w = weighted_integrals(model, theta, alpha, cfg)?;
    check_lambda(w.k)
}

pub(crate) fn check_lambda(k: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = linalg::condition_number(&k);
    if !(condition <= linalg::MAX_CONDITION) {
        return Err(Error::Singular {
            what: "lambda".into(),
            condition,
        });
    }
    Ok(k)
}

/// Asymptotic covariance of the MDPDE for complete (uncensored) data at the
/// model: `K_α⁻¹ (K_{2α} − J_α J_αᵀ) K_α⁻¹`.
pub fn uncensored_sigma(
    model: &dyn LifetimeModel,
    theta: &[f64],
    alpha: f64,
    cfg: &QuadratureConfig,
) -> Result<DMatrix<f64>> {
    let w = weighted_integrals(model, theta, alpha, cfg)?;
    let w2 = weighted_integrals(model, theta, 2.0 * alpha, cfg)?;
    let kinv = linalg::inverse(&w.k, "K_alpha")?;
    let middle = &w2.k - &w.j * w.j.transpose();
    Ok(linalg::symmetrize(&(&kinv * middle * &kinv)))
}
