//! Sandwich covariance of an M-estimator under random censoring, estimated
//! from the observed pairs alone (no model for the censoring time).
//!
//! With observations in canonical order and `δ_j` the concomitant indicators:
//!
//! ```text
//! γ̂₀(Z_(i)) = exp Σ_{j<i} (1−δ_j)/(n−j)
//! γ̂(Z_(i))  = Σ_{j<i} n(1−δ_j)/(n−j)²
//! γ̂₁(Z_(i)) = 1/(n−i+1) Σ_{j>i} δ_j φ(Z_j) γ̂₀(Z_j)
//! γ̂₂(Z_(i)) = 1/n [Σ_{j≤i} δ_j γ̂(Z_j) φ(Z_j) γ̂₀(Z_j) + γ̂(Z_i) Σ_{j>i} δ_j φ(Z_j) γ̂₀(Z_j)]
//! Û_i       = φ(Z_i) γ̂₀(Z_i) δ_i + γ̂₁(Z_i)(1−δ_i) − γ̂₂(Z_i)
//! Ĉ         = (1/n) Σ Û_i Û_iᵀ,      Σ̂ = Λ⁻¹ Ĉ Λ⁻¹
//! ```
//!
//! Σ̂ is the covariance of `√n(θ̂ − θ)`; divide by `n` for the estimate itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::CensoredSample;
use crate::error::{Error, Result};
use crate::kmpl::KmplFit;
use crate::linalg;

/// Order-statistic tables `γ̂₀` and `γ̂` with the concomitant indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTables {
    pub gamma0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<bool>,
}

pub fn gamma_tables(sample: &CensoredSample) -> GammaTables {
    let obs = sample.observations();
    let n = obs.len();
    let nf = n as f64;
    let mut gamma0 = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let (mut log_g0, mut g) = (0.0f64, 0.0f64);
    for (i, o) in obs.iter().enumerate() {
        gamma0.push(log_g0.exp());
        gamma.push(g);
        if !o.delta && i + 1 < n {
            // 0-based i is the 1-based j = i + 1, so n − j = n − i − 1
            let d = (n - i - 1) as f64;
            log_g0 += 1.0 / d;
            g += nf / (d * d);
        }
    }
    GammaTables {
        gamma0,
        gamma,
        delta: obs.iter().map(|o| o.delta).collect(),
    }
}

impl GammaTables {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Suffix sums `S_i = Σ_{j>i} δ_j φ_j γ̂₀_j`.
    fn suffix(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut s = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            s[i] = acc;
            if self.delta[i] {
                acc += phi[i] * self.gamma0[i];
            }
        }
        s
    }

    /// `γ̂₁(Z_(i); φ)` for every `i`, given `φ` at the ordered observations.
    pub fn gamma1(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.len();
        self.suffix(phi)
            .into_iter()
            .enumerate()
            .map(|(i, s)| s / (n - i) as f64)
            .collect()
    }

    /// `γ̂₂(Z_(i); φ)` for every `i`.
    pub fn gamma2(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.len();
        let suffix = self.suffix(phi);
        let mut prefix = 0.0;
        (0..n)
            .map(|i| {
                if self.delta[i] {
                    prefix += self.gamma[i] * phi[i] * self.gamma0[i];
                }
                (prefix + self.gamma[i] * suffix[i]) / n as f64
            })
            .collect()
    }

    /// `Û` for one scalar component.
    pub fn u_hat_component(&self, phi: &[f64]) -> Vec<f64> {
        let g1 = self.gamma1(phi);
        let g2 = self.gamma2(phi);
        (0..self.len())
            .map(|i| {
                let first = if self.delta[i] { phi[i] * self.gamma0[i] } else { g1[i] };
                first - g2[i]
            })
            .collect()
    }
}

/// Evaluate a vector ψ at the ordered observations: an `n × p` matrix.
pub fn psi_matrix<F>(sample: &CensoredSample, p: usize, mut psi: F) -> Result<DMatrix<f64>>
where
    F: FnMut(f64) -> DVector<f64>,
{
    let obs = sample.observations();
    let mut m = DMatrix::zeros(obs.len(), p);
    for (i, o) in obs.iter().enumerate() {
        let v = psi(o.z);
        if v.len() != p {
            return Err(Error::InvalidArgument(format!("psi returned {} components, expected {p}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("psi at observation z = {}", o.z)));
        }
        m.set_row(i, &v.transpose());
    }
    Ok(m)
}

/// `Û` vectors as the rows of an `n × p` matrix, from ψ values at the ordered observations.
pub fn u_hat(tables: &GammaTables, psi_values: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = psi_values.shape();
    let mut u = DMatrix::zeros(n, p);
    for k in 0..p {
        let phi: Vec<f64> = psi_values.column(k).iter().copied().collect();
        for (i, v) in tables.u_hat_component(&phi).into_iter().enumerate() {
            u[(i, k)] = v;
        }
    }
    u
}

/// Average outer product of the rows of `u`.
pub fn c_from_u(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows() as f64;
    linalg::symmetrize(&(u.transpose() * u / n))
}

/// `Ĉ` for ψ evaluated on `sample`.
pub fn c_hat<F>(sample: &CensoredSample, p: usize, psi: F) -> Result<DMatrix<f64>>
where
    F: FnMut(f64) -> DVector<f64>,
{
    let values = psi_matrix(sample, p, psi)?;
    Ok(c_from_u(&u_hat(&gamma_tables(sample), &values)))
}

/// `Λ⁻¹ C Λ⁻¹`, symmetrized.
pub fn sigma_hat(lambda: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = linalg::inverse(lambda, "lambda")?;
    Ok(linalg::symmetrize(&(&inv * c * inv.transpose())))
}

/// Empirical `Λ̂ = ∫ ∂ψ/∂θ dĜ_X` with the θ-derivative taken by central
/// differences (step `1e-5·(1 + |θ_k|)`).
pub fn empirical_lambda<F>(fit: &KmplFit, theta: &[f64], mut psi: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64], f64) -> Result<DVector<f64>>,
{
    let p = theta.len();
    let mut lambda = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        let h = 1e-5 * (1.0 + theta[k].abs());
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[k] += h;
        minus[k] -= h;
        for (x, w) in fit.weights() {
            let d = (psi(&plus, x)? - psi(&minus, x)?) / (2.0 * h);
            for i in 0..p {
                lambda[(i, k)] += w * d[i];
            }
        }
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("empirical lambda".into()));
    }
    Ok(lambda)
}

/// Which Λ enters the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMethod {
    /// `Λ(ψ; θ̂)` computed under the fitted model.
    #[default]
    Model,
    /// KMPL-weighted average of the numerical θ-derivative of ψ.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    #[serde(with = "linalg::serde_rows")]
    pub lambda_hat: DMatrix<f64>,
    #[serde(with = "linalg::serde_rows")]
    pub c_hat: DMatrix<f64>,
    #[serde(with = "linalg::serde_rows")]
    pub sigma_hat: DMatrix<f64>,
    pub lambda_condition: f64,
}

impl CovarianceEstimate {
    pub fn new(lambda_hat: DMatrix<f64>, c_hat: DMatrix<f64>) -> Result<Self> {
        let sigma_hat = sigma_hat(&lambda_hat, &c_hat)?;
        Ok(Self {
            lambda_condition: linalg::condition_number(&lambda_hat),
            lambda_hat,
            c_hat,
            sigma_hat,
        })
    }
}
