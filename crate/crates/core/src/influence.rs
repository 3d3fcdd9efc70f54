//! Influence diagnostics at the model.
//!
//! The influence function of an M-estimator at `F_θ₀` is `Λ⁻¹ψ(t; θ₀)`. For
//! the Exponential MLE this is `θ₀ − t`, so the sign is opposite to the
//! finite-sample sensitivity `n(θ̂(sample ∪ {t}) − θ̂(sample))`. Everything
//! here uses that convention.
//!
//! The first-order influence of a Wald functional vanishes at the null, so the
//! second-order `IF₂ = 2 IFᵀ M (Σ*)⁻¹ Mᵀ IF` with `Σ* = MᵀΣM` is reported. Power
//! and level influence functions come from the noncentral χ² series.
//!
//! Unless a covariance is supplied, `Σ` is the uncensored asymptotic
//! covariance `K_α⁻¹(K_{2α} − J_αJ_αᵀ)K_α⁻¹`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{check_level, Restriction};
use crate::linalg;
use crate::model::{psi_with, uncensored_sigma, weighted_integrals, Family, WeightedIntegrals};
use crate::quadrature::QuadratureConfig;
use crate::special::{chi2_critical, chi2_sf};
use crate::twosample::TwoSampleRestriction;

/// Omitted Poisson tail mass when truncating mixture series.
pub const SERIES_TAIL: f64 = 1e-12;

/// Poisson(`s/2`) probabilities `C_v`, `v = 0, 1, …`, truncated once the
/// omitted tail is below [`SERIES_TAIL`] of the retained mass.
///
/// Terms are built by ratio recurrence outward from the mode and normalized
/// over the retained terms, so the large exponent of the mode's probability
/// never enters as a rounding error.
pub fn noncentral_weights(s: f64) -> Result<Vec<f64>> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("noncentrality must be finite and nonnegative, got {s}")));
    }
    if s == 0.0 {
        return Ok(vec![1.0]);
    }
    let lambda = 0.5 * s;
    let mode = lambda.floor() as usize;
    let mut out = vec![0.0; mode + 1];
    out[mode] = 1.0;
    for v in (1..=mode).rev() {
        out[v - 1] = out[v] * v as f64 / lambda;
    }
    let mut total: f64 = out.iter().sum();
    let mut v = mode;
    loop {
        let next = out[v] * lambda / (v + 1) as f64;
        // tail beyond v is bounded by a geometric series with this ratio
        let ratio = lambda / (v + 2) as f64;
        if next / (1.0 - ratio) < SERIES_TAIL * total {
            break;
        }
        out.push(next);
        total += next;
        v += 1;
    }
    for w in &mut out {
        *w /= total;
    }
    Ok(out)
}

/// `P(χ²_df(ncp) > x)` as a Poisson mixture of central tails.
pub fn noncentral_chi2_sf(x: f64, df: f64, ncp: f64) -> f64 {
    match noncentral_weights(ncp.max(0.0)) {
        Ok(w) => w
            .iter()
            .enumerate()
            .map(|(v, c)| c * chi2_sf(x, df + 2.0 * v as f64))
            .sum::<f64>()
            .clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// `K*_r(s)`, the derivative factor of the contiguous power.
///
/// Pairing the two halves of each printed summand by Poisson index gives
/// `Σ_v C_v(s) [P(χ²_{r+2v+2} > c) − P(χ²_{r+2v} > c)]`, which is finite for
/// all `s ≥ 0`; at `s = 0` only `v = 0` remains.
pub fn k_star(s: f64, r: usize, level: f64) -> Result<f64> {
    check_level(level)?;
    let r = r as f64;
    let c = chi2_critical(level, r);
    let w = noncentral_weights(s)?;
    Ok(w.iter()
        .enumerate()
        .map(|(v, cv)| {
            let k = r + 2.0 * v as f64;
            cv * (chi2_sf(c, k + 2.0) - chi2_sf(c, k))
        })
        .sum())
}

/// `PIF = K*_r(S₀d) S₀ IF` with `S₀ = dᵀM(Σ*)⁻¹Mᵀ`.
pub fn pif_from_parts(influence: &DVector<f64>, big_m: &DMatrix<f64>, sigma_star: &DMatrix<f64>, d: &DVector<f64>, level: f64) -> Result<f64> {
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument(
            "power influence needs a nonzero shift; use the level influence for d = 0".into(),
        ));
    }
    let inv = linalg::inverse(sigma_star, "M^T Sigma M")?;
    let s0 = d.transpose() * big_m * inv * big_m.transpose();
    let s = (&s0 * d)[(0, 0)].max(0.0);
    Ok(k_star(s, big_m.ncols(), level)? * (&s0 * influence)[(0, 0)])
}

/// Model-level quantities for influence computations at `(θ₀, α)`.
#[derive(Debug, Clone)]
pub struct InfluenceModel {
    pub family: Family,
    pub theta0: Vec<f64>,
    pub alpha: f64,
    integrals: WeightedIntegrals,
    lambda_inv: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl InfluenceModel {
    pub fn new(family: Family, theta0: &[f64], alpha: f64) -> Result<Self> {
        let cfg = QuadratureConfig::default();
        let sigma = uncensored_sigma(family.model(), theta0, alpha, &cfg)?;
        Self::with_sigma(family, theta0, alpha, sigma)
    }

    /// Use a given asymptotic covariance (for example one estimated under
    /// censoring) in the test-level diagnostics.
    pub fn with_sigma(family: Family, theta0: &[f64], alpha: f64, sigma: DMatrix<f64>) -> Result<Self> {
        let model = family.model();
        let integrals = weighted_integrals(model, theta0, alpha, &QuadratureConfig::default())?;
        let lambda = crate::model::check_lambda(integrals.k.clone())?;
        let lambda_inv = linalg::inverse(&lambda, "lambda")?;
        if sigma.shape() != (model.dim(), model.dim()) {
            return Err(Error::InvalidArgument("sigma has the wrong dimension".into()));
        }
        Ok(Self {
            family,
            theta0: theta0.to_vec(),
            alpha,
            integrals,
            lambda_inv,
            sigma,
        })
    }

    pub fn psi(&self, t: f64) -> Result<DVector<f64>> {
        check_point(t)?;
        Ok(psi_with(self.family.model(), &self.theta0, &self.integrals, t))
    }

    /// `IF(t) = Λ⁻¹ψ(t; θ₀)`.
    pub fn if_at(&self, t: f64) -> Result<DVector<f64>> {
        let v = &self.lambda_inv * self.psi(t)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("influence at t = {t}")));
        }
        Ok(v)
    }

    fn null_parts(&self, restriction: &Restriction) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (m, big_m) = restriction.evaluate(&self.theta0)?;
        if m.amax() > 1e-10 * (1.0 + self.theta0.iter().fold(0.0_f64, |a, b| a.max(b.abs()))) {
            return Err(Error::NullViolated(format!(
                "theta0 = ({}) does not satisfy `{}`",
                crate::hypothesis::join(&self.theta0),
                restriction.description
            )));
        }
        let star = linalg::symmetrize(&(big_m.transpose() * &self.sigma * &big_m));
        Ok((big_m, star))
    }

    /// `IF₂(t) = 2 IFᵀ M (Σ*)⁻¹ Mᵀ IF` of the Wald functional.
    pub fn if2_wald(&self, restriction: &Restriction, t: f64) -> Result<f64> {
        let (big_m, star) = self.null_parts(restriction)?;
        let inv = linalg::inverse(&star, "M^T Sigma M")?;
        let q = big_m.transpose() * self.if_at(t)?;
        Ok(2.0 * linalg::quad_form(&inv, &q))
    }

    /// Power influence function under the shift `d`.
    pub fn pif(&self, restriction: &Restriction, d: &[f64], t: f64, level: f64) -> Result<f64> {
        let (big_m, star) = self.null_parts(restriction)?;
        pif_from_parts(&self.if_at(t)?, &big_m, &star, &DVector::from_column_slice(d), level)
    }

    /// Level influence function: zero whenever the IF is finite at `t`.
    pub fn lif(&self, restriction: &Restriction, t: f64, level: f64) -> Result<f64> {
        check_level(level)?;
        self.null_parts(restriction)?;
        self.if_at(t)?;
        Ok(0.0)
    }

    /// Contiguous power with the shift perturbed by `ε·IF(t)`.
    pub fn contaminated_power(&self, restriction: &Restriction, d: &[f64], t: f64, eps: f64, level: f64) -> Result<f64> {
        check_level(level)?;
        let (big_m, star) = self.null_parts(restriction)?;
        let inv = linalg::inverse(&star, "M^T Sigma M")?;
        let shifted = DVector::from_column_slice(d) + self.if_at(t)? * eps;
        let ncp = linalg::quad_form(&inv, &(big_m.transpose() * shifted));
        let r = restriction.r() as f64;
        Ok(noncentral_chi2_sf(chi2_critical(level, r), r, ncp))
    }

    pub fn curve(&self, grid: &[f64]) -> Result<IfCurve> {
        let values = grid.iter().map(|&t| Ok(self.if_at(t)?.as_slice().to_vec())).collect::<Result<_>>()?;
        Ok(IfCurve {
            family: self.family,
            theta0: self.theta0.clone(),
            alpha: self.alpha,
            kind: IfKind::Estimator,
            columns: self.family.param_names().iter().map(|s| s.to_string()).collect(),
            t: grid.to_vec(),
            values,
        })
    }

    pub fn if2_curve(&self, restriction: &Restriction, grid: &[f64]) -> Result<IfCurve> {
        let values = grid.iter().map(|&t| Ok(vec![self.if2_wald(restriction, t)?])).collect::<Result<_>>()?;
        Ok(self.scalar_curve(IfKind::Wald2, grid, values))
    }

    pub fn pif_curve(&self, restriction: &Restriction, d: &[f64], grid: &[f64], level: f64) -> Result<IfCurve> {
        let values = grid.iter().map(|&t| Ok(vec![self.pif(restriction, d, t, level)?])).collect::<Result<_>>()?;
        Ok(self.scalar_curve(IfKind::Power, grid, values))
    }

    fn scalar_curve(&self, kind: IfKind, grid: &[f64], values: Vec<Vec<f64>>) -> IfCurve {
        IfCurve {
            family: self.family,
            theta0: self.theta0.clone(),
            alpha: self.alpha,
            kind,
            columns: vec!["value".into()],
            t: grid.to_vec(),
            values,
        }
    }
}

fn check_point(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("contamination point must be positive, got {t}")))
    }
}

/// IF of the MDPDE at the model.
pub fn if_estimator(family: Family, theta0: &[f64], alpha: f64, t: f64) -> Result<DVector<f64>> {
    InfluenceModel::new(family, theta0, alpha)?.if_at(t)
}

/// Second-order IF of the one-sample Wald functional.
pub fn if2_wald(family: Family, theta0: &[f64], alpha: f64, restriction: &Restriction, t: f64) -> Result<f64> {
    InfluenceModel::new(family, theta0, alpha)?.if2_wald(restriction, t)
}

/// Power influence function of the one-sample Wald test.
pub fn pif(family: Family, theta0: &[f64], alpha: f64, restriction: &Restriction, d: &[f64], t: f64, level: f64) -> Result<f64> {
    InfluenceModel::new(family, theta0, alpha)?.pif(restriction, d, t, level)
}

/// Second-order IF of the two-sample Wald functional
/// `mᵀ Σ̃⁻¹ m` with `Σ̃ = ω₁M₁ᵀΣ₁M₁ + ω₂M₂ᵀΣ₂M₂` and `ω₁ = n1_share`.
///
/// With one contamination point the single-arm form
/// `2 IF_iᵀ M_i Σ̃⁻¹ M_iᵀ IF_i` is returned; with both,
/// `2 QᵀΣ̃⁻¹Q` with `Q = M₁ᵀIF₁(t₁) + M₂ᵀIF₂(t₂)`.
pub fn if2_two_sample(
    arm1: &InfluenceModel,
    arm2: &InfluenceModel,
    restriction: &TwoSampleRestriction,
    n1_share: f64,
    t1: Option<f64>,
    t2: Option<f64>,
) -> Result<f64> {
    if !(n1_share > 0.0 && n1_share < 1.0) {
        return Err(Error::InvalidArgument(format!("arm share must lie in (0, 1), got {n1_share}")));
    }
    if arm1.alpha != arm2.alpha {
        return Err(Error::InvalidArgument("arms must share the tuning parameter".into()));
    }
    let (m, m1, m2) = restriction.evaluate(&arm1.theta0, &arm2.theta0)?;
    let scale = 1.0 + arm1.theta0.iter().chain(&arm2.theta0).fold(0.0_f64, |a, b| a.max(b.abs()));
    if m.amax() > 1e-10 * scale {
        return Err(Error::NullViolated(format!("arms do not satisfy `{}`", restriction.description)));
    }
    let tilde = linalg::symmetrize(
        &(m1.transpose() * &arm1.sigma * &m1 * n1_share + m2.transpose() * &arm2.sigma * &m2 * (1.0 - n1_share)),
    );
    let inv = linalg::inverse(&tilde, "pooled covariance")?;
    let mut q = DVector::zeros(restriction.r());
    match (t1, t2) {
        (None, None) => {
            return Err(Error::InvalidArgument("at least one contamination point is required".into()));
        }
        (a, b) => {
            if let Some(t) = a {
                q += m1.transpose() * arm1.if_at(t)?;
            }
            if let Some(t) = b {
                q += m2.transpose() * arm2.if_at(t)?;
            }
        }
    }
    Ok(2.0 * linalg::quad_form(&inv, &q))
}

/// Which functional a curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IfKind {
    Estimator,
    Wald2,
    Power,
}

/// Influence values over a grid of contamination points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfCurve {
    pub family: Family,
    pub theta0: Vec<f64>,
    pub alpha: f64,
    pub kind: IfKind,
    pub columns: Vec<String>,
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl IfCurve {
    /// Largest absolute value over the grid and all columns.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |a, b| a.max(b.abs()))
    }

    /// Columns `t, <columns…>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.t.iter().zip(&self.values) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read back the grid and values written by [`IfCurve::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<f64>, Vec<Vec<f64>>)> {
        let mut rd = csv::Reader::from_reader(reader);
        let columns: Vec<String> = rd.headers()?.iter().skip(1).map(str::to_string).collect();
        let (mut t, mut values) = (Vec::new(), Vec::new());
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                rec.get(j).and_then(|s| s.parse().ok()).ok_or_else(|| Error::BadCell {
                    row: i + 1,
                    column: j.to_string(),
                    message: "not a number".into(),
                })
            };
            t.push(parse(0)?);
            values.push((1..=columns.len()).map(parse).collect::<Result<Vec<_>>>()?);
        }
        Ok((columns, t, values))
    }
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadratureConfig};
    use crate::special::{normal_cdf, normal_sf};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exp_if(theta: f64, alpha: f64, t: f64) -> f64 {
        let a = alpha;
        (1.0 + a).powi(3) / (1.0 + a * a) * ((theta - t) * (-a * t / theta).exp() - a * theta / (1.0 + a).powi(2))
    }

    /// `P(χ²_k(λ) > c)` from `(Z + √λ)² + χ²_{k−1}` by quadrature over `Z`.
    fn ncx2_sf_quadrature(c: f64, k: f64, lambda: f64) -> f64 {
        let mu = lambda.sqrt();
        let cfg = QuadratureConfig::with_tol(1e-13);
        let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if k == 1.0 {
            return normal_sf(c.sqrt() - mu) + normal_cdf(-c.sqrt() - mu);
        }
        // split at ±√c where the inner tail changes form
        let rc = c.sqrt();
        let inner = |z: f64| {
            let x = z + mu;
            dens(z) * chi2_sf(c - x * x, k - 1.0)
        };
        let lo = -mu - 40.0;
        let hi = -mu + 40.0;
        let mut pts = [lo, -rc - mu, rc - mu, hi];
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.windows(2)
            .map(|w| integrate(inner, w[0].max(lo), w[1].min(hi), &cfg).unwrap())
            .sum()
    }

    #[test]
    fn weights_degenerate_and_normalized() {
        assert_eq!(noncentral_weights(0.0).unwrap(), vec![1.0]);
        for s in [1e-6, 0.5, 5.0, 50.0, 3000.0, 1e5] {
            let w = noncentral_weights(s).unwrap();
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "s = {s}: {total}");
        }
        assert!(noncentral_weights(-1.0).is_err());
    }

    #[test]
    fn weights_match_poisson_pmf() {
        use statrs::distribution::{Discrete, Poisson};
        for s in [0.3, 7.0, 61.0] {
            let pois = Poisson::new(0.5 * s).unwrap();
            for (v, w) in noncentral_weights(s).unwrap().iter().enumerate() {
                let p = pois.pmf(v as u64);
                assert!((w - p).abs() <= 1e-12 * p.max(1e-300) + 1e-300, "s {s} v {v}: {w} vs {p}");
            }
        }
    }

    #[test]
    fn series_matches_quadrature() {
        for (k, lambda) in [(1.0, 5.0), (2.0, 0.5), (2.0, 5.0), (3.0, 12.0), (1.0, 0.3), (4.0, 50.0)] {
            for c in [1.0, 3.841458820694124, 9.0] {
                let series = noncentral_chi2_sf(c, k, lambda);
                let quad = ncx2_sf_quadrature(c, k, lambda);
                assert!((series - quad).abs() < 1e-8, "k {k} λ {lambda} c {c}: {series} vs {quad}");
            }
        }
    }

    #[test]
    fn k_star_is_twice_power_slope() {
        for s in [0.0, 0.4, 3.0, 20.0] {
            let h = 1e-5;
            let c = chi2_critical(0.05, 2.0);
            let lo = if s == 0.0 { 0.0 } else { s - h };
            let slope = (noncentral_chi2_sf(c, 2.0, s + h) - noncentral_chi2_sf(c, 2.0, lo)) / (s + h - lo);
            assert_relative_eq!(k_star(s, 2, 0.05).unwrap(), 2.0 * slope, max_relative = 1e-4);
        }
    }

    #[test]
    fn exponential_mle_if_is_theta_minus_t() {
        let im = InfluenceModel::new(Family::Exponential, &[2.0], 0.0).unwrap();
        for t in [0.01, 1.0, 2.0, 7.5, 100.0] {
            assert_relative_eq!(im.if_at(t).unwrap()[0], 2.0 - t, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_if_matches_closed_form_via_quadrature() {
        let cfg = QuadratureConfig::default();
        let model = Family::Exponential.model();
        for theta in [0.5, 1.0, 3.0] {
            for alpha in [0.1, 0.5, 1.0] {
                let w = crate::model::weighted_integrals_quadrature(model, &[theta], alpha, &cfg).unwrap();
                for t in [0.05, 0.7, 2.0, 10.0] {
                    let psi = psi_with(model, &[theta], &w, t)[0];
                    let v = psi / w.k[(0, 0)];
                    assert!((v - exp_if(theta, alpha, t)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn if2_exponential_two_paths() {
        let theta = 1.7;
        let r = Restriction::simple(vec![theta]).unwrap();
        let im = InfluenceModel::new(Family::Exponential, &[theta], 0.0).unwrap();
        for t in [0.1, 1.7, 5.0] {
            let direct = 2.0 * (theta - t).powi(2) / (theta * theta);
            assert_relative_eq!(im.if2_wald(&r, t).unwrap(), direct, max_relative = 1e-10);
        }
        // zero exactly where ψ vanishes
        assert!(im.if2_wald(&r, theta).unwrap().abs() < 1e-20);
    }

    #[test]
    fn if2_checks_null() {
        let im = InfluenceModel::new(Family::Weibull, &[2.0, 5.0], 0.5).unwrap();
        let r = Restriction::component(2, 1, 4.0).unwrap();
        assert!(matches!(im.if2_wald(&r, 1.0), Err(Error::NullViolated(_))));
        let ok = Restriction::component(2, 1, 5.0).unwrap();
        for t in log_grid(1e-3, 1e3, 40) {
            assert!(im.if2_wald(&ok, t).unwrap() >= 0.0);
        }
    }

    #[test]
    fn pif_matches_derivative_of_contaminated_power() {
        for (family, theta, alpha) in [
            (Family::Exponential, vec![1.0], 0.5),
            (Family::Weibull, vec![2.0, 5.0], 0.3),
            (Family::Weibull, vec![2.0, 5.0], 0.0),
        ] {
            let im = InfluenceModel::new(family, &theta, alpha).unwrap();
            let r = Restriction::simple(theta.clone()).unwrap();
            let d: Vec<f64> = theta.iter().map(|v| 0.4 * v).collect();
            for t in [0.3, 1.5, 4.0] {
                let h = 1e-4;
                let up = im.contaminated_power(&r, &d, t, h, 0.05).unwrap();
                let down = im.contaminated_power(&r, &d, t, -h, 0.05).unwrap();
                let fd = (up - down) / (2.0 * h);
                let p = im.pif(&r, &d, t, 0.05).unwrap();
                assert!((p - fd).abs() < 1e-5 * (1.0 + p.abs()), "{family} α {alpha} t {t}: {p} vs {fd}");
            }
        }
    }

    #[test]
    fn pif_zero_at_psi_root_and_rejects_zero_shift() {
        let im = InfluenceModel::new(Family::Exponential, &[1.0], 0.0).unwrap();
        let r = Restriction::simple(vec![1.0]).unwrap();
        assert!(im.pif(&r, &[0.5], 1.0, 0.05).unwrap().abs() < 1e-15);
        assert!(im.pif(&r, &[0.0], 2.0, 0.05).is_err());
        assert_eq!(im.lif(&r, 2.0, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn pif_invariant_to_psi_scaling() {
        let im = InfluenceModel::new(Family::Weibull, &[2.0, 5.0], 0.5).unwrap();
        let r = Restriction::component(2, 1, 5.0).unwrap();
        let (_, big_m) = r.evaluate(&[2.0, 5.0]).unwrap();
        let star = big_m.transpose() * &im.sigma * &big_m;
        let d = DVector::from_vec(vec![0.2, 1.0]);
        let psi = im.psi(1.3).unwrap();
        let lambda = im.lambda_inv.clone().try_inverse().unwrap();
        let base = pif_from_parts(&(lambda.clone().try_inverse().unwrap() * &psi), &big_m, &star, &d, 0.05).unwrap();
        for c in [0.1, 3.0, -2.0] {
            let scaled_if = (lambda.clone() * c).try_inverse().unwrap() * (&psi * c);
            let v = pif_from_parts(&scaled_if, &big_m, &star, &d, 0.05).unwrap();
            assert_relative_eq!(v, base, max_relative = 1e-12);
        }
    }

    #[test]
    fn boundedness_for_positive_alpha_and_growth_at_zero() {
        let coarse = log_grid(1e-3, 1e6, 1000);
        let fine = log_grid(1e-3, 1e6, 4000);
        for (family, theta) in [(Family::Exponential, vec![1.0]), (Family::Weibull, vec![2.0, 5.0])] {
            let d: Vec<f64> = theta.iter().map(|v| 0.3 * v).collect();
            let r = Restriction::simple(theta.clone()).unwrap();
            for alpha in [0.5, 1.0] {
                let im = InfluenceModel::new(family, &theta, alpha).unwrap();
                let a = im.curve(&coarse).unwrap().sup_norm();
                let b = im.curve(&fine).unwrap().sup_norm();
                assert!(a.is_finite() && (b - a).abs() <= 0.01 * b, "{family} α {alpha}: {a} vs {b}");
                let p = im.pif_curve(&r, &d, &fine, 0.05).unwrap().sup_norm();
                assert!(p.is_finite());
            }
            let im = InfluenceModel::new(family, &theta, 0.0).unwrap();
            let far = im.if_at(1e6).unwrap().amax();
            let near = im.if_at(1e3).unwrap().amax();
            assert!(far > 100.0 * near.min(1e3));
        }
    }

    #[test]
    fn two_sample_if2_vanishes_for_shared_contamination() {
        let a1 = InfluenceModel::new(Family::Weibull, &[2.0, 5.0], 0.5).unwrap();
        let a2 = a1.clone();
        let r = TwoSampleRestriction::homogeneity(2);
        for t in [0.5, 2.0, 40.0] {
            let v = if2_two_sample(&a1, &a2, &r, 0.5, Some(t), Some(t)).unwrap();
            assert_eq!(v, 0.0);
            assert!(if2_two_sample(&a1, &a2, &r, 0.5, Some(t), None).unwrap() >= 0.0);
        }
    }

    #[test]
    fn two_sample_joint_reduces_to_single_arm_at_psi_root() {
        let a1 = InfluenceModel::new(Family::Exponential, &[1.0], 0.0).unwrap();
        let a2 = a1.clone();
        let r = TwoSampleRestriction::homogeneity(1);
        let single = if2_two_sample(&a1, &a2, &r, 0.4, Some(3.0), None).unwrap();
        let joint = if2_two_sample(&a1, &a2, &r, 0.4, Some(3.0), Some(1.0)).unwrap();
        assert_relative_eq!(single, joint, max_relative = 1e-10);
    }

    #[test]
    fn curve_csv_roundtrip() {
        let im = InfluenceModel::new(Family::Weibull, &[2.0, 5.0], 0.5).unwrap();
        let c = im.curve(&log_grid(0.1, 10.0, 7)).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let (cols, t, v) = IfCurve::read_csv(&buf[..]).unwrap();
        assert_eq!(cols, vec!["scale", "shape"]);
        assert_eq!(t, c.t);
        assert_eq!(v, c.values);
    }

    proptest! {
        #[test]
        fn exponential_if_closed_form(theta in 0.3f64..5.0, alpha in 0.0f64..1.5, t in 0.01f64..20.0) {
            let v = if_estimator(Family::Exponential, &[theta], alpha, t).unwrap()[0];
            prop_assert!((v - exp_if(theta, alpha, t)).abs() < 1e-8 * (1.0 + v.abs()));
        }
    }
}
