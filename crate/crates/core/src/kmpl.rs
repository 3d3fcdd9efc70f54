//! Kaplan–Meier product-limit estimate of the lifetime distribution and the
//! empirical sub-distribution functions of the observed pairs.
//!
//! When the largest observation is censored the product-limit estimate is
//! defective. The raw jumps and the leftover mass are both kept; for
//! integration the leftover mass is placed on the largest observed time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::CensoredSample;
use crate::error::{Error, Result};

/// Residual mass above which a fit is flagged in reports.
pub const RESIDUAL_MASS_FLAG: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmplFit {
    /// Ascending distinct event times.
    pub support: Vec<f64>,
    /// `Ĝ_X` at each support point.
    pub cdf_values: Vec<f64>,
    /// Raw product-limit mass at each support point.
    pub jumps: Vec<f64>,
    pub total_mass: f64,
    /// `1 − total_mass`, nonzero only when the largest observation is censored.
    pub residual_mass: f64,
    /// Largest observed time, which receives the residual mass.
    pub tail_point: f64,
}

impl KmplFit {
    /// Right-continuous `Ĝ_X(t)` (raw, possibly defective).
    pub fn cdf(&self, t: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cdf_values[k - 1]
        }
    }

    /// Probability points `(x, w)` summing to one, with the residual mass
    /// placed on the tail point.
    pub fn weights(&self) -> Vec<(f64, f64)> {
        let mut w: Vec<(f64, f64)> = self
            .support
            .iter()
            .copied()
            .zip(self.jumps.iter().copied())
            .collect();
        if self.residual_mass > 0.0 {
            match w.last_mut() {
                Some(last) if last.0 == self.tail_point => last.1 += self.residual_mass,
                _ => w.push((self.tail_point, self.residual_mass)),
            }
        }
        w
    }

    pub fn residual_flagged(&self) -> bool {
        self.residual_mass > RESIDUAL_MASS_FLAG
    }

    /// Write `time, cdf, jump, cum_hazard, log_time, log_cum_hazard` rows,
    /// where `cum_hazard = −log(1 − Ĝ_X)`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "cdf", "jump", "cum_hazard", "log_time", "log_cum_hazard"])?;
        for ((t, g), j) in self.support.iter().zip(&self.cdf_values).zip(&self.jumps) {
            let h = -(-g).ln_1p();
            w.write_record([t, g, j, &h, &t.ln(), &h.ln()].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Product-limit estimate `Ĝ_X(t) = 1 − Π_{Z_(i) ≤ t} [1 − δ_[i]/(n − i + 1)]`.
pub fn kmpl_fit(sample: &CensoredSample) -> KmplFit {
    let obs = sample.observations();
    let n = obs.len();
    let mut surv = 1.0;
    let mut support: Vec<f64> = Vec::new();
    let mut cdf_values: Vec<f64> = Vec::new();
    let mut jumps: Vec<f64> = Vec::new();
    for (i, o) in obs.iter().enumerate() {
        if !o.delta {
            continue;
        }
        let at_risk = (n - i) as f64;
        let next = surv * (1.0 - 1.0 / at_risk);
        let jump = surv - next;
        surv = next;
        if support.last() == Some(&o.z) {
            *jumps.last_mut().unwrap() += jump;
            *cdf_values.last_mut().unwrap() = 1.0 - surv;
        } else {
            support.push(o.z);
            jumps.push(jump);
            cdf_values.push(1.0 - surv);
        }
    }
    let total_mass: f64 = jumps.iter().sum();
    let last_is_event = obs[n - 1].delta;
    let residual_mass = if last_is_event { 0.0 } else { surv.max(0.0) };
    KmplFit {
        support,
        cdf_values,
        jumps,
        total_mass: if last_is_event { 1.0 } else { total_mass },
        residual_mass,
        tail_point: obs[n - 1].z,
    }
}

/// `Σ_j w_j φ(x_j)` over the tail-completed weights.
pub fn km_integral<F>(fit: &KmplFit, mut phi: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut sum = 0.0;
    for (x, w) in fit.weights() {
        let v = phi(x);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("integrand at support point {x}")));
        }
        sum += w * v;
    }
    Ok(sum)
}

/// Empirical distribution functions of `Z`, of censored `Z` and of uncensored `Z`.
#[derive(Debug, Clone)]
pub struct SubdistEmpiricals {
    n: usize,
    all: Vec<f64>,
    censored: Vec<f64>,
    events: Vec<f64>,
}

fn count_le(sorted: &[f64], z: f64) -> usize {
    sorted.partition_point(|&v| v <= z)
}

impl SubdistEmpiricals {
    /// `Ĝ_Z(z) = (1/n) Σ I(Z_i <= z)`.
    pub fn g_z(&self, z: f64) -> f64 {
        count_le(&self.all, z) as f64 / self.n as f64
    }

    /// `Ĝ_{Z,0}(z) = (1/n) Σ I(Z_i <= z, δ_i = 0)`.
    pub fn g_z0(&self, z: f64) -> f64 {
        count_le(&self.censored, z) as f64 / self.n as f64
    }

    /// `Ĝ_{Z,1}(z) = (1/n) Σ I(Z_i <= z, δ_i = 1)`.
    pub fn g_z1(&self, z: f64) -> f64 {
        count_le(&self.events, z) as f64 / self.n as f64
    }

    /// Counts behind the three functions: `(all, censored, events)` at or below `z`.
    pub fn counts(&self, z: f64) -> (usize, usize, usize) {
        (count_le(&self.all, z), count_le(&self.censored, z), count_le(&self.events, z))
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

pub fn subdist_empiricals(sample: &CensoredSample) -> SubdistEmpiricals {
    let obs = sample.observations();
    SubdistEmpiricals {
        n: obs.len(),
        all: obs.iter().map(|o| o.z).collect(),
        censored: obs.iter().filter(|o| !o.delta).map(|o| o.z).collect(),
        events: obs.iter().filter(|o| o.delta).map(|o| o.z).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample(p: &[(f64, u8)]) -> CensoredSample {
        CensoredSample::from_pairs(p).unwrap()
    }

    #[test]
    fn no_censoring_is_ecdf() {
        let f = kmpl_fit(&sample(&[(1.0, 1), (2.0, 1), (3.0, 1)]));
        for j in &f.jumps {
            assert_relative_eq!(*j, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_relative_eq!(f.cdf(2.5), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(f.cdf(0.5), 0.0);
    }

    #[test]
    fn hand_product_limit() {
        let f = kmpl_fit(&sample(&[(1.0, 1), (2.0, 0), (3.0, 1)]));
        assert_eq!(f.support, vec![1.0, 3.0]);
        assert_relative_eq!(f.cdf(1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.cdf(2.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.cdf(3.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(f.jumps[1], 2.0 / 3.0, epsilon = 1e-15);
        let m = km_integral(&f, |x| x).unwrap();
        assert_relative_eq!(m, 7.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn tail_reassignment() {
        let f = kmpl_fit(&sample(&[(1.0, 1), (2.0, 1), (3.0, 0)]));
        assert_relative_eq!(f.total_mass, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.residual_mass, 1.0 / 3.0, epsilon = 1e-15);
        let w = f.weights();
        assert_eq!(w.last().unwrap().0, 3.0);
        assert_relative_eq!(w.last().unwrap().1, 1.0 / 3.0, epsilon = 1e-15);
        assert!(f.residual_flagged());
        assert_relative_eq!(km_integral(&f, |_| 1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tied_events_aggregate() {
        let f = kmpl_fit(&sample(&[(1.0, 1), (1.0, 1), (1.0, 0), (2.0, 1)]));
        assert_eq!(f.support, vec![1.0, 2.0]);
        assert_relative_eq!(f.jumps[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(f.jumps[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn km_integral_rejects_non_finite() {
        let f = kmpl_fit(&sample(&[(0.0, 1), (1.0, 1)]));
        assert!(km_integral(&f, |x| 1.0 / x).is_err());
    }

    #[test]
    fn subdistribution_counts() {
        let e = subdist_empiricals(&sample(&[(1.0, 1), (2.0, 0)]));
        assert_eq!(e.g_z1(1.5), 0.5);
        assert_eq!(e.g_z0(1.5), 0.0);
        assert_eq!(e.g_z(2.0), 1.0);
        assert_eq!(e.g_z(0.5), 0.0);
    }

    #[test]
    fn csv_output_has_log_log_columns() {
        let f = kmpl_fit(&sample(&[(1.0, 1), (2.0, 0), (3.0, 1), (4.0, 0)]));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,cdf,jump,cum_hazard,log_time,log_cum_hazard\n"));
        assert_eq!(text.lines().count(), 3);
    }

    fn arb_sample() -> impl Strategy<Value = CensoredSample> {
        prop::collection::vec((0u16..50, any::<bool>()), 1..60).prop_map(|v| {
            CensoredSample::from_pairs(&v.iter().map(|&(z, d)| (z as f64 / 7.0, d as u8)).collect::<Vec<_>>())
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn zero_censoring_equals_ecdf(times in prop::collection::vec(0.0f64..10.0, 1..80)) {
            let s = CensoredSample::uncensored(&times).unwrap();
            let f = kmpl_fit(&s);
            let n = times.len() as f64;
            for &t in &times {
                let ecdf = times.iter().filter(|&&v| v <= t).count() as f64 / n;
                prop_assert!((f.cdf(t) - ecdf).abs() < 1e-12);
            }
            prop_assert!((f.total_mass - 1.0).abs() < 1e-12);
        }

        #[test]
        fn kmpl_invariants(s in arb_sample()) {
            let f = kmpl_fit(&s);
            prop_assert!(f.jumps.iter().all(|&j| j >= 0.0));
            prop_assert!(f.cdf_values.windows(2).all(|w| w[0] <= w[1] + 1e-15));
            prop_assert!(f.total_mass <= 1.0 + 1e-12);
            let total: f64 = f.weights().iter().map(|w| w.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            // jumps only at event times
            for t in &f.support {
                prop_assert!(s.observations().iter().any(|o| o.delta && o.z == *t));
            }
        }

        #[test]
        fn subdistributions_add_up(s in arb_sample(), queries in prop::collection::vec(-1.0f64..9.0, 1..50)) {
            let e = subdist_empiricals(&s);
            for q in queries {
                let (all, c0, c1) = e.counts(q);
                prop_assert_eq!(all, c0 + c1);
                prop_assert!((e.g_z(q) - e.g_z0(q) - e.g_z1(q)).abs() < 1e-15);
            }
        }

        #[test]
        fn km_integral_is_linear(s in arb_sample(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let f = kmpl_fit(&s);
            let lhs = km_integral(&f, |x| a * x + b * x * x).unwrap();
            let rhs = a * km_integral(&f, |x| x).unwrap() + b * km_integral(&f, |x| x * x).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
