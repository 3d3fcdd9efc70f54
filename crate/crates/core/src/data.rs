//! Censored samples, CSV ingestion and synthetic censored designs.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Family;
use crate::optim::brent_root;
use crate::quadrature::{integrate, QuadratureConfig};

/// One observed pair `(z, δ)`: `z = min(X, C)` and `δ = 1` when `X <= C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredObservation {
    pub z: f64,
    pub delta: bool,
}

impl CensoredObservation {
    pub fn new(z: f64, delta: bool) -> Result<Self> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "observed time must be finite and nonnegative, got {z}"
            )));
        }
        Ok(Self { z, delta })
    }

    pub fn event(self) -> f64 {
        if self.delta {
            1.0
        } else {
            0.0
        }
    }
}

fn canonical_order(a: &CensoredObservation, b: &CensoredObservation) -> std::cmp::Ordering {
    a.z.total_cmp(&b.z).then(b.delta.cmp(&a.delta))
}

/// A nonempty censored sample held in canonical order: ascending `z`, with
/// events before censorings at tied times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CensoredObservation>", into = "Vec<CensoredObservation>")]
pub struct CensoredSample {
    observations: Vec<CensoredObservation>,
}

impl TryFrom<Vec<CensoredObservation>> for CensoredSample {
    type Error = Error;

    fn try_from(v: Vec<CensoredObservation>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CensoredSample> for Vec<CensoredObservation> {
    fn from(s: CensoredSample) -> Self {
        s.observations
    }
}

impl CensoredSample {
    pub fn new(mut observations: Vec<CensoredObservation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Empty("a censored sample needs at least one observation".into()));
        }
        for o in &observations {
            CensoredObservation::new(o.z, o.delta)?;
        }
        observations.sort_by(canonical_order);
        Ok(Self { observations })
    }

    /// Build from `(time, status)` pairs with status in `{0, 1}`.
    pub fn from_pairs(pairs: &[(f64, u8)]) -> Result<Self> {
        let obs = pairs
            .iter()
            .map(|&(z, d)| match d {
                0 | 1 => CensoredObservation::new(z, d == 1),
                _ => Err(Error::InvalidArgument(format!("status must be 0 or 1, got {d}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(obs)
    }

    /// Uncensored sample from lifetimes.
    pub fn uncensored(times: &[f64]) -> Result<Self> {
        Self::new(
            times
                .iter()
                .map(|&z| CensoredObservation::new(z, true))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn observations(&self) -> &[CensoredObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.z)
    }

    pub fn n_events(&self) -> usize {
        self.observations.iter().filter(|o| o.delta).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.len() as f64
    }

    /// Multiply every time by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {c}")));
        }
        Self::new(
            self.observations
                .iter()
                .map(|o| CensoredObservation { z: o.z * c, delta: o.delta })
                .collect(),
        )
    }

    /// A copy with one extra observation.
    pub fn with_observation(&self, obs: CensoredObservation) -> Result<Self> {
        let mut v = self.observations.clone();
        v.push(CensoredObservation::new(obs.z, obs.delta)?);
        Self::new(v)
    }

    /// Concatenate two samples.
    pub fn pooled(&self, other: &Self) -> Self {
        let mut v = self.observations.clone();
        v.extend_from_slice(&other.observations);
        Self::new(v).expect("both inputs are valid")
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_time(cell: &str, row: usize, column: &str) -> Result<f64> {
    let bad = |message: String| Error::BadCell {
        row,
        column: column.to_string(),
        message,
    };
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| bad(format!("cannot parse `{cell}` as a number")))?;
    if !v.is_finite() {
        return Err(bad(format!("time `{cell}` is not finite")));
    }
    if v < 0.0 {
        return Err(bad(format!("time {v} is negative")));
    }
    Ok(v)
}

fn parse_status(cell: &str, row: usize, column: &str) -> Result<bool> {
    match cell.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::BadCell {
            row,
            column: column.to_string(),
            message: format!("status must be 0 or 1, got `{other}`"),
        }),
    }
}

fn read_rows<R: Read>(
    reader: R,
    time_column: &str,
    status_column: &str,
    arm_column: Option<&str>,
) -> Result<Vec<(CensoredObservation, Option<String>)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Empty("CSV has no header row".into()));
    }
    let ti = column_index(&headers, time_column)?;
    let si = column_index(&headers, status_column)?;
    let ai = arm_column.map(|a| column_index(&headers, a)).transpose()?;
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let cell = |i: usize, name: &str| {
            record.get(i).ok_or_else(|| Error::BadCell {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })
        };
        let z = parse_time(cell(ti, time_column)?, row, time_column)?;
        let delta = parse_status(cell(si, status_column)?, row, status_column)?;
        let arm = match (ai, arm_column) {
            (Some(i), Some(name)) => Some(cell(i, name)?.to_string()),
            _ => None,
        };
        rows.push((CensoredObservation { z, delta }, arm));
    }
    if rows.is_empty() {
        return Err(Error::Empty("CSV has a header but no data rows".into()));
    }
    Ok(rows)
}

/// Read a censored sample from CSV text.
pub fn read_csv<R: Read>(reader: R, time_column: &str, status_column: &str) -> Result<CensoredSample> {
    let rows = read_rows(reader, time_column, status_column, None)?;
    CensoredSample::new(rows.into_iter().map(|(o, _)| o).collect())
}

/// Read a CSV file into a single censored sample.
pub fn ingest_csv(path: impl AsRef<Path>, time_column: &str, status_column: &str) -> Result<CensoredSample> {
    read_csv(std::fs::File::open(path)?, time_column, status_column)
}

/// Read CSV text and split it into one sample per value of `arm_column`.
pub fn read_csv_by_arm<R: Read>(
    reader: R,
    time_column: &str,
    status_column: &str,
    arm_column: &str,
) -> Result<BTreeMap<String, CensoredSample>> {
    let rows = read_rows(reader, time_column, status_column, Some(arm_column))?;
    let mut groups: BTreeMap<String, Vec<CensoredObservation>> = BTreeMap::new();
    for (o, arm) in rows {
        groups.entry(arm.unwrap_or_default()).or_default().push(o);
    }
    groups
        .into_iter()
        .map(|(k, v)| CensoredSample::new(v).map(|s| (k, s)))
        .collect()
}

pub fn ingest_csv_by_arm(
    path: impl AsRef<Path>,
    time_column: &str,
    status_column: &str,
    arm_column: &str,
) -> Result<BTreeMap<String, CensoredSample>> {
    read_csv_by_arm(std::fs::File::open(path)?, time_column, status_column, arm_column)
}

/// Write `time,status` rows in canonical order.
pub fn write_csv<W: Write>(sample: &CensoredSample, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "status"])?;
    for o in sample.observations() {
        w.write_record([format!("{}", o.z), (o.delta as u8).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

const VETERAN_CSV: &str = include_str!("../data/veteran.csv");

/// The bundled Veteran lung cancer trial, keyed by arm (`A` standard, `B` test).
pub fn veteran() -> BTreeMap<String, CensoredSample> {
    read_csv_by_arm(VETERAN_CSV.as_bytes(), "time_days", "status", "arm").expect("bundled data is valid")
}

/// Raw text of the bundled Veteran CSV (columns `time_days,status,arm`).
pub fn veteran_csv() -> &'static str {
    VETERAN_CSV
}

/// A family together with its parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub family: Family,
    pub theta: Vec<f64>,
}

impl Distribution {
    pub fn new(family: Family, theta: Vec<f64>) -> Result<Self> {
        family.model().validate(&theta)?;
        Ok(Self { family, theta })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::new(Family::Exponential, vec![mean])
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Self::new(Family::Weibull, vec![scale, shape])
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.family.model().quantile(&self.theta, u)
    }
}

/// Lifetimes from an optionally contaminated mixture, censored by an
/// independent exponential time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub lifetime: Distribution,
    /// Mean of the exponential censoring time; `f64::INFINITY` disables censoring.
    pub censoring_mean: f64,
    pub contamination_fraction: f64,
    pub contamination: Option<Distribution>,
    pub seed: u64,
}

impl SyntheticDesign {
    pub fn new(lifetime: Distribution, censoring_mean: f64, seed: u64) -> Self {
        Self {
            lifetime,
            censoring_mean,
            contamination_fraction: 0.0,
            contamination: None,
            seed,
        }
    }

    pub fn contaminated(mut self, fraction: f64, by: Distribution) -> Self {
        self.contamination_fraction = fraction;
        self.contamination = Some(by);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.lifetime.family.model().validate(&self.lifetime.theta)?;
        if !(self.censoring_mean > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "censoring mean must be positive, got {}",
                self.censoring_mean
            )));
        }
        if !(0.0..1.0).contains(&self.contamination_fraction) {
            return Err(Error::InvalidParameter(format!(
                "contamination fraction must lie in [0, 1), got {}",
                self.contamination_fraction
            )));
        }
        match &self.contamination {
            Some(c) => c.family.model().validate(&c.theta)?,
            None if self.contamination_fraction > 0.0 => {
                return Err(Error::InvalidParameter(
                    "a positive contamination fraction needs a contaminating distribution".into(),
                ))
            }
            None => {}
        }
        Ok(())
    }

    /// Generator for replication `index`: seeded by the design seed, with the
    /// replication index selecting an independent stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// A simulated sample plus the number of lifetimes drawn from the contaminating law.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub sample: CensoredSample,
    pub contaminated: usize,
}

/// Draw replication `index` of size `n` from `design`.
pub fn simulate_replication(design: &SyntheticDesign, n: usize, index: u64) -> Result<Simulation> {
    design.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let mut rng = design.rng(index);
    let mut obs = Vec::with_capacity(n);
    let mut contaminated = 0;
    for _ in 0..n {
        // all three uniforms are always drawn so streams line up across designs
        let u_mix: f64 = rng.sample(Open01);
        let u_x: f64 = rng.sample(Open01);
        let u_c: f64 = rng.sample(Open01);
        let x = match &design.contamination {
            Some(c) if u_mix < design.contamination_fraction => {
                contaminated += 1;
                c.quantile(u_x)
            }
            _ => design.lifetime.quantile(u_x),
        };
        let c = -design.censoring_mean * u_c.ln();
        obs.push(CensoredObservation {
            z: x.min(c),
            delta: x <= c,
        });
    }
    Ok(Simulation {
        sample: CensoredSample::new(obs)?,
        contaminated,
    })
}

/// Draw a sample of size `n` (replication 0 of the design's stream family).
pub fn simulate(design: &SyntheticDesign, n: usize) -> Result<CensoredSample> {
    simulate_replication(design, n, 0).map(|s| s.sample)
}

/// `P(C < X)` for `C ~ Exp(mean m)` and `X` from `dist`.
pub fn censoring_probability(dist: &Distribution, censoring_mean: f64) -> Result<f64> {
    let model = dist.family.model();
    // P(C < X) = 1 − E[exp(−X/m)], integrated on the probability scale
    let survive = integrate(
        |t| (-model.quantile(&dist.theta, t) / censoring_mean).exp(),
        0.0,
        1.0,
        &QuadratureConfig::with_tol(1e-12),
    )?;
    Ok(1.0 - survive)
}

/// Censoring mean `m` giving `P(C < X) = target_rate` for exponential censoring.
pub fn censoring_mean_for_rate(dist: &Distribution, target_rate: f64) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target censoring rate must lie in (0, 1), got {target_rate}"
        )));
    }
    dist.family.model().validate(&dist.theta)?;
    let median = dist.quantile(0.5).max(f64::MIN_POSITIVE);
    let f = |log_m: f64| {
        censoring_probability(dist, log_m.exp()).map_or(f64::NAN, |p| p - target_rate)
    };
    let (lo, hi) = ((median * 1e-8).ln(), (median * 1e8).ln());
    let log_m = brent_root(f, lo, hi, 1e-12, 200)
        .map_err(|_| Error::NoRoot(format!("no censoring mean in [{:e}, {:e}] gives rate {target_rate}", lo.exp(), hi.exp())))?;
    Ok(log_m.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pairs(s: &CensoredSample) -> Vec<(f64, bool)> {
        s.observations().iter().map(|o| (o.z, o.delta)).collect()
    }

    #[test]
    fn csv_sorts_rows() {
        let s = read_csv("time,status\n3,1\n1,0\n2,1\n".as_bytes(), "time", "status").unwrap();
        assert_eq!(pairs(&s), vec![(1.0, false), (2.0, true), (3.0, true)]);
    }

    #[test]
    fn events_precede_censorings_at_ties() {
        let s = read_csv("time,status\n2,0\n2,1\n".as_bytes(), "time", "status").unwrap();
        assert_eq!(pairs(&s), vec![(2.0, true), (2.0, false)]);
    }

    #[test]
    fn bad_status_reports_row() {
        let err = read_csv("time,status\n1,1\n2,2\n".as_bytes(), "time", "status").unwrap_err();
        match err {
            Error::BadCell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "status");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn other_ingest_errors() {
        assert!(matches!(
            read_csv("t,status\n1,1\n".as_bytes(), "time", "status"),
            Err(Error::MissingColumn(c)) if c == "time"
        ));
        assert!(matches!(
            read_csv("time,status\n-1,1\n".as_bytes(), "time", "status"),
            Err(Error::BadCell { row: 1, .. })
        ));
        assert!(matches!(
            read_csv("time,status\nabc,1\n".as_bytes(), "time", "status"),
            Err(Error::BadCell { row: 1, .. })
        ));
        assert!(matches!(read_csv("time,status\n".as_bytes(), "time", "status"), Err(Error::Empty(_))));
        assert!(read_csv("".as_bytes(), "time", "status").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = CensoredSample::from_pairs(&[(0.25, 1), (3.5, 0), (1.0, 1), (1.0, 0)]).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "time", "status").unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn veteran_arms() {
        let v = veteran();
        assert_eq!(v["A"].len(), 69);
        assert_eq!(v["B"].len(), 68);
        assert_eq!(v["A"].n_events(), 64);
        assert_eq!(v["B"].n_events(), 64);
    }

    #[test]
    fn censoring_mean_exponential() {
        let m = censoring_mean_for_rate(&Distribution::exponential(1.0).unwrap(), 0.1).unwrap();
        assert_relative_eq!(m, 9.0, epsilon = 1e-6);
    }

    #[test]
    fn censoring_mean_weibull() {
        let m = censoring_mean_for_rate(&Distribution::weibull(2.0, 5.0).unwrap(), 0.1).unwrap();
        assert!((m - 17.4).abs() < 0.2, "{m}");
    }

    #[test]
    fn simulated_censoring_fraction() {
        let d = SyntheticDesign::new(Distribution::exponential(1.0).unwrap(), 9.0, 7);
        let s = simulate(&d, 100_000).unwrap();
        let p = s.censoring_fraction();
        assert!((p - 0.1).abs() < 3.0 * (0.09f64 / 1e5).sqrt(), "{p}");
    }

    #[test]
    fn zero_contamination_matches_clean_stream() {
        let clean = SyntheticDesign::new(Distribution::weibull(2.0, 5.0).unwrap(), 17.4, 11);
        let zero = clean.clone().contaminated(0.0, Distribution::exponential(5.0).unwrap());
        assert_eq!(simulate(&clean, 200).unwrap(), simulate(&zero, 200).unwrap());
    }

    #[test]
    fn contamination_fraction_is_binomial() {
        let d = SyntheticDesign::new(Distribution::weibull(2.0, 5.0).unwrap(), 17.4, 3)
            .contaminated(0.05, Distribution::exponential(5.0).unwrap());
        let n = 50_000;
        let sim = simulate_replication(&d, n, 4).unwrap();
        let p = sim.contaminated as f64 / n as f64;
        assert!((p - 0.05).abs() < 3.0 * (0.05 * 0.95 / n as f64).sqrt());
    }

    #[test]
    fn replications_are_deterministic_and_distinct() {
        let d = SyntheticDesign::new(Distribution::exponential(2.0).unwrap(), 9.0, 99);
        let a = simulate_replication(&d, 50, 1).unwrap().sample;
        let b = simulate_replication(&d, 50, 1).unwrap().sample;
        let c = simulate_replication(&d, 50, 2).unwrap().sample;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_designs_rejected() {
        let mut d = SyntheticDesign::new(Distribution::exponential(1.0).unwrap(), 9.0, 0);
        d.contamination_fraction = 0.1;
        assert!(simulate(&d, 10).is_err());
        d.contamination_fraction = 0.0;
        d.censoring_mean = -1.0;
        assert!(simulate(&d, 10).is_err());
        assert!(Distribution::weibull(-1.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn canonical_order_after_construction(
            raw in prop::collection::vec((0u8..6, any::<bool>()), 1..40)
        ) {
            let obs: Vec<_> = raw.iter().map(|&(z, d)| CensoredObservation { z: z as f64, delta: d }).collect();
            let s = CensoredSample::new(obs).unwrap();
            for w in s.observations().windows(2) {
                prop_assert!(w[0].z < w[1].z || (w[0].z == w[1].z && (w[0].delta || !w[1].delta)));
            }
            prop_assert_eq!(s.len(), raw.len());
        }

        #[test]
        fn ingest_write_ingest_idempotent(
            raw in prop::collection::vec((0.0f64..100.0, any::<bool>()), 1..30)
        ) {
            let obs: Vec<_> = raw.iter().map(|&(z, d)| CensoredObservation { z, delta: d }).collect();
            let s = CensoredSample::new(obs).unwrap();
            let mut buf = Vec::new();
            write_csv(&s, &mut buf).unwrap();
            let once = read_csv(buf.as_slice(), "time", "status").unwrap();
            let mut buf2 = Vec::new();
            write_csv(&once, &mut buf2).unwrap();
            prop_assert_eq!(&once, &s);
            prop_assert_eq!(buf, buf2);
        }
    }
}
