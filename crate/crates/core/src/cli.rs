//! Command-line front end: argument parsing, the hypothesis grammar and the
//! `run` driver that writes plot-ready CSV artifacts.
//!
//! Hypotheses are written as comma- or space-separated assignments:
//!
//! * `scale=2,shape=5` or `theta=2,5`: simple null on all parameters
//! * `shape=1`: one component, the others free
//! * `theta1=theta2`: two-sample homogeneity
//! * `shape1=shape2 dir=greater`: one component across arms, one-sided

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{self, censoring_mean_for_rate, CensoredSample, Distribution, SyntheticDesign};
use crate::error::{Error, Result};
use crate::estimator::{fit_grid, FitConfig, FitResult};
use crate::hypothesis::{wald_statistic, Direction, Restriction, TestReport};
use crate::influence::{log_grid, InfluenceModel};
use crate::kmpl::kmpl_fit;
use crate::model::Family;
use crate::montecarlo::{run_level_power, run_mse, run_variance_ratio, ExperimentKind, ExperimentReport, ExperimentSpec};
use crate::twosample::{two_sample_wald, TwoSampleReport, TwoSampleRestriction};

/// A parsed hypothesis of either kind.
#[derive(Debug, Clone)]
pub enum ParsedHypothesis {
    OneSample(Restriction),
    TwoSample(TwoSampleRestriction),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Eq,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '=' {
            out.push((i, Token::Eq));
            i += 1;
        } else if c == ',' {
            out.push((i, Token::Comma));
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Token::Ident(chars[start..i].iter().collect())));
        } else if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                position: start,
                message: format!("`{s}` is not a number"),
            })?;
            out.push((start, Token::Number(v)));
        } else {
            return Err(Error::Parse {
                position: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

enum Rhs {
    Values(Vec<f64>),
    Name(String),
}

/// Parse a hypothesis for `family` (grammar in the module docs). Positions in
/// errors are 0-based character offsets.
pub fn hypothesis_parse(text: &str, family: Family) -> Result<ParsedHypothesis> {
    let tokens = tokenize(text)?;
    let end = text.chars().count();
    let at = |k: usize| tokens.get(k).map_or(end, |t| t.0);
    let mut k = 0;
    let mut assignments: Vec<(usize, String, Rhs)> = Vec::new();
    while k < tokens.len() {
        let (pos, name) = match &tokens[k] {
            (p, Token::Ident(s)) => (*p, s.clone()),
            (p, _) => {
                return Err(Error::Parse {
                    position: *p,
                    message: "expected a parameter name".into(),
                })
            }
        };
        k += 1;
        if !matches!(tokens.get(k), Some((_, Token::Eq))) {
            return Err(Error::Parse {
                position: at(k),
                message: format!("expected `=` after `{name}`"),
            });
        }
        k += 1;
        let rhs = match tokens.get(k) {
            Some((_, Token::Number(v))) => {
                let mut vals = vec![*v];
                k += 1;
                while let (Some((_, Token::Comma)), Some((_, Token::Number(v)))) = (tokens.get(k), tokens.get(k + 1)) {
                    vals.push(*v);
                    k += 2;
                }
                Rhs::Values(vals)
            }
            Some((_, Token::Ident(s))) => {
                k += 1;
                Rhs::Name(s.clone())
            }
            _ => {
                return Err(Error::Parse {
                    position: at(k),
                    message: "expected a value or a parameter name".into(),
                })
            }
        };
        assignments.push((pos, name, rhs));
        if let Some((_, Token::Comma)) = tokens.get(k) {
            k += 1;
            if k == tokens.len() {
                return Err(Error::Parse {
                    position: end,
                    message: "trailing comma".into(),
                });
            }
        }
    }
    if assignments.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty hypothesis".into(),
        });
    }

    let mut direction = None;
    let mut one: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    let mut two: Vec<(usize, Option<usize>)> = Vec::new();
    let p = family.dim();
    for (pos, name, rhs) in assignments {
        let lname = name.to_ascii_lowercase();
        if lname == "dir" || lname == "direction" {
            let Rhs::Name(d) = rhs else {
                return Err(Error::Parse {
                    position: pos,
                    message: "direction must be `greater` or `less`".into(),
                });
            };
            direction = Some(d.parse::<Direction>().map_err(|e| Error::Parse {
                position: pos,
                message: e.to_string(),
            })?);
            continue;
        }
        match rhs {
            Rhs::Values(vals) => {
                if lname == "theta" {
                    if vals.len() != p {
                        return Err(Error::Parse {
                            position: pos,
                            message: format!("`theta` needs {p} values for the {family} family, got {}", vals.len()),
                        });
                    }
                    for (i, v) in vals.into_iter().enumerate() {
                        one.push((pos, i, vec![v]));
                    }
                } else {
                    let idx = family.param_index(&lname).ok_or_else(|| Error::Parse {
                        position: pos,
                        message: format!("unknown parameter `{name}` for the {family} family"),
                    })?;
                    if vals.len() != 1 {
                        return Err(Error::Parse {
                            position: pos,
                            message: format!("`{name}` takes a single value"),
                        });
                    }
                    one.push((pos, idx, vals));
                }
            }
            Rhs::Name(other) => {
                let (base1, base2) = (arm_base(&lname, '1'), arm_base(&other.to_ascii_lowercase(), '2'));
                let (Some(b1), Some(b2)) = (base1, base2) else {
                    return Err(Error::Parse {
                        position: pos,
                        message: format!("expected `<name>1 = <name>2`, got `{name} = {other}`"),
                    });
                };
                if b1 != b2 {
                    return Err(Error::Parse {
                        position: pos,
                        message: format!("arms compare different parameters (`{b1}` and `{b2}`)"),
                    });
                }
                if b1 == "theta" {
                    two.push((pos, None));
                } else {
                    let idx = family.param_index(&b1).ok_or_else(|| Error::Parse {
                        position: pos,
                        message: format!("unknown parameter `{b1}` for the {family} family"),
                    })?;
                    two.push((pos, Some(idx)));
                }
            }
        }
    }
    if !one.is_empty() && !two.is_empty() {
        return Err(Error::Parse {
            position: two[0].0,
            message: "cannot mix one-sample and two-sample restrictions".into(),
        });
    }
    let names = family.param_names();
    let parsed = if !one.is_empty() {
        let mut values: BTreeMap<usize, f64> = BTreeMap::new();
        for (pos, idx, v) in &one {
            if values.insert(*idx, v[0]).is_some() {
                return Err(Error::Parse {
                    position: *pos,
                    message: format!("`{}` restricted twice", names[*idx]),
                });
            }
        }
        let desc = values
            .iter()
            .map(|(i, v)| format!("{}={}", names[*i], v))
            .collect::<Vec<_>>()
            .join(",");
        let r = if values.len() == p {
            Restriction::simple(values.values().copied().collect())?
        } else if values.len() == 1 {
            let (i, v) = values.iter().next().map(|(i, v)| (*i, *v)).unwrap_or_default();
            Restriction::component(p, i, v)?
        } else {
            let mut a = DMatrix::zeros(values.len(), p);
            for (row, i) in values.keys().enumerate() {
                a[(row, *i)] = 1.0;
            }
            Restriction::linear(a, nalgebra::DVector::from_iterator(values.len(), values.values().copied()))?
        };
        let r = r.with_description(desc);
        match direction {
            Some(d) => ParsedHypothesis::OneSample(r.with_direction(d).map_err(|e| Error::Parse {
                position: one[0].0,
                message: e.to_string(),
            })?),
            None => ParsedHypothesis::OneSample(r),
        }
    } else if !two.is_empty() {
        if two.len() > 1 {
            return Err(Error::Parse {
                position: two[1].0,
                message: "only one two-sample comparison is supported".into(),
            });
        }
        let r = match two[0].1 {
            None => TwoSampleRestriction::homogeneity(p).with_description("theta1=theta2"),
            Some(i) => TwoSampleRestriction::component(p, i)?.with_description(format!("{0}1={0}2", names[i])),
        };
        match direction {
            Some(d) => ParsedHypothesis::TwoSample(r.with_direction(d).map_err(|e| Error::Parse {
                position: two[0].0,
                message: e.to_string(),
            })?),
            None => ParsedHypothesis::TwoSample(r),
        }
    } else {
        return Err(Error::Parse {
            position: 0,
            message: "a direction alone is not a hypothesis".into(),
        });
    };
    Ok(parsed)
}

fn arm_base(name: &str, arm: char) -> Option<String> {
    name.strip_suffix(arm).filter(|b| !b.is_empty()).map(str::to_string)
}

/// Parse `a:b:step` into an inclusive ascending grid.
pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = |m: &str| Error::Parse {
        position: 0,
        message: format!("alpha grid `{text}`: {m}"),
    };
    if parts.len() != 3 {
        return Err(bad("expected start:end:step"));
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("not a number"))?;
    let (a, b, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || b < a || a < 0.0 {
        return Err(bad("need 0 <= start <= end and step > 0"));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    // rounding keeps 0.1-steps printable as 0.3 rather than 0.30000000000000004
    Ok((0..=count).map(|i| ((a + i as f64 * step) * 1e10).round() / 1e10).collect())
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                position: 0,
                message: format!("{what}: `{s}` is not a number"),
            })
        })
        .collect()
}

/// Default sweep `0, 0.1, …, 1`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Parser)]
#[command(name = "robsurv", version, about = "Robust parametric inference for right-censored survival data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Lifetime family
    #[arg(long, global = true, default_value = "weibull")]
    pub family: Family,
    /// Single tuning parameter
    #[arg(long, global = true, conflicts_with = "alpha_grid")]
    pub alpha: Option<f64>,
    /// Tuning-parameter sweep as start:end:step
    #[arg(long, global = true)]
    pub alpha_grid: Option<String>,
    /// Hypothesis, e.g. "shape=1" or "shape1=shape2 dir=greater"
    #[arg(long, global = true)]
    pub hypothesis: Option<String>,
    #[arg(long, global = true, default_value_t = 0.05)]
    pub level: f64,
    /// Column holding arm labels
    #[arg(long, global = true)]
    pub arm_column: Option<String>,
    #[arg(long, global = true, default_value = "time")]
    pub time_column: String,
    #[arg(long, global = true, default_value = "status")]
    pub status_column: String,
    #[arg(long, global = true, env = "ROBSURV_SEED", default_value_t = 20180)]
    pub seed: u64,
    #[arg(long, global = true, env = "ROBSURV_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value = "robsurv-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum CliCommand {
    /// Fit the MDPDE over the tuning-parameter grid
    Fit(DataArgs),
    /// One-sample Wald-type test over the grid
    Test(DataArgs),
    /// Two-sample comparison of arms
    Compare(CompareArgs),
    /// Influence curves at a model point
    Influence(InfluenceArgs),
    /// Monte Carlo study
    Simulate(SimulateArgs),
    /// Kaplan–Meier estimate and log-log cumulative hazard
    Kmplot(DataArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV input; the bundled Veteran data when omitted
    pub input: Option<PathBuf>,
    /// Restrict to one arm
    #[arg(long)]
    pub arm: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// One CSV with an arm column, or two CSVs; the bundled Veteran data when omitted
    pub inputs: Vec<PathBuf>,
    /// Arm labels to compare, as "A,B"
    #[arg(long)]
    pub arms: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct InfluenceArgs {
    /// Model point, comma separated
    #[arg(long)]
    pub theta0: Option<String>,
    /// Contiguous shift d for the power influence function
    #[arg(long)]
    pub shift: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub t_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Experiment {
    /// Weibull(2, 5) level/power study with 10% censoring
    LevelPower,
    /// Exponential(1) MSE study with Exp(9) censoring
    Mse,
    /// Weibull(2, 5) variance-ratio study with 10% censoring
    VarianceRatio,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "level-power")]
    pub experiment: Experiment,
    /// Sample size; 100 for level-power and mse, 200 for variance-ratio
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
    /// Contamination fraction (from Exp(5) for level-power, Exp(10) for mse)
    #[arg(long, default_value_t = 0.0)]
    pub contamination: f64,
}

/// Everything `run` needs, independent of how it was parsed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CliCommand,
    pub family: Family,
    pub alpha_grid: Vec<f64>,
    pub hypothesis: Option<String>,
    pub level: f64,
    pub arm_column: Option<String>,
    pub time_column: String,
    pub status_column: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let c = cli.common;
        let alpha_grid = match (c.alpha, &c.alpha_grid) {
            (Some(a), _) => vec![a],
            (None, Some(g)) => parse_alpha_grid(g)?,
            (None, None) => default_alpha_grid(),
        };
        Ok(Self {
            command: cli.command,
            family: c.family,
            alpha_grid,
            hypothesis: c.hypothesis,
            level: c.level,
            arm_column: c.arm_column,
            time_column: c.time_column,
            status_column: c.status_column,
            seed: c.seed,
            workers: c.workers,
            out: c.out,
        })
    }
}

/// What a run produced. `ok` is false when any fit failed to converge or a
/// study was flagged invalid.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub ok: bool,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

/// One row of the fit table.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub objective: f64,
    pub eqn_residual: f64,
    pub converged: bool,
    pub lambda_condition: f64,
    pub residual_flag: bool,
}

impl From<&FitResult> for FitRow {
    fn from(f: &FitResult) -> Self {
        Self {
            alpha: f.alpha,
            theta: f.theta_hat.clone(),
            std_errors: f.std_errors(),
            objective: f.objective_value,
            eqn_residual: f.eqn_residual,
            converged: f.converged,
            lambda_condition: f.lambda_condition,
            residual_flag: f.residual_flag,
        }
    }
}

/// Columns `alpha, <param>…, <param>_se…, objective, eqn_residual,
/// converged, lambda_condition, residual_flag`.
pub fn write_fit_table<W: Write>(family: Family, rows: &[FitRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names = family.param_names();
    let mut header = vec!["alpha".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend(names.iter().map(|s| format!("{s}_se")));
    header.extend(["objective", "eqn_residual", "converged", "lambda_condition", "residual_flag"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.alpha.to_string()];
        rec.extend(r.theta.iter().map(|v| v.to_string()));
        rec.extend(r.std_errors.iter().map(|v| v.to_string()));
        rec.extend([
            r.objective.to_string(),
            r.eqn_residual.to_string(),
            r.converged.to_string(),
            r.lambda_condition.to_string(),
            r.residual_flag.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fit_table<R: Read>(family: Family, reader: R) -> Result<Vec<FitRow>> {
    let p = family.dim();
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            cell(j).parse().map_err(|_| Error::BadCell {
                row: i + 1,
                column: j.to_string(),
                message: format!("`{}` is not a number", cell(j)),
            })
        };
        let flag = |j: usize| -> Result<bool> {
            cell(j).parse().map_err(|_| Error::BadCell {
                row: i + 1,
                column: j.to_string(),
                message: format!("`{}` is not a boolean", cell(j)),
            })
        };
        out.push(FitRow {
            alpha: num(0)?,
            theta: (1..=p).map(num).collect::<Result<_>>()?,
            std_errors: (p + 1..=2 * p).map(num).collect::<Result<_>>()?,
            objective: num(2 * p + 1)?,
            eqn_residual: num(2 * p + 2)?,
            converged: flag(2 * p + 3)?,
            lambda_condition: num(2 * p + 4)?,
            residual_flag: flag(2 * p + 5)?,
        });
    }
    Ok(out)
}

fn create(out: &Path, name: &str, artifacts: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    let f = File::create(&path)?;
    artifacts.push(path);
    Ok(BufWriter::new(f))
}

fn load_arms(cfg: &RunConfig, input: Option<&Path>) -> Result<BTreeMap<String, CensoredSample>> {
    match (input, &cfg.arm_column) {
        (None, _) => Ok(data::veteran()),
        (Some(p), Some(col)) => data::ingest_csv_by_arm(p, &cfg.time_column, &cfg.status_column, col),
        (Some(p), None) => {
            let s = data::ingest_csv(p, &cfg.time_column, &cfg.status_column)?;
            Ok(BTreeMap::from([("all".to_string(), s)]))
        }
    }
}

fn load_one(cfg: &RunConfig, args: &DataArgs) -> Result<CensoredSample> {
    let arms = load_arms(cfg, args.input.as_deref())?;
    match &args.arm {
        Some(a) => arms
            .get(a)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no arm `{a}`; available: {:?}", arms.keys().collect::<Vec<_>>()))),
        None => arms
            .into_values()
            .reduce(|a, b| a.pooled(&b))
            .ok_or_else(|| Error::Empty("no observations".into())),
    }
}

fn fit_config(cfg: &RunConfig) -> FitConfig {
    FitConfig {
        seed: cfg.seed,
        ..FitConfig::default()
    }
}

fn fits_for(cfg: &RunConfig, sample: &CensoredSample) -> Result<Vec<Result<FitResult>>> {
    fit_grid(sample, cfg.family, &cfg.alpha_grid, &fit_config(cfg))
}

/// Execute one command and write its artifacts under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {}", cfg.level)));
    }
    let mut out = RunOutcome {
        ok: true,
        ..RunOutcome::default()
    };
    match &cfg.command {
        CliCommand::Fit(args) => run_fit(cfg, args, &mut out)?,
        CliCommand::Test(args) => run_test(cfg, args, &mut out)?,
        CliCommand::Compare(args) => run_compare(cfg, args, &mut out)?,
        CliCommand::Influence(args) => run_influence(cfg, args, &mut out)?,
        CliCommand::Simulate(args) => run_simulate(cfg, args, &mut out)?,
        CliCommand::Kmplot(args) => {
            let km = kmpl_fit(&load_one(cfg, args)?);
            km.write_csv(create(&cfg.out, "kmplot.csv", &mut out.artifacts)?)?;
            out.summary = format!(
                "{} support points, residual mass {:.4}{}\n",
                km.support.len(),
                km.residual_mass,
                if km.residual_flagged() { " (flagged)" } else { "" }
            );
        }
    }
    Ok(out)
}

fn run_fit(cfg: &RunConfig, args: &DataArgs, out: &mut RunOutcome) -> Result<()> {
    let sample = load_one(cfg, args)?;
    let mut rows = Vec::new();
    let mut full = Vec::new();
    for (alpha, r) in cfg.alpha_grid.iter().zip(fits_for(cfg, &sample)?) {
        match r {
            Ok(f) => {
                out.ok &= f.converged;
                rows.push(FitRow::from(&f));
                full.push(f);
            }
            Err(e) => {
                out.ok = false;
                out.summary.push_str(&format!("alpha {alpha}: {e}\n"));
            }
        }
    }
    write_fit_table(cfg.family, &rows, create(&cfg.out, "fit.csv", &mut out.artifacts)?)?;
    serde_json::to_writer_pretty(create(&cfg.out, "fit.json", &mut out.artifacts)?, &full)
        .map_err(|e| Error::Io(e.into()))?;
    let names = cfg.family.param_names();
    out.summary.push_str(&format!("n = {}, censored {:.1}%\n", sample.len(), 100.0 * sample.censoring_fraction()));
    for r in &rows {
        let cells: Vec<String> = names
            .iter()
            .zip(r.theta.iter().zip(&r.std_errors))
            .map(|(n, (t, s))| format!("{n} {t:.4} ({s:.4})"))
            .collect();
        out.summary.push_str(&format!(
            "alpha {:<4} {}{}\n",
            r.alpha,
            cells.join("  "),
            if r.converged { "" } else { "  [not converged]" }
        ));
    }
    Ok(())
}

fn one_sample_hypothesis(cfg: &RunConfig) -> Result<Restriction> {
    let text = cfg
        .hypothesis
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("`test` needs --hypothesis".into()))?;
    match hypothesis_parse(text, cfg.family)? {
        ParsedHypothesis::OneSample(r) => Ok(r),
        ParsedHypothesis::TwoSample(_) => Err(Error::InvalidArgument(format!(
            "`{text}` compares two arms; use `compare`"
        ))),
    }
}

fn run_test(cfg: &RunConfig, args: &DataArgs, out: &mut RunOutcome) -> Result<()> {
    let restriction = one_sample_hypothesis(cfg)?;
    let sample = load_one(cfg, args)?;
    let mut reports = Vec::new();
    for (alpha, r) in cfg.alpha_grid.iter().zip(fits_for(cfg, &sample)?) {
        match r.and_then(|f| wald_statistic(&f, &restriction)) {
            Ok(rep) => {
                out.summary.push_str(&format!(
                    "alpha {:<4} statistic {:>9.4}  p {:.4}{}\n",
                    alpha,
                    rep.statistic,
                    rep.p_value,
                    if rep.rejects(cfg.level) { "  reject" } else { "" }
                ));
                reports.push(rep);
            }
            Err(e) => {
                out.ok = false;
                out.summary.push_str(&format!("alpha {alpha}: {e}\n"));
            }
        }
    }
    TestReport::write_csv(&reports, create(&cfg.out, "test.csv", &mut out.artifacts)?)?;
    Ok(())
}

fn compare_samples(cfg: &RunConfig, args: &CompareArgs) -> Result<(CensoredSample, CensoredSample)> {
    let pick = |arms: &BTreeMap<String, CensoredSample>| -> Result<(CensoredSample, CensoredSample)> {
        let labels: Vec<String> = match &args.arms {
            Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
            None => arms.keys().take(2).cloned().collect(),
        };
        if labels.len() != 2 {
            return Err(Error::InvalidArgument("exactly two arms are needed".into()));
        }
        let get = |l: &str| {
            arms.get(l)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("no arm `{l}`")))
        };
        Ok((get(&labels[0])?, get(&labels[1])?))
    };
    match args.inputs.as_slice() {
        [] => pick(&data::veteran()),
        [one] => {
            let col = cfg
                .arm_column
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("a single input needs --arm-column".into()))?;
            pick(&data::ingest_csv_by_arm(one, &cfg.time_column, &cfg.status_column, col)?)
        }
        [a, b] => Ok((
            data::ingest_csv(a, &cfg.time_column, &cfg.status_column)?,
            data::ingest_csv(b, &cfg.time_column, &cfg.status_column)?,
        )),
        _ => Err(Error::InvalidArgument("compare takes one or two inputs".into())),
    }
}

fn run_compare(cfg: &RunConfig, args: &CompareArgs, out: &mut RunOutcome) -> Result<()> {
    let text = cfg.hypothesis.clone().unwrap_or_else(|| "theta1=theta2".into());
    let restriction = match hypothesis_parse(&text, cfg.family)? {
        ParsedHypothesis::TwoSample(r) => r,
        ParsedHypothesis::OneSample(_) => {
            return Err(Error::InvalidArgument(format!("`{text}` is a one-sample hypothesis; use `test`")))
        }
    };
    let (s1, s2) = compare_samples(cfg, args)?;
    let f1 = fits_for(cfg, &s1)?;
    let f2 = fits_for(cfg, &s2)?;
    let mut two_sided = restriction.clone();
    two_sided.direction = None;
    let mut reports = Vec::new();
    for ((alpha, a), b) in cfg.alpha_grid.iter().zip(f1).zip(f2) {
        let pair = a.and_then(|a| b.map(|b| (a, b)));
        let mut tests = vec![&two_sided];
        if restriction.direction.is_some() {
            tests.push(&restriction);
        }
        for r in tests {
            match pair.as_ref().map_err(clone_err).and_then(|(a, b)| two_sample_wald(a, b, r)) {
                Ok(rep) => {
                    out.summary.push_str(&format!("{rep}\n"));
                    reports.push(rep);
                }
                Err(e) => {
                    out.ok = false;
                    out.summary.push_str(&format!("alpha {alpha}: {e}\n"));
                }
            }
        }
    }
    TwoSampleReport::write_csv(&reports, create(&cfg.out, "compare.csv", &mut out.artifacts)?)?;
    Ok(())
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidArgument(e.to_string())
}

fn run_influence(cfg: &RunConfig, args: &InfluenceArgs, out: &mut RunOutcome) -> Result<()> {
    let restriction = match &cfg.hypothesis {
        Some(_) => Some(one_sample_hypothesis(cfg)?),
        None => None,
    };
    let theta0 = match &args.theta0 {
        Some(t) => parse_list(t, "--theta0")?,
        None => match (&cfg.hypothesis, &restriction) {
            (Some(text), Some(r)) if r.r() == cfg.family.dim() => {
                // a simple null names the model point
                let mut theta = vec![0.0; cfg.family.dim()];
                for part in text.split([',', ' ']).filter(|s| s.contains('=')) {
                    let (k, v) = part.split_once('=').unwrap_or_default();
                    if let (Some(i), Ok(v)) = (cfg.family.param_index(k.trim()), v.trim().parse()) {
                        theta[i] = v;
                    }
                }
                theta
            }
            _ => return Err(Error::InvalidArgument("`influence` needs --theta0 or a simple hypothesis".into())),
        },
    };
    let grid = log_grid(args.t_min, args.t_max, args.points);
    let shift = args.shift.as_deref().map(|s| parse_list(s, "--shift")).transpose()?;
    for &alpha in &cfg.alpha_grid {
        let im = InfluenceModel::new(cfg.family, &theta0, alpha)?;
        let c = im.curve(&grid)?;
        c.write_csv(create(&cfg.out, &format!("if_alpha{alpha}.csv"), &mut out.artifacts)?)?;
        out.summary.push_str(&format!("alpha {alpha}: sup |IF| = {:.4}", c.sup_norm()));
        if let Some(r) = &restriction {
            let c2 = im.if2_curve(r, &grid)?;
            c2.write_csv(create(&cfg.out, &format!("if2_alpha{alpha}.csv"), &mut out.artifacts)?)?;
            out.summary.push_str(&format!(", sup IF2 = {:.4}", c2.sup_norm()));
            if let Some(d) = &shift {
                let cp = im.pif_curve(r, d, &grid, cfg.level)?;
                cp.write_csv(create(&cfg.out, &format!("pif_alpha{alpha}.csv"), &mut out.artifacts)?)?;
                out.summary.push_str(&format!(", sup |PIF| = {:.4}", cp.sup_norm()));
            }
        }
        out.summary.push('\n');
    }
    Ok(())
}

/// The study behind a preset, before command-line overrides.
pub fn experiment_spec(experiment: Experiment, contamination: f64, seed: u64) -> Result<ExperimentSpec> {
    let spec = match experiment {
        Experiment::LevelPower => {
            let life = Distribution::weibull(2.0, 5.0)?;
            let mut design = SyntheticDesign::new(life.clone(), censoring_mean_for_rate(&life, 0.10)?, seed);
            if contamination > 0.0 {
                design = design.contaminated(contamination, Distribution::exponential(5.0)?);
            }
            ExperimentSpec::new(ExperimentKind::LevelPower, design, 100, 1000, default_alpha_grid())
                .with_hypotheses(["scale=2,shape=5", "scale=2.2,shape=2.3", "shape=5", "shape=2"])
        }
        Experiment::Mse => {
            let mut design = SyntheticDesign::new(Distribution::exponential(1.0)?, 9.0, seed);
            if contamination > 0.0 {
                design = design.contaminated(contamination, Distribution::exponential(10.0)?);
            }
            ExperimentSpec::new(ExperimentKind::Mse, design, 100, 1000, default_alpha_grid())
        }
        Experiment::VarianceRatio => {
            let life = Distribution::weibull(2.0, 5.0)?;
            let mut design = SyntheticDesign::new(life.clone(), censoring_mean_for_rate(&life, 0.10)?, seed);
            if contamination > 0.0 {
                design = design.contaminated(contamination, Distribution::exponential(5.0)?);
            }
            ExperimentSpec::new(ExperimentKind::VarianceRatio, design, 200, 1000, vec![0.0, 0.5, 1.0])
        }
    };
    Ok(spec)
}

fn run_simulate(cfg: &RunConfig, args: &SimulateArgs, out: &mut RunOutcome) -> Result<()> {
    let mut spec = experiment_spec(args.experiment, args.contamination, cfg.seed)?;
    if let Some(n) = args.n {
        spec.n = n;
    }
    spec.replications = args.replications;
    spec.level = cfg.level;
    spec.workers = cfg.workers;
    if cfg.alpha_grid != default_alpha_grid() {
        spec.alpha_grid = cfg.alpha_grid.clone();
    }
    if let Some(h) = &cfg.hypothesis {
        spec.hypotheses = vec![h.clone()];
    }
    let report: ExperimentReport = match spec.kind {
        ExperimentKind::LevelPower => run_level_power(&spec)?,
        ExperimentKind::Mse => run_mse(&spec)?,
        ExperimentKind::VarianceRatio => run_variance_ratio(&spec)?,
    };
    report.write_csv(create(&cfg.out, "simulate.csv", &mut out.artifacts)?)?;
    let summary = report.summary();
    create(&cfg.out, "simulate_summary.txt", &mut out.artifacts)?.write_all(summary.as_bytes())?;
    serde_json::to_writer_pretty(create(&cfg.out, "simulate_spec.json", &mut out.artifacts)?, &report.spec)
        .map_err(|e| Error::Io(e.into()))?;
    out.ok &= !report.invalid;
    out.summary.push_str(&summary);
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match RunConfig::from_cli(cli).and_then(|cfg| run(&cfg)) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            if outcome.ok {
                0
            } else {
                eprintln!("error: some computations did not converge or were flagged invalid");
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
