//! End-to-end runs of the `robsurv` binary.

use std::path::Path;
use std::process::{Command, Output};

use robsurv::cli::read_fit_table;
use robsurv::data::veteran;
use robsurv::estimator::{fit, FitConfig};
use robsurv::model::Family;
use robsurv::twosample::TwoSampleReport;

fn robsurv(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robsurv"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ROBSURV_SEED")
        .env_remove("ROBSURV_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fit_writes_table_matching_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(dir.path(), &["fit", "--arm", "A", "--alpha-grid", "0:1:0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_fit_table(Family::Weibull, std::fs::File::open(dir.path().join("fit.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    let direct = fit(&veteran()["A"], Family::Weibull, &FitConfig::with_alpha(0.5)).unwrap();
    for (a, b) in rows[1].theta.iter().zip(&direct.theta_hat) {
        assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
    }
    assert!(dir.path().join("fit.json").exists());
    assert!(stdout(&o).contains("alpha 0.5"));
}

#[test]
fn fit_reads_user_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    std::fs::write(&input, "t,d\n1.2,1\n0.4,1\n2.5,0\n0.9,1\n3.1,1\n1.7,1\n0.2,1\n").unwrap();
    let o = robsurv(
        dir.path(),
        &["fit", input.to_str().unwrap(), "--family", "exponential", "--alpha", "0", "--time-column", "t", "--status-column", "d"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_fit_table(Family::Exponential, std::fs::File::open(dir.path().join("fit.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].converged);
}

#[test]
fn test_subcommand_reports_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(dir.path(), &["test", "--arm", "A", "--alpha-grid", "0:1:0.5", "--hypothesis", "shape=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("test.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().contains("p_value"));
}

#[test]
fn compare_emits_two_and_one_sided_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(dir.path(), &["compare", "--alpha-grid", "0.5:1:0.5", "--hypothesis", "shape1=shape2 dir=greater"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = TwoSampleReport::read_csv(std::fs::File::open(dir.path().join("compare.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    let (two, one) = (&rows[0], &rows[1]);
    assert!(two.direction.is_none() && one.direction.is_some());
    // the one-sided p-value halves the two-sided one when the sign agrees
    assert!((one.p_value - 0.5 * two.p_value).abs() < 1e-12 || (one.p_value - (1.0 - 0.5 * two.p_value)).abs() < 1e-12);
}

#[test]
fn compare_accepts_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let arms = veteran();
    for (label, name) in [("A", "a.csv"), ("B", "b.csv")] {
        robsurv::data::write_csv(&arms[label], std::fs::File::create(dir.path().join(name)).unwrap()).unwrap();
    }
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = robsurv(dir.path(), &["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--alpha", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let from_files = TwoSampleReport::read_csv(std::fs::File::open(dir.path().join("compare.csv")).unwrap()).unwrap();
    let bundled_dir = tempfile::tempdir().unwrap();
    let o = robsurv(bundled_dir.path(), &["compare", "--alpha", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bundled = TwoSampleReport::read_csv(std::fs::File::open(bundled_dir.path().join("compare.csv")).unwrap()).unwrap();
    assert_eq!(from_files[0].statistic, bundled[0].statistic);
}

#[test]
fn influence_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(
        dir.path(),
        &["influence", "--hypothesis", "scale=2,shape=5", "--shift", "0.1,-0.2", "--alpha", "0.5", "--points", "50"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["if_alpha0.5.csv", "if2_alpha0.5.csv", "pif_alpha0.5.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 51, "{name}");
    }
}

#[test]
fn kmplot_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(dir.path(), &["kmplot", "--arm", "B"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(dir.path().join("kmplot.csv")).unwrap().lines().count() > 10);
}

#[test]
fn simulate_is_reproducible_under_a_seed() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = robsurv(
            dir.path(),
            &["simulate", "--replications", "30", "--n", "60", "--alpha-grid", "0:1:0.5", "--seed", seed, "--workers", "2"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(dir.path().join("simulate_spec.json").exists());
        std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap()
    };
    let a = run("11");
    assert_eq!(a, run("11"));
    assert_ne!(a, run("12"));
}

#[test]
fn bad_hypothesis_reports_position_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(dir.path(), &["test", "--hypothesis", "shape=1 bogus=2"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("position 8") && err.contains("bogus"), "{err}");
}

#[test]
fn wrong_hypothesis_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = robsurv(dir.path(), &["compare", "--hypothesis", "shape=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("one-sample"));
}
