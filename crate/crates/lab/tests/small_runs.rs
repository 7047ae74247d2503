//! Every experiment end to end at toy sizes.

use lab::config::{ExperimentConfig, ExperimentId};
use lab::experiments::run_experiment;

fn run(text: &str) -> (serde_json::Value, usize) {
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let (report, table) = run_experiment(&cfg).unwrap();
    assert_eq!(report.pass, report.checks.iter().all(|c| c.pass));
    assert!(!table.rows.is_empty());
    assert!(table.rows.iter().all(|r| r.len() == table.header.len()));
    (serde_json::to_value(&report).unwrap(), table.rows.len())
}

#[test]
fn exponential() {
    let (j, rows) = run("experiment = \"exp-exponential\"\n[params]\nnu = [0.5]\nlevels = [3]\nexact_draws = 300\noccupation_draws = 40\nband = 0.05\n");
    assert_eq!(rows, 3);
    assert_eq!(j["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn embed() {
    let (j, rows) = run("experiment = \"exp-embed\"\n[params]\nseeds = 30\nn_grid = { min = 10, max = 10000, per_decade = 2 }\n");
    assert!(rows >= 4);
    assert!(j["summary"]["abs_max_slope"]["slope"].is_f64());
}

#[test]
fn local_time() {
    let (_, rows) = run("experiment = \"exp-localtime\"\n[params]\nnu = [1.0]\ndraws = 500\nr_grid = { min = 10, max = 1000, per_decade = 2 }\n");
    assert_eq!(rows, 5);
}

#[test]
fn coupling() {
    let (j, _) = run("experiment = \"exp-couple\"\n[params]\ngamma = [1.5]\nseeds = 30\nn_grid = { min = 100, max = 3000, per_decade = 2 }\n");
    let checks = j["checks"].as_array().unwrap();
    assert_eq!(checks[0]["name"], "gamma=1.5 pathwise case inequalities");
    assert_eq!(checks[0]["pass"], true);
}

#[test]
fn escape() {
    let (j, rows) = run("experiment = \"exp-escape\"\n[params]\nrmax = 300\nseeds = 5\n");
    assert_eq!(rows, 5);
    let f = j["summary"]["fraction_in_band"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
}

#[test]
fn limit_law() {
    let (j, rows) = run("experiment = \"exp-limitlaw\"\n[params]\nsteps = 2000\nseeds = 200\n");
    assert_eq!(rows, 200);
    assert!(j["summary"]["p_value"].as_f64().unwrap() > 1e-4);
}

#[test]
fn class_table_defaults() {
    let cfg = ExperimentConfig::defaults(ExperimentId::ClassTable);
    let (report, table) = run_experiment(&cfg).unwrap();
    assert_eq!(table.rows.len(), 4 * 12 * 2);
    assert_eq!(report.summary["inconclusive"], 0);
    assert!(report.pass);
}
