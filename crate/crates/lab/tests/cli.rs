use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_GEOMETRIC: &str = r#"
experiment = "exp-geometric"
seed_base = 11

[params]
nu = [0.5]
levels = [5]
walks = 2000
repetitions = 4
"#;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_GEOMETRIC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = lab(&["run", "exp-geometric", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{o:?}");
    }
    for f in ["exp-geometric.csv", "exp-geometric.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("exp-geometric.csv")).unwrap();
    assert!(csv.starts_with("nu,level,repetition,walks,mean,chi_square,df,p_value\n"));
    assert_eq!(csv.lines().count(), 5);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("exp-geometric.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed_base"], 11);
    assert!(json["version"].as_str().unwrap().contains('('));
    let info: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("run_info.json")).unwrap()).unwrap();
    assert_eq!(info["threads"], 3);
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_GEOMETRIC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    lab(&["run", "exp-geometric", "--config", &cfg, "--out", a.to_str().unwrap()]);
    lab(&["run", "exp-geometric", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "12"]);
    let read = |d: &Path| fs::read_to_string(d.join("exp-geometric.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "experiment = \"exp-geometric\"\n[params]\nwalks = 0\n",
        "experiment = \"exp-geometric\"\n[params]\nwalks = 29\n",
        "experiment = \"exp-geometric\"\n[params]\ntrajectories = 10\n",
        "experiment = \"exp-nothing\"\n",
        "experiment = \"exp-limitlaw\"\n",
        "experiment = \"exp-geometric\"\n[thresholds.geometric]\nalpha = 1.5\n",
        "experiment = \"exp-geometric\"\nseed_base = -1\n",
    ];
    for text in cases {
        let cfg = write_config(dir.path(), text);
        let o = lab(&["run", "exp-geometric", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(lab(&["run", "exp-bogus"]).status.code(), Some(2));
    assert_eq!(lab(&["verify", "--only", "12"]).status.code(), Some(2));
    assert_eq!(lab(&["run", "exp-geometric", "--config", "/nonexistent/c.toml"]).status.code(), Some(1));
}

#[test]
fn verify_runs_selected_criteria() {
    let o = lab(&["verify", "--only", "1,11"]);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(o.status.code(), Some(0), "{out}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("PASS 1 "));
    assert!(lines[1].starts_with("PASS 11 "));
}

#[test]
fn classtable_prints_verdicts() {
    let o = lab(&["classtable", "--family", "sqrt_loglog", "--params", "1.5,2.5", "--nu", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "test,family,family_param,test_param,verdict,class_statement");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("bessel-upper,sqrt_loglog,1.5") && rows[1].contains(",diverges,"));
    assert!(rows[2].starts_with("bessel-upper,sqrt_loglog,2.5") && rows[2].contains(",converges,"));
    assert!(rows[3].starts_with("walk-upper,") && rows[3].contains(",diverges,"));

    let o = lab(&["classtable", "--family", "expr:non_decreasing:sqrt({p}*loglog(t))", "--params", "3", "--test", "bessel-upper", "--nu", "1"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains(",converges,"));
    assert_eq!(lab(&["classtable", "--family", "nope", "--params", "1"]).status.code(), Some(2));
}
