use std::path::Path;
use std::process::Command;

use lossmesh::config::{load_config, write_config, ExperimentConfig, Mode};
use lossmesh::{compare_report, run_experiment, CliError, ResultTable, ToleranceRule};

const PHASE: &str = r#"{
  "mode": "ode_phase",
  "system": {
    "lambda": 1.0, "capacity": 5, "d": 2,
    "service": {"kind": "mixed_erlang", "phase_rate": 2.1, "phase_probs": [0.3, 0.3, 0.4]}
  },
  "numerics": {"t_ode": 5.0, "initial_points": [1]}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn loads_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&write(dir.path(), "a.json", PHASE)).unwrap();
    assert_eq!(cfg.mode, Mode::OdePhase);
    let out = dir.path().join("b.json");
    write_config(&cfg, &out).unwrap();
    assert_eq!(load_config(&out).unwrap(), cfg);
    assert_eq!(load_config(&out).unwrap().hash(), cfg.hash());
}

#[test]
fn rejects_bad_configs() {
    let bad_probs = PHASE.replace("0.3, 0.3, 0.4", "0.3, 0.3, 0.39");
    let err = ExperimentConfig::from_json(&bad_probs).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("system.service"), "{err}");

    let zero_d = PHASE.replace("\"d\": 2", "\"d\": 0");
    let err = ExperimentConfig::from_json(&zero_d)
        .and_then(|c| c.validate())
        .unwrap_err();
    assert!(matches!(err, CliError::Config(_)));

    let unknown = PHASE.replace("\"d\": 2", "\"d\": 2, \"dd\": 3");
    let err = ExperimentConfig::from_json(&unknown).unwrap_err();
    assert!(err.to_string().contains("dd"), "{err}");
}

#[test]
fn fixedpoint_table_has_golden_ratio() {
    let cfg = ExperimentConfig::from_json(
        r#"{"mode": "fixedpoint", "system": {"lambda": 1.0, "capacity": 1, "d": 2}}"#,
    )
    .unwrap();
    let tables = run_experiment(&cfg, None).unwrap();
    let t = &tables[0];
    let csv = t.to_csv().unwrap();
    let p1 = t.values("P_n").unwrap()[1];
    assert!((p1 - 0.6180339887498949).abs() < 1e-12, "{p1}");
    assert!(csv.contains("0.618033988"), "{csv}");
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = ExperimentConfig::from_json(
        r#"{"mode": "simulate",
            "system": {"lambda": 1.0, "capacity": 3, "d": 2,
                       "service": {"kind": "gamma", "shape": 2.0, "scale": 0.5}},
            "run": {"n_servers": [50], "t_total": 200.0, "seed": 4, "age_snapshots": true}}"#,
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ta = run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    for t in &ta {
        let name = format!("{}.csv", t.name);
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

fn table(name: &str, rows: &[[f64; 3]]) -> ResultTable {
    let mut t = ResultTable::new(name, ["n", "value", "se"]);
    for r in rows {
        t.push(r.to_vec()).unwrap();
    }
    t
}

#[test]
fn compare_report_rules() {
    let rule = ToleranceRule {
        keys: vec!["n".into()],
        value: "value".into(),
        se: Some("se".into()),
        abs_tol: 0.0,
    };
    let model = table("model", &[[0.0, 0.5, 0.0], [1.0, 0.5, 0.0]]);
    assert!(compare_report(&model, &model, &rule).unwrap().passed);

    let off = table("est", &[[0.0, 0.5, 0.01], [1.0, 0.54, 0.01]]);
    let report = compare_report(&model, &off, &rule).unwrap();
    assert!(!report.passed);
    assert_eq!(report.table.values("pass").unwrap(), vec![1.0, 0.0]);

    let disjoint = table("est", &[[2.0, 0.5, 0.0]]);
    assert!(matches!(
        compare_report(&model, &disjoint, &rule),
        Err(CliError::Alignment(_))
    ));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_lossmesh");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "phase.json", PHASE);
    let out = dir.path().join("out");

    let ok = Command::new(bin)
        .args(["ode_phase", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("ode_phase.csv").is_file());

    let mismatch = Command::new(bin).args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(1));

    let bad = write(dir.path(), "bad.json", "{\"mode\": \"fixedpoint\"}");
    let st = Command::new(bin).args(["fixedpoint", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(1));

    let usage = Command::new(bin).arg("nonsense").output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
