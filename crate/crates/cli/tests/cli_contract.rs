use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prehyp_cli::report::RunReport;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn prehyp(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prehyp"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn transport_text() -> String {
    std::fs::read_to_string(configs().join("scalar_transport_pair.conf")).unwrap()
}

fn with_text(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.conf");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = transport_text().replace("alpha = \"1\"\n", "");
    let o = prehyp(&["check-pair"], &with_text(dir.path(), &text), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("spacetime.alpha required"), "{}", stderr(&o));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn window_at_the_edge_violates_the_causal_margin() {
    let dir = tempfile::tempdir().unwrap();
    let text = transport_text().replacen("center = 0\n", "center = -4.5\n", 1);
    let o = prehyp(&["solve"], &with_text(dir.path(), &text), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("causal margin violated"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = transport_text().replace("cfl = 0.5\n", "cfl = 0.5\ncfl_typo = 1\n");
    let line = text.lines().position(|l| l.starts_with("cfl_typo")).unwrap() + 1;
    let o = prehyp(&["solve"], &with_text(dir.path(), &text), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&format!("line {line}")), "{}", stderr(&o));
}

#[test]
fn presets_exclude_explicit_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let text = transport_text().replace("preset = \"scalar_transport_pair\"\n", "preset = \"scalar_transport_pair\"\nA_t = [\"1\"]\n");
    let o = prehyp(&["check-pair"], &with_text(dir.path(), &text), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mutually exclusive"), "{}", stderr(&o));
}

#[test]
fn missing_prerequisites_are_config_errors_for_single_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let o = prehyp(&["greens"], &configs().join("scalar_transport_pair.conf"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = prehyp(&["beta"], &configs().join("scalar_transport_pair.conf"), dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tolerance_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\n[tolerances]\nround_trip = 1e-9\n", transport_text());
    let out = dir.path().join("out");
    let o = prehyp(&["isometry"], &with_text(dir.path(), &text), &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: RunReport = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(!report.pass);
    let c = report.checks.iter().find(|c| c.name == "round_trip.error").unwrap();
    assert!(!c.pass && c.limit == 1e-9);
}

#[test]
fn reports_round_trip_through_the_schema_and_reject_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = prehyp(&["check-pair", "--seed", "11"], &configs().join("dirac_massive.conf"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.seed, 11);
    assert_eq!(report.pair.as_ref().unwrap().probe.seed, 11);
    assert_eq!(prehyp_cli::report::to_json(&report).unwrap(), text);

    let tampered = text.replacen("\"pass\": true", "\"pass\": true,\n  \"extra\": 1", 1);
    assert!(serde_json::from_str::<RunReport>(&tampered).is_err());
    assert!(dir.path().join("timings.json").exists());
}

#[test]
fn seeds_change_only_the_symbol_probe() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed: &str| {
        let out = dir.path().join(seed);
        prehyp(&["check-pair", "--seed", seed], &configs().join("dirac_massive.conf"), &out);
        serde_json::from_slice::<RunReport>(&std::fs::read(out.join("report.json")).unwrap()).unwrap()
    };
    let (a, b) = (read("1"), read("2"));
    assert_ne!(a.pair.as_ref().unwrap().probe, b.pair.as_ref().unwrap().probe);
    assert_eq!(a.pair.as_ref().unwrap().report, b.pair.as_ref().unwrap().report);
}

#[test]
fn csv_dumps_are_written_alongside() {
    let dir = tempfile::tempdir().unwrap();
    let o = prehyp(&["convergence", "solve"], &configs().join("scalar_transport_pair.conf"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("convergence_solve_residual_l2.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "nx,dx,error,order");
    assert_eq!(rows.len(), 4);
    let o = prehyp(&["solve"], &configs().join("scalar_transport_pair.conf"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let sol = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(sol.starts_with("t,x,re0,im0\n"));
}
