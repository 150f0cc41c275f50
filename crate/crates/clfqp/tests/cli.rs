use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use clfqp::config::Scenario;
use clfqp::formats::GaitFile;
use clfqp::output::{read_log, SummaryDoc, TIMING_COLUMNS};
use clfqp::runner;
use clfqp::CliError;

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clfqp"))
}

/// Copies the shipped scenarios into a scratch directory so runs never
/// write into the source tree.
fn scratch() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(scenarios_dir()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    dir
}

fn edit(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn shipped_scenarios_round_trip() {
    for name in ["caseA", "caseB", "caseC", "caseD", "linear_chain"] {
        let path = scenarios_dir().join(format!("{name}.json"));
        let (sc, _) = Scenario::load(&path).unwrap();
        let text = serde_json::to_string_pretty(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sc, "{name}");
    }
}

#[test]
fn shipped_gait_round_trips() {
    let gf = GaitFile::read(&scenarios_dir().join("gait.json")).unwrap();
    let design = gf.to_design().unwrap();
    let again = GaitFile::from_design(&gf.params, &gf.template, &gf.clf, &design);
    assert_eq!(again, gf);
}

#[test]
fn run_writes_versioned_outputs() {
    let dir = scratch();
    let out = bin().arg("run").arg(dir.path().join("caseA.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("out/caseA");
    let log = read_log(&od.join("log.csv")).unwrap();
    assert_eq!(log.header[0], "t");
    assert_eq!(log.header.last().unwrap(), "solve_us");
    let s = SummaryDoc::read(&od.join("summary.json")).unwrap();
    assert_eq!(s.outcome, "completed");
    assert_eq!(s.ticks, log.rows.len());
    assert!(od.join("phase_portrait.csv").exists());
    assert!(!od.join("envelope.csv").exists());
}

#[test]
fn linear_chain_writes_the_envelope() {
    let dir = scratch();
    let r = runner::run(&dir.path().join("linear_chain.json")).unwrap();
    let env = clfqp::output::read_table(&r.output_dir.join("envelope.csv"), "envelope", 1).unwrap();
    let eta = env.floats("eta_norm").unwrap();
    let bound = env.floats("bound").unwrap();
    assert!(eta.iter().zip(&bound).all(|(e, b)| e <= b));
}

#[test]
fn a_fall_is_still_a_successful_run() {
    let dir = scratch();
    let out = bin().arg("run").arg(dir.path().join("caseC.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let s = SummaryDoc::read(&dir.path().join("out/caseC/summary.json")).unwrap();
    assert_eq!(s.outcome, "fall");
}

#[test]
fn config_errors_exit_with_2_and_name_the_key() {
    let dir = scratch();
    let p = dir.path().join("caseA.json");
    edit(&p, |v| v["sim"]["substeps"] = 0.into());
    let out = bin().arg("run").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.substeps"));

    let p = dir.path().join("caseB.json");
    edit(&p, |v| v["controller"]["mystery"] = 1.into());
    assert_eq!(bin().arg("run").arg(&p).output().unwrap().status.code(), Some(2));
}

#[test]
fn unknown_schema_versions_are_rejected() {
    let dir = scratch();
    let p = dir.path().join("caseA.json");
    edit(&p, |v| v["schema_version"] = 7.into());
    let e = runner::load(&p).err().unwrap();
    assert!(matches!(e, CliError::UnsupportedVersion { found: 7, .. }), "{e}");

    let dir = scratch();
    edit(&dir.path().join("gait.json"), |v| v["schema_version"] = 2.into());
    let e = runner::load(&dir.path().join("caseA.json")).err().unwrap();
    assert!(matches!(e, CliError::UnsupportedVersion { found: 2, .. }), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn compare_rejects_mixed_plants_and_gaits() {
    let dir = scratch();
    let d = dir.path();
    let e = runner::compare(&[d.join("caseA.json"), d.join("linear_chain.json")], d).unwrap_err();
    assert!(matches!(e, CliError::IncompatibleScenarios(_)));

    let other = d.join("caseB.json");
    edit(&other, |v| v["plant"]["params"] = serde_json::json!({ "torso_mass": 12.0 }));
    let e = runner::compare(&[d.join("caseA.json"), other], d).unwrap_err();
    // a gait designed for other parameters is refused before the comparison
    assert_eq!(e.exit_code(), 2);

    let out = bin().arg("compare").arg(d.join("caseA.json")).arg(d.join("linear_chain.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_tabulates_every_scenario() {
    let dir = scratch();
    let d = dir.path();
    let out = bin()
        .env("CLFQP_THREADS", "2")
        .args(["compare", "caseA.json", "caseB.json", "caseC.json", "-o", "cmp"])
        .current_dir(d)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = clfqp::output::read_compare(&d.join("cmp/compare.csv")).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.scenario.as_str()).collect();
    assert_eq!(names, ["caseA", "caseB", "caseC"]);

    let bad = bin().env("CLFQP_THREADS", "0").args(["compare", "caseA.json", "caseB.json"]).current_dir(d).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("CLFQP_THREADS"));
}

#[test]
fn repeated_runs_give_identical_logs() {
    let dir = scratch();
    let p = dir.path().join("caseD.json");
    let a = runner::run(&p).unwrap();
    let la = read_log(&a.output_dir.join("log.csv")).unwrap();
    let b = runner::run(&p).unwrap();
    let lb = read_log(&b.output_dir.join("log.csv")).unwrap();
    assert_eq!(la.without(&TIMING_COLUMNS), lb.without(&TIMING_COLUMNS));
}

#[test]
fn gait_design_reproduces_the_shipped_gait() {
    let dir = scratch();
    let out = dir.path().join("fresh.json");
    let st = bin().arg("gait-design").arg(dir.path().join("plant.json")).arg("-o").arg(&out).status().unwrap();
    assert!(st.success());
    let fresh = GaitFile::read(&out).unwrap();
    let shipped = GaitFile::read(&scenarios_dir().join("gait.json")).unwrap();
    assert!((fresh.step_period - shipped.step_period).abs() < 1e-9);
    for (a, b) in fresh.fixed_point.dq.iter().zip(&shipped.fixed_point.dq) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn gait_design_rejects_other_plants() {
    let dir = scratch();
    let p = dir.path().join("plant.json");
    edit(&p, |v| v["kind"] = "linear_chain".into());
    let out = bin().arg("gait-design").arg(&p).arg("-o").arg(dir.path().join("g.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind"));
}

#[test]
fn bench_rejects_oversized_problems() {
    let out = bin().args(["bench-qp", "--sizes", "3x40", "--samples", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let ok = bin().args(["bench-qp", "--sizes", "hard2", "--samples", "10"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("hard2"));
}
