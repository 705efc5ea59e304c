use blindcal::ProblemInstance;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blindcal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blindcal"))
        .args(args)
        .current_dir(dir)
        .env_remove("BLINDCAL_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, name: &str, dims: [&str; 4], sigma: &str, seed: &str) {
    let [n, m, k, l] = dims;
    let o = blindcal(
        &["gen", "--N", n, "--m", m, "--k", k, "--L", l, "--sigma", sigma, "--seed", seed, "-o", name],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_writes_instance_and_reports_db_spread() {
    let dir = tempfile::tempdir().unwrap();
    let o = blindcal(
        &["gen", "--N", "100", "--m", "50", "--k", "10", "--L", "21", "--sigma", "1", "--seed", "7", "-o", "inst.json"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("±8.7 dB"), "{}", stdout(&o));
    let first = fs::read(dir.path().join("inst.json")).unwrap();
    let inst = ProblemInstance::from_json(std::str::from_utf8(&first).unwrap()).unwrap();
    assert_eq!(inst.observations.shape(), (50, 21));
    assert_eq!(inst.seed, 7);

    gen(dir.path(), "inst.json", ["100", "50", "10", "21"], "1", "7");
    assert_eq!(fs::read(dir.path().join("inst.json")).unwrap(), first);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "a.json", ["20", "10", "2", "3"], "0.1", "5");
    let o = Command::new(env!("CARGO_BIN_EXE_blindcal"))
        .args(["gen", "--N", "20", "--m", "10", "--k", "2", "--L", "3", "--sigma", "0.1", "-o", "b.json"])
        .current_dir(dir.path())
        .env("BLINDCAL_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
}

#[test]
fn config_file_supplies_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"N": 20, "m": 10, "k": 2, "L": 3, "sigma": 0.1, "seed": 4}"#,
    )
    .unwrap();
    let o = blindcal(&["gen", "--config", "c.json", "--L", "5", "-o", "i.json"], dir.path());
    assert!(o.status.success());
    let inst = ProblemInstance::from_json(&fs::read_to_string(dir.path().join("i.json")).unwrap()).unwrap();
    assert_eq!((inst.dims.n, inst.dims.l, inst.seed), (20, 5, 4));

    fs::write(dir.path().join("bad.json"), r#"{"N": 20, "sigm": 1}"#).unwrap();
    let o = blindcal(&["gen", "--config", "bad.json", "-o", "j.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigm"));
    assert!(!dir.path().join("j.json").exists());
}

#[test]
fn invalid_dimensions_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = blindcal(&["gen", "--N", "10", "--m", "20", "--k", "2", "--L", "3", "-o", "x.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn solve_uncorrupted_instance_both_succeed() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "i.json", ["60", "30", "3", "8"], "0", "1");
    let o = blindcal(&["solve", "i.json", "--mode", "both", "-o", "r.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.matches("success=true").count(), 2, "{out}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 2);
    assert_eq!(report["config"]["mode"], "both");
}

#[test]
fn solve_decalibrated_instance_only_calibrated_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "i.json", ["60", "30", "3", "12"], "0.5", "2");
    let o = blindcal(&["solve", "i.json", "--mode", "both"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let line = |p: &str| out.lines().find(|l| l.starts_with(p)).unwrap().to_string();
    assert!(line("calibrated:").contains("success=true"), "{out}");
    assert!(line("uncalibrated:").contains("success=false"), "{out}");
}

#[test]
fn solve_missing_file_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = blindcal(&["solve", "nope.json", "-o", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn solve_non_convergence_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "i.json", ["40", "20", "4", "4"], "0.3", "3");
    fs::write(
        dir.path().join("c.json"),
        r#"{"solver": {"max_iterations": 2, "primal_tolerance": 1e-8, "dual_tolerance": 1e-8,
            "penalty_parameter": 1.0, "feasibility_tolerance": 1e-9, "adaptive_penalty": true,
            "relaxation": 1.5, "polish": false}}"#,
    )
    .unwrap();
    let o = blindcal(&["solve", "i.json", "--config", "c.json", "--mode", "calibrated"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("IterationLimit"));
}

#[test]
fn phase_single_cell_gives_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = blindcal(
        &["phase", "--kind", "dt", "--N", "30", "--L", "3", "--trials", "1", "--grid", "1x1", "-o", "p.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], blindcal::experiment::CSV_HEADER);
    assert!(lines[1].starts_with("0.5,0.5,30,1,"));
    assert!(dir.path().join("p.csv.config.json").exists());
    assert_eq!(fs::read_to_string(dir.path().join("p.csv.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn phase_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["phase", "--kind", "ls", "--N", "30", "--axis1", "1,3,5", "--axis2", "0.1,1", "--trials", "2"];
    let full = blindcal(&[&args[..], &["-o", "full.csv"]].concat(), dir.path());
    assert!(full.status.success());
    let part = blindcal(&[&args[..], &["--max-cells", "2", "-o", "part.csv"]].concat(), dir.path());
    assert!(part.status.success());
    assert!(stdout(&part).contains("4 pending"));
    let resumed = blindcal(&[&args[..], &["--resume", "-o", "part.csv"]].concat(), dir.path());
    assert!(resumed.status.success());
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("part.csv"), read("full.csv"));
    assert_eq!(read("part.csv.jsonl"), read("full.csv.jsonl"));
}

#[test]
fn phase_calibrated_region_contains_uncalibrated() {
    let dir = tempfile::tempdir().unwrap();
    let o = blindcal(
        &[
            "phase", "--kind", "dt", "--N", "40", "--L", "8", "--sigma", "0.316", "--trials", "4", "--grid", "3x3",
            "--seed", "1", "-o", "p.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<usize> = line.split(',').skip(4).map(|v| v.parse().unwrap()).collect();
        assert!(f[0] >= f[1], "{line}");
    }
}

#[test]
fn phase_overlay_is_copied_and_bad_grid_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dt.csv"), "0.1,0.05\n0.5,0.19\n").unwrap();
    let o = blindcal(
        &["phase", "--N", "20", "--L", "2", "--trials", "1", "--grid", "1x1", "--overlay", "dt.csv", "-o", "p.csv"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(
        fs::read(dir.path().join("p.csv.overlay.csv")).unwrap(),
        fs::read(dir.path().join("dt.csv")).unwrap()
    );
    let o = blindcal(&["phase", "--grid", "0x3", "-o", "q.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
