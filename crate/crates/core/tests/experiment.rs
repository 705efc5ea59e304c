use blindcal::experiment::*;
use blindcal::Mode;
use std::fs;

fn small_dt(trials: usize) -> PhaseGrid {
    PhaseGrid {
        axis1: Axis::new(AxisName::Delta, vec![0.4, 0.6, 0.8]),
        axis2: Axis::new(AxisName::Rho, vec![0.1, 0.3]),
        trials_per_cell: trials,
        base_seed: 42,
    }
}

fn dt_config(trials: usize) -> SweepConfig {
    SweepConfig {
        n: 24,
        kind: DiagramKind::Dt { l: 4, sigma: 0.1 },
        grid: small_dt(trials),
        modes: ModeSelection::Both,
        settings: TrialSettings::default(),
    }
}

fn serial() -> RunOptions {
    RunOptions {
        jobs: Some(1),
        ..Default::default()
    }
}

#[test]
fn single_cell_single_trial_matches_run_trial() {
    let grid = PhaseGrid {
        axis1: Axis::new(AxisName::Delta, vec![0.5]),
        axis2: Axis::new(AxisName::Rho, vec![0.1]),
        trials_per_cell: 1,
        base_seed: 3,
    };
    let settings = TrialSettings::default();
    let d = run_dt_diagram(&grid, 40, 5, 0.0, ModeSelection::Both, settings, &serial()).unwrap();
    assert!(d.is_complete());
    assert_eq!(d.cells.len(), 1);
    let cell = &d.cells[0];
    let params = CellParams::from_ratios(40, 0.5, 0.1, 5, 0.0).unwrap();
    let t = run_trial(&params, 0, 3, ModeSelection::Both, &settings).unwrap();
    assert_eq!(cell.params, params);
    assert_eq!(cell.seeds, vec![t.seed]);
    assert_eq!(cell.successes(Mode::Calibrated), usize::from(t.calibrated.as_ref().unwrap().success));
    assert_eq!(cell.successes(Mode::Uncalibrated), usize::from(t.uncalibrated.as_ref().unwrap().success));
    // σ = 0 well inside the recovery region
    assert!(t.calibrated.unwrap().success);
    assert_eq!(d.to_csv().lines().count(), 2);
}

#[test]
fn run_trial_is_deterministic() {
    let params = CellParams::from_ratios(30, 0.5, 0.2, 3, 0.3).unwrap();
    let s = TrialSettings::default();
    let a = run_trial(&params, 5, 9, ModeSelection::Both, &s).unwrap();
    let b = run_trial(&params, 5, 9, ModeSelection::Both, &s).unwrap();
    assert_eq!(a, b);
}

#[test]
fn large_sigma_defeats_uncalibrated() {
    let s = TrialSettings::default();
    for (delta, rho) in [(0.5, 0.1), (0.8, 0.2)] {
        let params = CellParams::from_ratios(50, delta, rho, 3, 1.0).unwrap();
        for t in 0..3 {
            let out = run_trial(&params, t, 1, ModeSelection::Uncalibrated, &s).unwrap();
            assert!(out.calibrated.is_none());
            assert!(!out.uncalibrated.unwrap().success);
        }
    }
}

#[test]
fn large_sigma_single_signal_fails_both() {
    let s = TrialSettings::default();
    let params = CellParams::from_ratios(50, 0.5, 0.15, 1, 3.0).unwrap();
    for t in 0..3 {
        let out = run_trial(&params, t, 1, ModeSelection::Both, &s).unwrap();
        assert!(!out.calibrated.unwrap().success);
        assert!(!out.uncalibrated.unwrap().success);
    }
}

#[test]
fn results_do_not_depend_on_workers() {
    let config = dt_config(3);
    let a = run_sweep(&config, &serial()).unwrap();
    let b = run_sweep(
        &config,
        &RunOptions {
            jobs: Some(4),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn results_do_not_depend_on_cell_order() {
    let config = dt_config(2);
    let full = run_sweep(&config, &serial()).unwrap();
    // the same cells reached through a grid visited in another order
    for (a, b) in config.grid.cells() {
        let mut single = config.clone();
        single.grid.axis1.values = vec![a];
        single.grid.axis2.values = vec![b];
        let d = run_sweep(&single, &serial()).unwrap();
        assert_eq!(Some(&d.cells[0]), full.cell(a, b));
    }
}

#[test]
fn resume_after_any_cell_is_bit_identical() {
    let config = dt_config(2);
    let dir = tempfile::tempdir().unwrap();
    let reference_path = dir.path().join("ref.jsonl");
    let reference = run_sweep(
        &config,
        &RunOptions {
            jsonl: Some(reference_path.clone()),
            ..serial()
        },
    )
    .unwrap();
    let reference_bytes = fs::read(&reference_path).unwrap();
    let total = config.grid.cells().len();

    for stop in 0..total {
        let path = dir.path().join(format!("run{stop}.jsonl"));
        let first = run_sweep(
            &config,
            &RunOptions {
                jsonl: Some(path.clone()),
                max_cells: Some(stop),
                ..serial()
            },
        )
        .unwrap();
        assert_eq!(first.pending, total - stop);
        // a write torn mid-record
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(b"{\"cell\":{\"axis1\":0.");
        fs::write(&path, bytes).unwrap();

        let resumed = run_sweep(
            &config,
            &RunOptions {
                jsonl: Some(path.clone()),
                resume: true,
                ..serial()
            },
        )
        .unwrap();
        assert_eq!(resumed, reference);
        assert_eq!(resumed.to_csv(), reference.to_csv());
        assert_eq!(fs::read(&path).unwrap(), reference_bytes);
    }
}

#[test]
fn resume_rejects_other_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let opts = RunOptions {
        jsonl: Some(path.clone()),
        max_cells: Some(1),
        ..serial()
    };
    run_sweep(&dt_config(1), &opts).unwrap();
    let resume = RunOptions {
        resume: true,
        max_cells: None,
        ..opts
    };
    assert!(run_sweep(&dt_config(2), &resume).is_err());
}

#[test]
fn counts_stay_within_bounds() {
    let d = run_sweep(&dt_config(3), &serial()).unwrap();
    for c in &d.cells {
        assert_eq!(c.trials_done, 3);
        assert!(c.successes_calibrated <= c.trials_done);
        assert!(c.successes_uncalibrated <= c.trials_done);
        assert_eq!(c.seeds.len(), 3);
        assert_eq!(c.outcomes_calibrated.len(), 3);
    }
}

#[test]
fn calibrated_rate_does_not_drop_with_more_signals() {
    let trials = 12;
    let grid = PhaseGrid {
        axis1: Axis::new(AxisName::L, vec![1.0, 2.0, 4.0, 8.0]),
        axis2: Axis::new(AxisName::Sigma, vec![0.5]),
        trials_per_cell: trials,
        base_seed: 5,
    };
    let d = run_ls_diagram(&grid, 0.5, 0.15, 40, ModeSelection::Calibrated, TrialSettings::default(), &serial()).unwrap();
    let rates: Vec<f64> = d.cells.iter().map(|c| c.rate(Mode::Calibrated)).collect();
    let slack = 2.0 / trials as f64;
    for w in rates.windows(2) {
        assert!(w[1] >= w[0] - slack, "rates {rates:?}");
    }
    // the uncalibrated column is empty when that mode is not run
    assert!(d.to_csv().lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn sharpness_trend_in_n_is_reported() {
    // a trend only: widths are printed, not asserted
    let settings = TrialSettings::default();
    for n in [50, 100] {
        let grid = PhaseGrid {
            axis1: Axis::new(AxisName::Delta, vec![0.5]),
            axis2: Axis::new(AxisName::Rho, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]),
            trials_per_cell: 6,
            base_seed: 11,
        };
        let d = run_dt_diagram(&grid, n, 1, 0.0, ModeSelection::Uncalibrated, settings, &serial()).unwrap();
        let lines = sharpness_summary(&d, AxisName::Rho, Mode::Uncalibrated).unwrap();
        assert_eq!(lines.len(), 1);
        println!("N={n}: {:?}", lines[0].transition);
        assert!(sharpness_summary(&d, AxisName::L, Mode::Uncalibrated).is_err());
    }
}

#[test]
fn csv_and_config_are_written_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = run_sweep(&dt_config(1), &serial()).unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&d, &path).unwrap();
    let csv = fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 1 + 6);
    let config: SweepConfig =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d.csv.config.json")).unwrap()).unwrap();
    assert_eq!(config, d.config);
}

#[test]
fn overlay_is_copied_verbatim_or_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("dt.csv");
    let dest = dir.path().join("out.csv");
    let body = b"delta,rho\n0.1,0.05\n0.5, 0.19\n";
    fs::write(&src, body).unwrap();
    pass_through_overlay(&src, &dest).unwrap();
    assert_eq!(fs::read(&dest).unwrap(), body);
    fs::write(&src, "0.1,0.05,7\n").unwrap();
    assert!(pass_through_overlay(&src, &dest).is_err());
}
