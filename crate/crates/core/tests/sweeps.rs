use irs_antijam::experiments::{read_trajectory_csv, run_sweep, ExperimentSpec, Scheme, SweepVariable};
use irs_antijam::scenario::ConfigFile;

fn spec(base: ConfigFile, dir: &std::path::Path) -> ExperimentSpec {
    ExperimentSpec {
        base_config: None,
        base: Some(base),
        sweep: SweepVariable::PJamDbm,
        values: vec![15.0, 30.0],
        d_m_values: vec![],
        schemes: vec![Scheme::NoIrs],
        output_dir: dir.to_path_buf(),
    }
}

#[test]
fn jammer_power_sweep_writes_feasible_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ConfigFile { slots: 8, v_max: 150.0, ..ConfigFile::default() };
    let s = spec(base, tmp.path());
    let table = run_sweep(&s, 2).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.status == "ok" && r.converged));
    assert!(table.rows[0].worst_case_rate > table.rows[1].worst_case_rate);
    for v in ["15", "30"] {
        let path = tmp.path().join(format!("cells/no_irs_p_jam_dbm-{v}_dm-0_trajectory.csv"));
        let q = read_trajectory_csv(&path).unwrap();
        let cfg = ConfigFile { slots: 8, v_max: 150.0, ..ConfigFile::default() }.into_config();
        assert!(q.violations(&cfg, 1e-6).is_empty());
    }
}

#[test]
fn failing_cells_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ConfigFile { slots: 2, v_max: 1.0, ..ConfigFile::default() };
    let table = run_sweep(&spec(base, tmp.path()), 1).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.status.starts_with("error") && r.worst_case_rate.is_nan()));
    let text = std::fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}
