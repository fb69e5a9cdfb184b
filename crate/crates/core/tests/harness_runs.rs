use helidock_core::export::{read_run_dir, run_file_stem, write_run_csv_file};
use helidock_core::kinematics::rotation_matrix;
use helidock_core::*;

fn calm(mut cfg: RunConfig) -> RunConfig {
    cfg.plant.inner_loop_mode = InnerLoopMode::Ideal;
    cfg.scenario = ScenarioParams { initial_offset_max: 0.0, fixed_wind: Some(WindCondition::calm()) };
    cfg
}

#[test]
fn undisturbed_level_trim_both_controllers_dock() {
    let mut cfg = calm(RunConfig::default());
    cfg.plant.theta_trim = 0.0;
    cfg.plant.phi_trim = 0.0;
    let batch = run_batch(&cfg, &[1], Pairing::Paired).unwrap();
    let s = &batch.summary;
    assert_eq!((s.standard.success_rate, s.proposed.success_rate), (1.0, 1.0));
    for r in &batch.records {
        assert!(r.outcome.docking_error.unwrap() < 1e-3, "{:?}", r.outcome);
    }
}

#[test]
fn standard_error_at_trim_is_the_probe_offset_tilt() {
    let cfg = calm(RunConfig::default());
    let tilt =
        (rotation_matrix(&cfg.plant.trim_attitude(0.0)).unwrap() - nalgebra::Matrix3::identity()) * cfg.geometry.x_bar;
    let batch = run_batch(&cfg, &[1], Pairing::Paired).unwrap();
    let standard = batch.records[0].outcome.docking_error.unwrap();
    let proposed = batch.records[1].outcome.docking_error.unwrap();
    assert!((standard - tilt.norm()).abs() < 0.01, "{standard} vs {}", tilt.norm());
    assert!(proposed < 1e-3, "{proposed}");
}

#[test]
fn windy_lag_runs_dock_within_their_ceiling() {
    for seed in 1..=10 {
        let r = run_once(&RunConfig { seed, ..RunConfig::default() }).unwrap();
        let o = &r.outcome;
        assert!(o.scenario.wind.magnitude_kt != 0.0);
        assert!(o.docking_error.unwrap() <= o.bound.e_norm_ceiling);
        assert!(o.bound_compliant());
        assert!(r.series.is_consistent());
        assert!(r.series.times.windows(2).all(|w| ((w[1] - w[0]) - 0.01).abs() < 1e-12));
    }
}

#[test]
fn proposed_is_not_worse_in_most_pairs() {
    let seeds: Vec<u64> = (1..=50).collect();
    let s = run_batch(&RunConfig::default(), &seeds, Pairing::Paired).unwrap().summary;
    assert_eq!(s.pairs_compared, 50);
    assert!(s.paired_dominance.unwrap() >= 0.9);
    assert!(s.standard.std_docking_error.unwrap() > 0.0);
    assert!((0.0..=1.0).contains(&s.standard.success_rate));
}

#[test]
fn pairing_controls_shared_scenarios() {
    let seeds = [4, 5];
    let paired = run_batch(&RunConfig::default(), &seeds, Pairing::Paired).unwrap();
    let independent = run_batch(&RunConfig::default(), &seeds, Pairing::Independent).unwrap();
    for pair in paired.records.chunks(2) {
        assert_eq!(pair[0].outcome.scenario, pair[1].outcome.scenario);
        assert_eq!(pair[0].outcome.controller, ControllerKind::Standard);
        assert_eq!(pair[1].outcome.controller, ControllerKind::Proposed);
    }
    for pair in independent.records.chunks(2) {
        assert_ne!(pair[0].outcome.scenario, pair[1].outcome.scenario);
    }
    // The standard runs use the seed's base stream either way.
    assert_eq!(paired.records[0].outcome.scenario, independent.records[0].outcome.scenario);
}

#[test]
fn bound_report_from_csv_matches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let batch = run_batch(&RunConfig::default(), &[1, 2], Pairing::Paired).unwrap();
    for r in &batch.records {
        let stem = run_file_stem(r.outcome.controller, r.outcome.seed);
        write_run_csv_file(&dir.path().join(format!("{stem}.csv")), &r.series).unwrap();
    }
    let runs = read_run_dir(dir.path()).unwrap();
    let cfg = RunConfig::default();
    let report = bound_report(&runs, &cfg.gains, &cfg.geometry, cfg.bounds.delta_d).unwrap();
    assert_eq!(report.runs, 4);
    assert_eq!(report.compliance_rate, 1.0);
    for (check, record) in report.per_run.iter().zip(&batch.records) {
        assert_eq!(check.measured_delta_r, record.outcome.measured_delta_r);
        assert_eq!(Some(check.verdict), record.outcome.verdict);
    }
    let expected = (cfg.bounds.delta_d + report.max_measured_delta_r) / cfg.gains.kp.min();
    assert_eq!(report.aggregate_ceiling, expected);
}

#[test]
fn bound_report_needs_runs() {
    let cfg = RunConfig::default();
    assert!(bound_report(&[], &cfg.gains, &cfg.geometry, 0.18).is_err());
}
