use dss::io::{read_dataset, read_trajectory_csv, write_dataset, write_trajectory_csv};
use dss::model_file::{load_model, save_model};
use dss_core::cartpole::{
    generate_trials, ControllerConfig, InitialConditions, OptimalController, Policy, SimParams,
    SubjectSkill,
};
use dss_core::{behavior_frequencies, cartpole_basis, segment, SegmentParams};

fn trials(policy: Policy, n: usize, seed: u64) -> Vec<dss_core::Trajectory> {
    let c = OptimalController::new(SimParams::default(), ControllerConfig::default()).unwrap();
    generate_trials(&policy, &c, n, 20.0, &InitialConditions::default(), seed).unwrap()
}

#[test]
fn csv_round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let t = &trials(Policy::Random, 1, 4)[0];
    let path = tmp.path().join("t.csv");
    write_trajectory_csv(&path, t).unwrap();
    let back = read_trajectory_csv(&path, t.trial_id, Some(t.dt())).unwrap();
    assert_eq!(back.states(), t.states());
    assert_eq!(back.controls(), t.controls());
}

#[test]
fn dataset_round_trip_keeps_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let skill = SubjectSkill {
        gain_error: 0.1,
        delay: 1,
        noise: 0.2,
    };
    let ts = trials(Policy::AssistedSubject { skill }, 3, 8);
    let written = write_dataset(
        tmp.path(),
        "s",
        &ts,
        8,
        &SimParams::default(),
        &ControllerConfig::default(),
    )
    .unwrap();
    assert_eq!(written.len(), 4);
    let (manifest, back) = read_dataset(tmp.path()).unwrap();
    assert_eq!(manifest.seed, 8);
    assert_eq!(back, ts);
}

#[test]
fn saved_model_scores_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = trials(Policy::Optimal, 10, 1);
    let basis = cartpole_basis(SimParams::default().u_sat).unwrap();
    let model = segment(&reference, &basis, &SegmentParams::default()).unwrap();
    let path = tmp.path().join("model.json");
    save_model(&path, &model).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    let probe = trials(Policy::Random, 3, 2);
    for t in reference.iter().take(2).chain(&probe) {
        assert_eq!(
            model.classify_trajectory(t).unwrap(),
            loaded.classify_trajectory(t).unwrap()
        );
    }
    assert_eq!(
        behavior_frequencies(&model, &probe).unwrap(),
        behavior_frequencies(&loaded, &probe).unwrap()
    );
}

#[test]
fn unknown_model_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("model.json");
    std::fs::write(
        &path,
        r#"{"schema_version": 99, "divergence_unit": "nats", "model": {}}"#,
    )
    .unwrap();
    assert!(load_model(&path).is_err());
}
