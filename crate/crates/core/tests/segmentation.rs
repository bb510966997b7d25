mod common;

use common::{rotation, states_trajectory, switched_states, SWITCH, SWITCHED_LEN};
use dss_core::segmentation::{make_windows, operator_bank};
use dss_core::{
    segment, segment_detailed, BasisSpec, LiftedPoint, LiftedTrajectory, SegmentParams, WindowSpec,
};
use nalgebra::Vector2;

fn params() -> SegmentParams {
    SegmentParams {
        window: WindowSpec::new(100, 0.5).unwrap(),
        ..SegmentParams::default()
    }
}

#[test]
fn window_starts_follow_the_stride() {
    let lifted = |n: usize| {
        LiftedTrajectory::new(
            (0..n).map(|k| LiftedPoint::new(vec![k as f64])).collect(),
            1.0,
            0,
        )
        .unwrap()
    };
    let starts = |n, s, o| {
        let l = lifted(n);
        make_windows(&l, &WindowSpec::new(s, o).unwrap())
            .unwrap()
            .iter()
            .map(|w| w.start)
            .collect::<Vec<_>>()
    };
    assert_eq!(starts(10, 4, 0.5), vec![0, 2, 4, 6]);
    assert_eq!(starts(10, 10, 0.0), vec![0]);
    assert_eq!(starts(9, 4, 0.75), vec![0, 1, 2, 3, 4, 5]);
    assert!(make_windows(&lifted(3), &WindowSpec::new(4, 0.5).unwrap()).is_err());
}

#[test]
fn bank_size_for_thirty_long_trials() {
    let basis = BasisSpec::affine(1).unwrap();
    let trials: Vec<LiftedTrajectory> = (0..30u32)
        .map(|t| {
            let values: Vec<f64> = (0..1800)
                .map(|k| ((k as f64) * 0.01 + f64::from(t)).sin())
                .collect();
            basis
                .lift(&dss_core::Trajectory::from_scalar(t, 1.0 / 60.0, &values).unwrap())
                .unwrap()
        })
        .collect();
    let bank = operator_bank(&trials, &WindowSpec::new(120, 0.75).unwrap(), basis.id()).unwrap();
    assert_eq!(bank.len(), 30 * 57);
    for pair in bank.entries.windows(2) {
        assert!(pair[0].trial < pair[1].trial || pair[0].start < pair[1].start);
    }
}

#[test]
fn short_trial_is_rejected_with_its_id() {
    let basis = BasisSpec::affine(1).unwrap();
    let ok = basis
        .lift(&dss_core::Trajectory::from_scalar(0, 1.0, &[1.0; 10]).unwrap())
        .unwrap();
    let short = basis
        .lift(&dss_core::Trajectory::from_scalar(7, 1.0, &[1.0; 3]).unwrap())
        .unwrap();
    let err =
        operator_bank(&[ok, short], &WindowSpec::new(4, 0.5).unwrap(), basis.id()).unwrap_err();
    assert!(err.to_string().contains('7'), "{err}");
}

#[test]
fn switched_system_exemplars_are_convex_and_predictive() {
    let states = switched_states();
    let traj = states_trajectory(states);
    let basis = BasisSpec::affine(2).unwrap();
    let seg = segment_detailed(&[traj], &basis, &params()).unwrap();
    assert_eq!(seg.model.num_behaviors(), 2);

    // exemplar convexity
    for (j, ex) in seg.model.exemplars().exemplars.iter().enumerate() {
        let members = seg.clusters.class_members(j).unwrap();
        for (e, value) in ex.flatten().iter().enumerate() {
            let entries = members.iter().map(|&i| seg.bank.operators[i].flatten()[e]);
            let lo = entries.clone().fold(f64::INFINITY, f64::min);
            let hi = entries.fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * (1.0 + value.abs());
            assert!(*value >= lo - slack && *value <= hi + slack);
        }
    }

    // coverage
    let labels = &seg.labeled.trials[0].labels;
    assert_eq!(labels.len(), SWITCHED_LEN);

    // the assigned exemplar predicts best away from the switch
    let pts = &seg.lifted[0].points;
    let exemplars = &seg.model.exemplars().exemplars;
    let (mut good, mut total) = (0usize, 0usize);
    for k in 0..SWITCHED_LEN - 1 {
        if k.abs_diff(SWITCH) <= params().window.size {
            continue;
        }
        let Some(l) = labels[k] else { continue };
        let err = |j: usize| {
            let p = exemplars[j].predict(&pts[k]).unwrap();
            p.as_slice()
                .iter()
                .zip(pts[k + 1].as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        total += 1;
        if (0..exemplars.len()).all(|j| err(l) <= err(j)) {
            good += 1;
        }
    }
    assert!(total > 0);
    assert!(good as f64 >= 0.95 * total as f64, "{good}/{total}");
}

#[test]
fn a_single_linear_system_yields_one_behavior() {
    let r = rotation(0.21);
    let mut x = Vector2::new(1.0, 0.0);
    let mut states = Vec::new();
    for _ in 0..SWITCHED_LEN {
        states.push(vec![x[0], x[1]]);
        x = r * x;
    }
    let model = segment(
        &[states_trajectory(states)],
        &BasisSpec::affine(2).unwrap(),
        &params(),
    )
    .unwrap();
    assert_eq!(model.num_behaviors(), 1);
}

#[test]
fn segmentation_is_deterministic() {
    let traj = states_trajectory(switched_states());
    let basis = BasisSpec::affine(2).unwrap();
    let a = segment(std::slice::from_ref(&traj), &basis, &params()).unwrap();
    let b = segment(&[traj], &basis, &params()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_input_names_the_failing_stage() {
    let err = segment(&[], &BasisSpec::affine(2).unwrap(), &params()).unwrap_err();
    assert!(err.to_string().contains("lift"), "{err}");
}
