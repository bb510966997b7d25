use dss_core::{train_svm, KernelKind, LiftedPoint, SvmParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lp(v: &[f64]) -> LiftedPoint {
    LiftedPoint::new(v.to_vec())
}

/// Three classes separated by a margin of at least 1 along the first coordinate.
fn separable(seed: u64, per: usize) -> Vec<(LiftedPoint, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in 0..3 {
        for _ in 0..per {
            let x = class as f64 * 4.0 + rng.random_range(-1.5..1.5);
            let y = rng.random_range(-3.0..3.0);
            let z = rng.random_range(-1.0..1.0);
            out.push((lp(&[x, y, z]), class));
        }
    }
    out
}

#[test]
fn separable_data_is_fit_exactly() {
    for kernel in [KernelKind::Rbf, KernelKind::Linear] {
        let data = separable(3, 40);
        let params = SvmParams {
            kernel,
            ..SvmParams::default()
        };
        let model = train_svm(&data, &params).unwrap();
        let wrong = data
            .iter()
            .filter(|(p, l)| model.classify(p).unwrap() != *l)
            .count();
        assert_eq!(wrong, 0, "{kernel:?}");
    }
}

#[test]
fn xor_needs_the_rbf_kernel() {
    let mut data = Vec::new();
    for (x, y) in [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)] {
        for k in 0..5 {
            let j = 0.02 * k as f64;
            data.push((lp(&[x + j, y - j]), usize::from(x != y)));
        }
    }
    let model = train_svm(
        &data,
        &SvmParams {
            c: 100.0,
            ..SvmParams::default()
        },
    )
    .unwrap();
    assert!(data.iter().all(|(p, l)| model.classify(p).unwrap() == *l));
}

#[test]
fn single_class_predicts_that_class() {
    let data: Vec<_> = (0..5).map(|i| (lp(&[i as f64, 1.0]), 4)).collect();
    let model = train_svm(&data, &SvmParams::default()).unwrap();
    assert_eq!(model.classify(&lp(&[100.0, -3.0])).unwrap(), 4);
}

#[test]
fn rejects_wrong_query_dimension() {
    let model = train_svm(&separable(1, 10), &SvmParams::default()).unwrap();
    assert!(model.classify(&lp(&[1.0])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn common_rescaling_leaves_predictions_unchanged(
        seed in any::<u64>(),
        factor in 1e-3..1e3f64,
        queries in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 20),
    ) {
        let data = separable(seed, 15);
        let scaled: Vec<_> = data
            .iter()
            .map(|(p, l)| (lp(&p.as_slice().iter().map(|v| v * factor).collect::<Vec<_>>()), *l))
            .collect();
        let a = train_svm(&data, &SvmParams::default()).unwrap();
        let b = train_svm(&scaled, &SvmParams::default()).unwrap();
        for q in &queries {
            let qs: Vec<f64> = q.iter().map(|v| v * factor).collect();
            prop_assert_eq!(a.classify(&lp(q)).unwrap(), b.classify(&lp(&qs)).unwrap());
        }
    }

    #[test]
    fn every_point_gets_exactly_one_known_label(
        seed in any::<u64>(),
        q in prop::array::uniform3(-1e3..1e3f64),
    ) {
        let data = separable(seed, 10);
        let model = train_svm(&data, &SvmParams::default()).unwrap();
        let first = model.classify(&lp(&q)).unwrap();
        prop_assert!(first < 3);
        prop_assert_eq!(first, model.classify(&lp(&q)).unwrap());
    }
}
