use dss_core::stats::{regularized_incomplete_beta, student_t_cdf, student_t_two_sided_p};
use dss_core::{paired_t_test, summarize};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

proptest! {
    #[test]
    fn t_cdf_matches_reference(t in -40.0..40.0f64, df in 1.0..200.0f64) {
        let reference = StudentsT::new(0.0, 1.0, df).unwrap().cdf(t);
        prop_assert!((student_t_cdf(t, df) - reference).abs() < 1e-8);
    }

    #[test]
    fn incomplete_beta_matches_reference(a in 0.05..50.0f64, b in 0.05..50.0f64, x in 0.0..=1.0f64) {
        prop_assert!((regularized_incomplete_beta(a, b, x) - beta_reg(a, b, x)).abs() < 1e-8);
    }

    #[test]
    fn cdf_is_one_half_at_zero(df in 1.0..1e4f64) {
        prop_assert!((student_t_cdf(0.0, df) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn p_value_decreases_with_magnitude(t in 0.0..20.0f64, dt in 1e-3..5.0f64, df in 1.0..60.0f64) {
        prop_assert!(student_t_two_sided_p(t + dt, df) <= student_t_two_sided_p(t, df));
        prop_assert_eq!(student_t_two_sided_p(-t, df), student_t_two_sided_p(t, df));
    }

    #[test]
    fn swapping_samples_negates_t(
        pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..30),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let Ok(ab) = paired_t_test(&a, &b) else { return Ok(()) };
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn uniform_improvement_gives_positive_t(
        base in prop::collection::vec(-5.0..5.0f64, 3..20),
        gains in prop::collection::vec(0.1..2.0f64, 20),
    ) {
        let improved: Vec<f64> = base.iter().zip(&gains).map(|(b, g)| b + g).collect();
        let r = paired_t_test(&improved, &base[..improved.len()]).unwrap();
        prop_assert!(r.t > 0.0 && r.mean_diff > 0.0 && r.cohens_d > 0.0);
    }
}

#[test]
fn false_positive_rate_matches_alpha_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let runs = 1000;
    let rejected = (0..runs)
        .filter(|_| {
            let a: Vec<f64> = (0..20).map(|_| noise.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..20).map(|_| noise.sample(&mut rng)).collect();
            paired_t_test(&a, &b).unwrap().p_value < 0.05
        })
        .count();
    let rate = rejected as f64 / runs as f64;
    assert!((0.03..=0.07).contains(&rate), "{rate}");
}

#[test]
fn summary_uses_sample_deviation() {
    let (m, s) = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    assert_eq!(m, 5.0);
    assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
}

#[test]
fn matches_reference_example() {
    // differences 1, 2, 3, 4: mean 2.5, sd sqrt(5/3), t = 2.5 / (sd / 2)
    let r = paired_t_test(&[2.0, 4.0, 6.0, 8.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let t = 2.5 / ((5.0f64 / 3.0).sqrt() / 2.0);
    assert!((r.t - t).abs() < 1e-12);
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 3.0).unwrap().cdf(t));
    assert!((r.p_value - p).abs() < 1e-10);
}
