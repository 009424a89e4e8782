use super::*;
use crate::scalar::relative_difference;

use proptest::prelude::*;

fn noise(tau: f64) -> GammaNoiseParams {
    GammaNoiseParams::new(tau).unwrap()
}

const LN2: f64 = std::f64::consts::LN_2;

fn ln3() -> f64 {
    3f64.ln()
}

#[test]
fn finite_difference_hand_values() {
    assert!((finite_difference_log(1, 1, 1.0, 1.0).unwrap() - LN2).abs() < 1e-15);
    let v = finite_difference_log(2, 2, 1.0, 1.0).unwrap();
    assert!((v - (2.0 * LN2 - ln3())).abs() < 1e-15);
    assert!((v - 0.287_682_072_451_780_9).abs() < 1e-15);
    for n in [1, 5, 40] {
        assert_eq!(finite_difference_log(n, 50, 0.0, 0.3).unwrap(), 0.0);
    }
}

#[test]
fn finite_difference_against_frozen_high_precision_values() {
    // 400-digit reference evaluation of the alternating sum.
    let cases: [(u64, u64, f64, f64, f64); 7] = [
        (30, 40, 0.7, 0.5, 4.158_568_889_684_174e-12),
        (300, 300, 1.0, 1.0, 5.485_724_769_991_171e-4),
        (60, 190, 0.0475, 0.2, 2.999_673_015_532_834e-65),
        (2, 20, 1.0, 1e-6, 9.999_620_010_834_725e-7),
        (25, 300, 1.0, 1.0, 1.961_531_283_682_732_7e-38),
        (150, 300, 1.0, 1.0, 5.135_188_878_587_897e-92),
        (10, 10, 0.5, 0.5, 3.929_643_058_813_258_6e-4),
    ];
    for (n, m, delta, tau, expected) in cases {
        let got = finite_difference_log(n, m, delta, tau).unwrap();
        assert!(
            relative_difference(got, expected) < 1e-12,
            "n={n} m={m}: got {got:e}, expected {expected:e}"
        );
    }
}

#[test]
fn row_agrees_with_single_orders() {
    let row = finite_difference_log_row(40, 0.7, 0.5, PrecisionPolicy::Adaptive).unwrap();
    assert_eq!(row.len(), 41);
    for n in [1u64, 7, 25, 26, 30, 40] {
        let single = finite_difference_log(n, 40, 0.7, 0.5).unwrap();
        assert!(
            relative_difference(row[n as usize], single) < 1e-14,
            "order {n}"
        );
    }
}

#[test]
fn native_only_reports_precision_loss() {
    let err =
        finite_difference_log_with(60, 190, 0.0475, 0.2, PrecisionPolicy::NativeOnly).unwrap_err();
    assert!(
        matches!(err, Error::PrecisionLoss { order: 60, .. }),
        "{err:?}"
    );
    // low orders are well conditioned natively
    let v = finite_difference_log_with(2, 2, 1.0, 1.0, PrecisionPolicy::NativeOnly).unwrap();
    assert!((v - (2.0 * LN2 - ln3())).abs() < 1e-15);
}

#[test]
fn single_precision_kernels() {
    let v = finite_difference_log::<f32>(2, 2, 1.0, 1.0).unwrap();
    assert!((v - 0.287_682_1).abs() < 1e-6);
    let n = GammaNoiseParams::new(1.0f32).unwrap();
    let table =
        PairwiseRateTable::<f32>::build(3, 4, 0.7, GammaNoiseParams::new(0.5).unwrap()).unwrap();
    let closed = cojump_covariance_closed_form(3, 4, 0.7f32, GammaNoiseParams::new(0.5).unwrap());
    assert!(relative_difference(theorem1_covariance_by_summation(&table), closed) < 1e-5);
    assert!((total_cojump_rate(1, 1, 1.0f32, n) - 3f32.ln()).abs() < 1e-6);
}

#[test]
fn pairwise_examples() {
    let r = pairwise_cojump_rate(1, 0, 1, 0, 1.0, noise(1.0)).unwrap();
    assert!((r - LN2).abs() < 1e-15);
    let r = pairwise_cojump_rate(1, 1, 1, 1, 1.0, noise(1.0)).unwrap();
    assert!((r - (2.0 * LN2 - ln3())).abs() < 1e-15);
    assert_eq!(
        pairwise_cojump_rate(5, 5, 6, 0, 1.0, noise(1.0)),
        Err(Error::InvalidJumpSize {
            y1: 5,
            y2: 5,
            k1: 6,
            k2: 0
        })
    );
    assert!(matches!(
        pairwise_cojump_rate(5, 5, 0, 0, 1.0, noise(1.0)),
        Err(Error::InvalidJumpSize { .. })
    ));
}

#[test]
fn total_rate_examples() {
    assert_eq!(total_cojump_rate(0, 0, 1.0, noise(1.0)), 0.0);
    assert!((total_cojump_rate(1, 1, 1.0, noise(1.0)) - ln3()).abs() < 1e-15);
    let v = total_cojump_rate(20, 30, 0.5, noise(0.2));
    assert!((v - 5.0 * 6f64.ln()).abs() < 1e-13);
    assert!((v - 8.958_797_346_140_274).abs() < 1e-12);
}

#[test]
fn covariance_examples() {
    assert_eq!(cojump_covariance_closed_form(0, 7, 1.0, noise(1.0)), 0.0);
    let v = cojump_covariance_closed_form(1, 1, 1.0, noise(1.0));
    assert!((v - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    let v = cojump_covariance_closed_form(20, 20, 0.5, noise(0.2));
    assert!((v - 2000.0 * (1.21f64 / 1.2).ln()).abs() < 1e-10);
    assert!((v - 16.597_605_629_390_13).abs() < 1e-9, "{v}");
}

#[test]
fn covariance_summation_examples() {
    let t = PairwiseRateTable::build(1, 1, 1.0, noise(1.0)).unwrap();
    assert!((theorem1_covariance_by_summation(&t) - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    let t = PairwiseRateTable::build(0, 6, 1.0, noise(1.0)).unwrap();
    assert_eq!(theorem1_covariance_by_summation(&t), 0.0);
    let t = PairwiseRateTable::build(3, 4, 0.7, noise(0.5)).unwrap();
    let closed = cojump_covariance_closed_form(3, 4, 0.7, noise(0.5));
    assert!(relative_difference(theorem1_covariance_by_summation(&t), closed) < 1e-8);
}

#[test]
fn marginal_by_partner_summation() {
    // y = (2, 3): brute force over the partner index
    let t = PairwiseRateTable::build(2, 3, 1.0, noise(1.0)).unwrap();
    let brute: f64 = (0..=3)
        .map(|k2| pairwise_cojump_rate(2, 3, 1, k2, 1.0, noise(1.0)).unwrap())
        .sum();
    assert!(relative_difference(t.marginal_first(1), brute) < 1e-14);
    let t = PairwiseRateTable::build(1, 0, 1.0, noise(1.0)).unwrap();
    assert!((t.marginal_first(1) - LN2).abs() < 1e-15);
}

#[test]
fn identities_on_the_grid() {
    let grid = [0.1, 0.5, 1.0, 2.0];
    for &delta in &grid {
        for &tau in &grid {
            for y1 in 0..=12 {
                for y2 in 0..=12 {
                    let t = PairwiseRateTable::build(y1, y2, delta, noise(tau)).unwrap();
                    let total = total_cojump_rate(y1, y2, delta, noise(tau));
                    assert!(relative_difference(t.total(), total) <= 1e-9);
                    let cov = cojump_covariance_closed_form(y1, y2, delta, noise(tau));
                    assert!(relative_difference(theorem1_covariance_by_summation(&t), cov) <= 1e-8);
                }
            }
        }
    }
}

#[test]
fn independence_limit() {
    let tau = 1e-6;
    for (y1, y2, delta) in [
        (1u64, 1u64, 1.0),
        (10, 20, 0.5),
        (50, 3, 0.5),
        (12, 12, 2.0),
    ] {
        let single = pairwise_cojump_rate(y1, y2, 1, 0, delta, noise(tau)).unwrap();
        let target = delta * y1 as f64;
        assert!((single - target).abs() <= 1e-4 * target);
        let co = pairwise_cojump_rate(y1, y2, 1, 1, delta, noise(tau)).unwrap();
        assert!(co <= 2.0 * delta * delta * tau * (y1 * y2) as f64 * (1.0 + 1e-3));
        let cov = cojump_covariance_closed_form(y1, y2, delta, noise(tau));
        let limit = (y1 * y2) as f64 * delta * delta;
        assert!(relative_difference(cov / tau, limit) <= 1e-3);
    }
}

#[test]
fn population_cap_is_enforced() {
    assert_eq!(
        PairwiseRateTable::build(301, 0, 1.0, noise(1.0)),
        Err(Error::PopulationCapExceeded {
            requested: 301,
            cap: 300
        })
    );
}

#[test]
fn invalid_inputs() {
    assert!(GammaNoiseParams::new(0.0).is_err());
    assert!(GammaNoiseParams::new(f64::NAN).is_err());
    assert!(finite_difference_log(0, 3, 1.0, 1.0).is_err());
    assert!(finite_difference_log(4, 3, 1.0, 1.0).is_err());
    assert!(finite_difference_log(1, 3, -1.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_in_the_two_populations(
        y1 in 0u64..20, y2 in 0u64..20, a in 0u64..20, b in 0u64..20,
        delta in 0.01f64..3.0, tau in 0.01f64..3.0,
    ) {
        let (k1, k2) = (a.min(y1), b.min(y2));
        prop_assume!(k1 + k2 > 0);
        let lhs = pairwise_cojump_rate(y1, y2, k1, k2, delta, noise(tau)).unwrap();
        let rhs = pairwise_cojump_rate(y2, y1, k2, k1, delta, noise(tau)).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn rates_are_nonnegative_and_normalized(
        y1 in 0u64..40, y2 in 0u64..40, delta in 0.001f64..5.0, tau in 0.001f64..5.0,
    ) {
        let t = PairwiseRateTable::build(y1, y2, delta, noise(tau)).unwrap();
        for (_, r) in t.iter() {
            prop_assert!(r >= 0.0);
        }
        let total = total_cojump_rate(y1, y2, delta, noise(tau));
        prop_assert!(relative_difference(t.total(), total) <= 1e-9);
    }

    #[test]
    fn covariance_positive(y1 in 1u64..100, y2 in 1u64..100, delta in 1e-3f64..10.0, tau in 1e-3f64..10.0) {
        prop_assert!(cojump_covariance_closed_form(y1, y2, delta, noise(tau)) > 0.0);
    }
}
