use super::*;
use crate::cojump::{cojump_covariance_closed_form, pairwise_cojump_rate};
use crate::models::{bivariate_death_system, multistrain_sir_system};
use crate::scalar::relative_difference;

fn death(
    y1: u64,
    y2: u64,
    delta: f64,
    tau: f64,
) -> (SystemSpec, StateVector, BivariateDeathParams) {
    let p = BivariateDeathParams {
        y1_0: y1,
        y2_0: y2,
        delta,
        tau,
    };
    (bivariate_death_system(&p).unwrap(), p.initial_state(), p)
}

fn t(label: &str) -> TransitionType {
    TransitionType::parse(label).unwrap()
}

fn unit_only_system() -> SystemSpec {
    SystemSpec::builder()
        .compartment("A")
        .compartment("B")
        .boundary("D")
        .transition("A", "D")
        .transition("B", "D")
        .unit_family("death A", &[("A", "D")], |x| 0.5 * x.get(0) as f64)
        .unit_family("death B", &[("B", "D")], |x| 0.5 * x.get(1) as f64)
        .build()
        .unwrap()
}

#[test]
fn oracle_trivial_population() {
    let noise = GammaNoiseParams::new(0.5).unwrap();
    let d = one_step_distribution_oracle((0, 0), 0.5, noise, 0.1).unwrap();
    assert_eq!(d, BTreeMap::from([((0, 0), 1.0)]));
}

#[test]
fn oracle_is_normalized() {
    let noise = GammaNoiseParams::new(0.5).unwrap();
    let d = one_step_distribution_oracle((5, 5), 0.5, noise, 0.1).unwrap();
    assert_eq!(d.len(), 36);
    let total: f64 = d.values().sum();
    assert!((total - 1.0).abs() < 1e-8);
    assert!(d.values().all(|&p| p >= 0.0));
    // Exchangeable populations give a symmetric law.
    for d1 in 0..=5 {
        for d2 in 0..=5 {
            assert!((d[&(d1, d2)] - d[&(d2, d1)]).abs() < 1e-10);
        }
    }
}

#[test]
fn oracle_small_step_recovers_cojump_rate() {
    let noise = GammaNoiseParams::new(1.0).unwrap();
    let h = 1e-4;
    let d = one_step_distribution_oracle((1, 1), 1.0, noise, h).unwrap();
    let want = 2.0 * 2f64.ln() - 3f64.ln();
    assert!(relative_difference(d[&(1, 1)] / h, want) < 1e-3);
    let single = pairwise_cojump_rate(1, 1, 1, 0, 1.0, noise).unwrap();
    assert!(relative_difference(d[&(1, 0)] / h, single) < 1e-3);
}

#[test]
fn oracle_marginal_is_binomial_mixture_mean() {
    // E[d1] = y1 E[1 - e^(-delta g)] = y1 (1 - (1 + delta tau)^(-h / tau)).
    let (tau, delta, h) = (0.5, 0.5, 0.1);
    let noise = GammaNoiseParams::new(tau).unwrap();
    let d = one_step_distribution_oracle((5, 3), delta, noise, h).unwrap();
    let mean: f64 = d.iter().map(|(&(d1, _), &p)| d1 as f64 * p).sum();
    let want = 5.0 * (1.0 - (1.0 + delta * tau).powf(-h / tau));
    assert!((mean - want).abs() < 1e-10);
}

#[test]
fn oracle_cross_moment_matches_laplace_transform() {
    // E[d1 d2] = y1 y2 E[p^2] with E[e^(-s g)] = (1 + s tau)^(-h / tau).
    let (tau, delta, h) = (0.5, 0.5, 0.1);
    let noise = GammaNoiseParams::new(tau).unwrap();
    let d = one_step_distribution_oracle((5, 5), delta, noise, h).unwrap();
    let cross: f64 = d.iter().map(|(&(d1, d2), &p)| (d1 * d2) as f64 * p).sum();
    let a = h / tau;
    let p2 = 1.0 - 2.0 * (1.0 + delta * tau).powf(-a) + (1.0 + 2.0 * delta * tau).powf(-a);
    assert!((cross - 25.0 * p2).abs() < 1e-10);
}

#[test]
fn oracle_rejects_large_populations() {
    let noise = GammaNoiseParams::new(0.5).unwrap();
    assert!(matches!(
        one_step_distribution_oracle((31, 1), 0.5, noise, 0.1),
        Err(Error::PopulationCapExceeded { .. })
    ));
}

#[test]
fn exact_mean_examples() {
    let (spec, x, _) = death(1, 0, 1.0, 1.0);
    assert!((infinitesimal_mean(&spec, &x, &t("Y1->D")).unwrap() - 2f64.ln()).abs() < 1e-15);
    let empty = StateVector::new(vec![0, 0]);
    assert_eq!(infinitesimal_mean(&spec, &empty, &t("Y1->D")).unwrap(), 0.0);

    let (spec, x, _) = death(2, 3, 1.0, 1.0);
    let fast = infinitesimal_mean(&spec, &x, &t("Y1->D")).unwrap();
    let slow = infinitesimal_mean_by_marginals(&spec, &x, &t("Y1->D")).unwrap();
    assert!(relative_difference(fast, slow) < 1e-13);
}

#[test]
fn exact_covariance_matches_closed_form() {
    let (spec, x, _) = death(20, 20, 0.5, 0.2);
    let cov = infinitesimal_covariance(&spec, &x, &t("Y1->D"), &t("Y2->D")).unwrap();
    let closed = cojump_covariance_closed_form(20, 20, 0.5, GammaNoiseParams::new(0.2).unwrap());
    assert!(relative_difference(cov, closed) < 1e-9);
    assert_eq!(
        infinitesimal_covariance(
            &unit_only_system(),
            &StateVector::new(vec![4, 4]),
            &t("A->D"),
            &t("B->D")
        )
        .unwrap(),
        0.0
    );
}

#[test]
fn sir_exact_covariance_counts_only_its_strain() {
    let p = SirParams::default();
    let spec = multistrain_sir_system(&p).unwrap();
    let x = StateVector::new(vec![120, 10, 8, 30, 20, 5, 2, 5]);
    let cross = infinitesimal_covariance(&spec, &x, &t("S->I1"), &t("S2->I2*")).unwrap();
    assert_eq!(cross, 0.0);
    let same = infinitesimal_covariance(&spec, &x, &t("S->I1"), &t("S1->I1*")).unwrap();
    assert!(same > 0.0);
}

#[test]
fn estimator_guard_rails() {
    let (spec, x, _) = death(20, 20, 0.5, 0.2);
    let pair = (&t("Y1->D"), &t("Y2->D"));
    let rng = RngStream::new(1, 0);
    assert!(matches!(
        estimate_infinitesimal_covariance(&spec, &x, pair, 0.5, 10_000, rng),
        Err(Error::StepTooLarge { .. })
    ));
    assert_eq!(
        estimate_infinitesimal_covariance(&spec, &x, pair, 0.01, 10, rng).unwrap_err(),
        Error::TooFewReplicates {
            got: 10,
            need: MIN_REPLICATES
        }
    );
    assert!(matches!(
        estimate_infinitesimal_mean(&spec, &x, &t("Y1->Y2"), 0.01, 10_000, rng),
        Err(Error::UnknownTransition(_))
    ));
}

#[test]
fn default_step_targets_small_products() {
    let (spec, x, _) = death(20, 20, 0.5, 0.2);
    let h = default_step(&spec, &x).unwrap();
    assert!((h * rate_function(&spec, &x).unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(
        default_step(&spec, &StateVector::new(vec![0, 0])).unwrap(),
        1.0
    );
}

#[test]
fn mean_estimate_single_population() {
    let (spec, x, _) = death(1, 0, 1.0, 1.0);
    let h = default_step(&spec, &x).unwrap();
    let est = estimate_infinitesimal_mean(&spec, &x, &t("Y1->D"), h, 20_000, RngStream::new(3, 0))
        .unwrap();
    assert_eq!(est.kind, MomentKind::Mean);
    assert!(est.std_error > 0.0);
    // At h * lambda = 0.05 the O(h) bias is far below the Monte Carlo error.
    assert!(est.agrees_with(2f64.ln(), 4.0), "{est:?}");
}

#[test]
fn unit_families_have_no_covariance() {
    let spec = unit_only_system();
    let x = StateVector::new(vec![10, 10]);
    let h = default_step(&spec, &x).unwrap();
    let est = estimate_infinitesimal_covariance(
        &spec,
        &x,
        (&t("A->D"), &t("B->D")),
        h,
        20_000,
        RngStream::new(5, 0),
    )
    .unwrap();
    assert!(est.agrees_with(0.0, 4.0), "{est:?}");
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let (spec, x, _) = death(5, 5, 0.5, 0.5);
    let pair = (&t("Y1->D"), &t("Y2->D"));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                estimate_infinitesimal_covariance(
                    &spec,
                    &x,
                    pair,
                    0.02,
                    5_000,
                    RngStream::new(9, 1),
                )
                .unwrap()
            })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn bound_examples() {
    let (spec, x, p) = death(1, 1, 1.0, 1.0);
    let r = check_p3_bound(&spec, &x, &ModelParams::BivariateDeath(p)).unwrap();
    assert_eq!(r.static_lambda_bound, 2.0);
    assert!((r.lambda_at_state - 3f64.ln()).abs() < 1e-15);
    assert_eq!(r.p3_moment_bound, 8.0);

    let p = SirParams::default();
    let spec = multistrain_sir_system(&p).unwrap();
    let params = ModelParams::MultistrainSir(p.clone());
    let r = check_p3_bound(&spec, &p.default_initial_state(), &params).unwrap();
    let want = (0.02 + 0.5 + 2.0 * (1.5 + 0.01)) * 200.0;
    assert!((r.static_lambda_bound - want).abs() < 1e-9);
    assert_eq!(r.static_increment_bound, 200.0);

    let recovered = spec.state([("R", 200)]).unwrap();
    let r = check_p3_bound(&spec, &recovered, &params).unwrap();
    assert!((r.lambda_at_state - 0.02 * 200.0).abs() < 1e-12);
}

#[test]
fn bound_violation_is_reported() {
    let (spec, _, p) = death(1, 1, 1.0, 1.0);
    let beyond = StateVector::new(vec![100, 100]);
    assert!(matches!(
        check_p3_bound(&spec, &beyond, &ModelParams::BivariateDeath(p)),
        Err(Error::BoundViolated { .. })
    ));
}

#[test]
fn report_layout_and_hash() {
    let x = StateVector::new(vec![20, 20]);
    assert_eq!(state_hash(&x), state_hash(&x.clone()));
    assert_ne!(state_hash(&x), state_hash(&StateVector::new(vec![20, 21])));
    assert_eq!(state_hash(&StateVector::new(vec![])), "cbf29ce484222325");
    let est = MomentEstimate {
        value: 16.5,
        std_error: 0.25,
        replicates: 1000,
        h: 0.01,
        kind: MomentKind::Covariance,
    };
    let rec = EstimateRecord::new("bivariate_death", &x, "Y1->D,Y2->D".into(), &est, 16.0);
    assert_eq!(rec.z_score, 2.0);
    let mut buf = Vec::new();
    write_estimate_report(&[rec], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
    assert!(lines.next().unwrap().contains("\"Y1->D,Y2->D\""));
}
