use cojump_core::cojump::GammaNoiseParams;
use cojump_core::models::{
    bivariate_death_system, multistrain_sir_system, BivariateDeathParams, SirParams,
};
use cojump_core::moments::one_step_distribution_oracle;
use cojump_core::rng::RngStream;
use cojump_core::sampling::{first_event_sizes, one_step_increments, subordinated_increments};
use cojump_core::simulator::{check_trajectory, mass_balance, simulate, Simulator};
use cojump_core::stats::{chi_square_goodness_of_fit, empirical_distribution, total_variation};
use cojump_core::{StateVector, TransitionIdx};
use proptest::prelude::*;

fn first_event_fit(
    spec: &cojump_core::SystemSpec,
    init: &StateVector,
    family: usize,
    seed: u64,
) -> f64 {
    let table = Simulator::new(spec).sampling_table(family, init).unwrap();
    let (sizes, _) =
        first_event_sizes(spec, init, family, 40_000, RngStream::new(seed, 0)).unwrap();
    let (keys, probs): (Vec<_>, Vec<_>) = table.probabilities().into_iter().unzip();
    let observed: Vec<u64> = keys
        .iter()
        .map(|k| sizes.get(k).copied().unwrap_or(0))
        .collect();
    assert_eq!(
        observed.iter().sum::<u64>(),
        sizes.values().sum::<u64>(),
        "sizes outside the support"
    );
    chi_square_goodness_of_fit(&observed, &probs).p_value
}

#[test]
fn bivariate_event_sizes_follow_the_rate_table() {
    let p = BivariateDeathParams {
        y1_0: 8,
        y2_0: 6,
        delta: 0.7,
        tau: 0.9,
    };
    let spec = bivariate_death_system(&p).unwrap();
    assert!(first_event_fit(&spec, &p.initial_state(), 0, 101) > 1e-3);
}

#[test]
fn sir_infection_sizes_follow_the_rate_table() {
    let p = SirParams::default();
    let spec = multistrain_sir_system(&p).unwrap();
    let x = StateVector::new(vec![120, 10, 8, 30, 20, 5, 2, 5]);
    for family in 0..spec.cojump_families().len() {
        assert!(
            first_event_fit(&spec, &x, family, 102 + family as u64) > 1e-3,
            "family {family}"
        );
    }
}

#[test]
fn both_samplers_match_the_quadrature_law() {
    let p = BivariateDeathParams {
        y1_0: 3,
        y2_0: 4,
        delta: 1.0,
        tau: 0.8,
    };
    let spec = bivariate_death_system(&p).unwrap();
    let noise = GammaNoiseParams::new(p.tau).unwrap();
    let h = 0.2;
    let n = 40_000;
    let oracle = one_step_distribution_oracle((3, 4), p.delta, noise, h).unwrap();
    let exact = one_step_increments(
        &spec,
        &p.initial_state(),
        (TransitionIdx(0), TransitionIdx(1)),
        h,
        n,
        RngStream::new(7, 0),
    )
    .unwrap();
    let changed =
        subordinated_increments((3, 4), p.delta, noise, h, n, RngStream::new(7, 1)).unwrap();
    for counts in [&exact, &changed] {
        // Total variation of an exact sampler concentrates around sqrt(cells / n).
        assert!(total_variation(&empirical_distribution(counts), &oracle) < 0.015);
    }
}

fn sir_state() -> impl Strategy<Value = StateVector> {
    proptest::collection::vec(0u64..40, 8).prop_map(StateVector::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bivariate_paths_conserve_mass_and_absorb(
        y1 in 0u64..30, y2 in 0u64..30, delta in 0.05f64..3.0, tau in 0.01f64..3.0, seed in any::<u64>(),
    ) {
        let p = BivariateDeathParams { y1_0: y1, y2_0: y2, delta, tau };
        let spec = bivariate_death_system(&p).unwrap();
        let traj = simulate(&spec, &p.initial_state(), f64::INFINITY, RngStream::new(seed, 0)).unwrap();
        check_trajectory(&spec, &traj).unwrap();
        prop_assert_eq!(traj.final_state().counts(), &[0, 0]);
        prop_assert_eq!(traj.final_counts().counts(), &[y1, y2]);
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sir_paths_conserve_the_population(x in sir_state(), tau in 0.05f64..2.0, seed in any::<u64>()) {
        let p = SirParams { population: x.total(), tau, ..SirParams::default() };
        let spec = multistrain_sir_system(&p).unwrap();
        let traj = simulate(&spec, &x, 0.5, RngStream::new(seed, 0)).unwrap();
        check_trajectory(&spec, &traj).unwrap();
        for s in &traj.states {
            prop_assert_eq!(s.total(), x.total());
        }
        let balance = mass_balance(&spec, &x, traj.final_counts());
        let last: Vec<i64> = traj.final_state().counts().iter().map(|&c| c as i64).collect();
        prop_assert_eq!(balance, last);
    }

    #[test]
    fn paths_are_functions_of_the_seed(x in sir_state(), seed in any::<u64>(), stream in 0u64..1000) {
        let p = SirParams { population: x.total(), ..SirParams::default() };
        let spec = multistrain_sir_system(&p).unwrap();
        let a = simulate(&spec, &x, 0.3, RngStream::new(seed, stream)).unwrap();
        let b = simulate(&spec, &x, 0.3, RngStream::new(seed, stream)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn increments_stay_within_the_population(
        y1 in 0u64..25, y2 in 0u64..25, h in 0.001f64..2.0, seed in any::<u64>(),
    ) {
        let p = BivariateDeathParams { y1_0: y1, y2_0: y2, delta: 0.5, tau: 0.4 };
        let spec = bivariate_death_system(&p).unwrap();
        let mut rng = RngStream::new(seed, 0).generator();
        let n = Simulator::new(&spec).increments(&p.initial_state(), h, &mut rng).unwrap();
        prop_assert!(n.get(TransitionIdx(0)) <= y1 && n.get(TransitionIdx(1)) <= y2);
    }
}
