//! Verification suites. Each produces one row per check; a run passes iff
//! every row passes.

use std::io::Write;

use clap::ValueEnum;
use cojump_core::cojump::{
    cojump_covariance_closed_form, theorem1_covariance_by_summation, total_cojump_rate,
    GammaNoiseParams, PairwiseRateTable,
};
use cojump_core::models::{bivariate_death_system, BivariateDeathParams};
use cojump_core::moments::{
    check_p3_bound, default_step, estimate_infinitesimal_covariance, estimate_infinitesimal_mean,
    infinitesimal_covariance, infinitesimal_mean, one_step_distribution_oracle, state_hash,
};
use cojump_core::rng::RngStream;
use cojump_core::sampling::visited_states;
use cojump_core::sampling::{first_event_sizes, one_step_increments, subordinated_increments};
use cojump_core::scalar::relative_difference;
use cojump_core::simulator::Simulator;
use cojump_core::stats::{
    chi_square_goodness_of_fit, chi_square_two_sample, empirical_distribution, total_variation,
};
use cojump_core::{Error, Result, TransitionIdx};
use serde::Serialize;

use crate::config::RunConfig;

/// Monte Carlo suites never run with fewer replicates than this.
pub const MIN_SUITE_REPLICATES: u64 = 100_000;

pub const BOUND_STATES: usize = 1_000;

const GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Oracle,
    Moments,
    Bounds,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Oracle => "oracle",
            Suite::Moments => "moments",
            Suite::Bounds => "bounds",
        }
    }
}

/// `statistic` is compared with `limit`: at most for errors and distances,
/// at least for p-values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub case: String,
    pub value: f64,
    pub target: f64,
    pub statistic: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CheckRow {
    fn at_most(
        check: &str,
        case: String,
        value: f64,
        target: f64,
        statistic: f64,
        limit: f64,
    ) -> Self {
        Self {
            check: check.into(),
            case,
            value,
            target,
            statistic,
            limit,
            passed: statistic <= limit,
        }
    }

    fn at_least(check: &str, case: String, statistic: f64, limit: f64) -> Self {
        Self {
            check: check.into(),
            case,
            value: statistic,
            target: limit,
            statistic,
            limit,
            passed: statistic > limit,
        }
    }
}

pub fn write_rows<W: Write>(rows: &[CheckRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(suite: Suite, config: &RunConfig, replicates: u64) -> Result<Vec<CheckRow>> {
    let replicates = replicates.max(MIN_SUITE_REPLICATES);
    match suite {
        Suite::Identities => identities(),
        Suite::Oracle => oracle(config.seed, replicates),
        Suite::Moments => moments(config, replicates),
        Suite::Bounds => bounds(config),
    }
}

fn identities() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for delta in GRID {
        for tau in GRID {
            let noise = GammaNoiseParams::new(tau)?;
            for y1 in 0..=12 {
                for y2 in 0..=12 {
                    let table = PairwiseRateTable::build(y1, y2, delta, noise)?;
                    let case = format!("y1={y1} y2={y2} delta={delta} tau={tau}");
                    let sum = theorem1_covariance_by_summation(&table);
                    let closed = cojump_covariance_closed_form(y1, y2, delta, noise);
                    rows.push(CheckRow::at_most(
                        "covariance_summation",
                        case.clone(),
                        sum,
                        closed,
                        relative_difference(sum, closed),
                        1e-8,
                    ));
                    let total = total_cojump_rate(y1, y2, delta, noise);
                    rows.push(CheckRow::at_most(
                        "normalization",
                        case,
                        table.total(),
                        total,
                        relative_difference(table.total(), total),
                        1e-9,
                    ));
                }
            }
        }
    }
    let noise = GammaNoiseParams::new(1.0)?;
    for m in (50..=300).step_by(50) {
        let (y1, y2) = (m / 2, m - m / 2);
        let table = PairwiseRateTable::build(y1, y2, 1.0, noise)?;
        let total = total_cojump_rate(y1, y2, 1.0, noise);
        rows.push(CheckRow::at_most(
            "normalization_extended",
            format!("y1={y1} y2={y2} delta=1 tau=1"),
            table.total(),
            total,
            relative_difference(table.total(), total),
            1e-9,
        ));
    }
    Ok(rows)
}

/// One-step law of the bivariate death system at `(5, 5)`, `delta = 0.5`,
/// `tau = 0.5`, `h = 0.1` under three constructions.
fn oracle(seed: u64, replicates: u64) -> Result<Vec<CheckRow>> {
    let params = BivariateDeathParams {
        y1_0: 5,
        y2_0: 5,
        delta: 0.5,
        tau: 0.5,
    };
    let spec = bivariate_death_system(&params)?;
    let init = params.initial_state();
    let noise = GammaNoiseParams::new(params.tau)?;
    let h = 0.1;
    let case = format!("y0=(5,5) delta=0.5 tau=0.5 h=0.1 replicates={replicates}");

    let exact = one_step_increments(
        &spec,
        &init,
        (TransitionIdx(0), TransitionIdx(1)),
        h,
        replicates,
        RngStream::new(seed, 1),
    )?;
    let time_changed = subordinated_increments(
        (5, 5),
        params.delta,
        noise,
        h,
        replicates,
        RngStream::new(seed, 2),
    )?;
    let quadrature = one_step_distribution_oracle((5, 5), params.delta, noise, h)?;

    let mut rows = Vec::new();
    let mass: f64 = quadrature.values().sum();
    rows.push(CheckRow::at_most(
        "quadrature_normalization",
        case.clone(),
        mass,
        1.0,
        (mass - 1.0).abs(),
        1e-8,
    ));
    let two = chi_square_two_sample(&exact, &time_changed);
    rows.push(CheckRow::at_least(
        "two_sample_chi_square",
        case.clone(),
        two.p_value,
        1e-3,
    ));
    for (name, counts) in [
        ("tv_exact_vs_quadrature", &exact),
        ("tv_time_change_vs_quadrature", &time_changed),
    ] {
        let tv = total_variation(&empirical_distribution(counts), &quadrature);
        rows.push(CheckRow::at_most(name, case.clone(), tv, 0.0, tv, 0.01));
    }

    let table = Simulator::new(&spec).sampling_table(0, &init)?;
    let (sizes, _) = first_event_sizes(&spec, &init, 0, replicates, RngStream::new(seed, 3))?;
    let (keys, probs): (Vec<_>, Vec<_>) = table.probabilities().into_iter().unzip();
    let observed: Vec<u64> = keys
        .iter()
        .map(|k| sizes.get(k).copied().unwrap_or(0))
        .collect();
    let gof = chi_square_goodness_of_fit(&observed, &probs);
    rows.push(CheckRow::at_least(
        "first_event_chi_square",
        case,
        gof.p_value,
        1e-3,
    ));
    Ok(rows)
}

/// Means and covariances of every co-jump family at the configured state,
/// each within three standard errors of its exact value.
fn moments(config: &RunConfig, replicates: u64) -> Result<Vec<CheckRow>> {
    let spec = config.spec()?;
    let x = &config.init;
    let h = default_step(&spec, x)?;
    let mut rows = Vec::new();
    for (i, family) in spec.cojump_families().iter().enumerate() {
        let first = spec.transitions()[family.first().0].clone();
        let second = spec.transitions()[family.second().0].clone();
        let rng = |k: u64| RngStream::new(config.seed, 10 * i as u64 + k);
        let est =
            estimate_infinitesimal_covariance(&spec, x, (&first, &second), h, replicates, rng(0))?;
        let target = infinitesimal_covariance(&spec, x, &first, &second)?;
        rows.push(CheckRow::at_most(
            "covariance",
            format!("{first},{second} h={h}"),
            est.value,
            target,
            est.z_score(target).abs(),
            3.0,
        ));
        for (k, t) in [(1, &first), (2, &second)] {
            let est = estimate_infinitesimal_mean(&spec, x, t, h, replicates, rng(k))?;
            let target = infinitesimal_mean(&spec, x, t)?;
            rows.push(CheckRow::at_most(
                "mean",
                format!("{t} h={h}"),
                est.value,
                target,
                est.z_score(target).abs(),
                3.0,
            ));
        }
    }
    Ok(rows)
}

fn bounds(config: &RunConfig) -> Result<Vec<CheckRow>> {
    let spec = config.spec()?;
    let t_end = if config.t_end > 0.0 {
        config.t_end
    } else {
        1.0
    };
    let states = visited_states(
        &spec,
        &config.init,
        BOUND_STATES,
        t_end,
        RngStream::new(config.seed, 4),
    )?;
    let mut rows = Vec::with_capacity(states.len());
    for x in &states {
        let (lambda, bound) = match check_p3_bound(&spec, x, &config.params) {
            Ok(r) => (r.lambda_at_state, r.static_lambda_bound),
            Err(Error::BoundViolated { lambda, bound }) => (lambda, bound),
            Err(e) => return Err(e),
        };
        rows.push(CheckRow::at_most(
            "rate_bound",
            state_hash(x),
            lambda,
            bound,
            lambda,
            bound,
        ));
    }
    Ok(rows)
}
