//! Infinitesimal moments: Monte Carlo estimators, exact targets, a quadrature
//! oracle for the one-step law of the gamma-subordinated death process, and
//! static rate bounds.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::binomial::PascalTriangle;
use crate::cojump::GammaNoiseParams;
use crate::error::{Error, Result};
use crate::models::{BivariateDeathParams, SirParams};
use crate::quadrature::{integrate_vec, QuadratureOptions};
use crate::rng::RngStream;
use crate::scalar::NeumaierSum;
use crate::simulator::Simulator;
use crate::system::{
    marginal_rate, rate_function, StateVector, SystemSpec, TransitionIdx, TransitionType,
};

/// Fewest replicates an estimator accepts.
pub const MIN_REPLICATES: u64 = 1_000;

/// Replicates are pooled into this many batches for the standard error.
pub const BATCHES: u64 = 100;

/// Largest admissible `h * lambda(x)`.
pub const MAX_STEP_RATE_PRODUCT: f64 = 0.1;

/// `h * lambda(x)` targeted by [`default_step`].
pub const DEFAULT_STEP_RATE_PRODUCT: f64 = 0.05;

/// Largest source population the one-step oracle accepts.
pub const ORACLE_POPULATION_CAP: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    Mean,
    Variance,
    Covariance,
}

/// Monte Carlo estimate of an infinitesimal moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub h: f64,
    pub kind: MomentKind,
}

impl MomentEstimate {
    /// Standardized distance to `target`; zero when both error and distance vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.value - target;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Step `h` with `h * lambda(x) = 0.05`; unit step when nothing can happen.
pub fn default_step(spec: &SystemSpec, state: &StateVector) -> Result<f64> {
    let lambda = rate_function(spec, state)?;
    Ok(if lambda > 0.0 {
        DEFAULT_STEP_RATE_PRODUCT / lambda
    } else {
        1.0
    })
}

fn check_regime(spec: &SystemSpec, state: &StateVector, h: f64, replicates: u64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step h must be positive, got {h}"
        )));
    }
    let product = h * rate_function(spec, state)?;
    if product > MAX_STEP_RATE_PRODUCT {
        return Err(Error::StepTooLarge {
            h,
            product,
            limit: MAX_STEP_RATE_PRODUCT,
        });
    }
    if replicates < MIN_REPLICATES {
        return Err(Error::TooFewReplicates {
            got: replicates,
            need: MIN_REPLICATES,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    sx: f64,
    sy: f64,
    sxy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxy += x * y;
    }

    fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sx += other.sx;
        self.sy += other.sy;
        self.sxy += other.sxy;
    }

    fn mean_x(&self) -> f64 {
        self.sx / self.n
    }

    /// Unbiased sample covariance.
    fn covariance(&self) -> f64 {
        (self.sxy - self.sx * self.sy / self.n) / (self.n - 1.0)
    }
}

/// Runs the replicates in `BATCHES` contiguous batches in parallel; replicate
/// `r` always draws from substream `r`, so the result does not depend on the
/// number of worker threads.
fn batched_increments(
    spec: &SystemSpec,
    state: &StateVector,
    pair: (TransitionIdx, TransitionIdx),
    h: f64,
    replicates: u64,
    rng: RngStream,
) -> Result<Vec<Moments>> {
    (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut sim = Simulator::new(spec);
            let mut acc = Moments::default();
            for r in b * replicates / BATCHES..(b + 1) * replicates / BATCHES {
                let mut g = rng.substream(r).generator();
                let n = sim.increments(state, h, &mut g)?;
                acc.push(n.get(pair.0) as f64, n.get(pair.1) as f64);
            }
            Ok(acc)
        })
        .collect()
}

fn pooled(batches: &[Moments]) -> Moments {
    let mut all = Moments::default();
    for b in batches {
        all.merge(b);
    }
    all
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// `h^-1 Cov[dN_a, dN_b]` over one step of length `h` from `state`.
///
/// The standard error is the spread of the 100 batch estimates divided by 10.
pub fn estimate_infinitesimal_covariance(
    spec: &SystemSpec,
    state: &StateVector,
    pair: (&TransitionType, &TransitionType),
    h: f64,
    replicates: u64,
    rng: RngStream,
) -> Result<MomentEstimate> {
    let idx = (
        spec.transition_index(pair.0)?,
        spec.transition_index(pair.1)?,
    );
    check_regime(spec, state, h, replicates)?;
    let batches = batched_increments(spec, state, idx, h, replicates, rng)?;
    Ok(MomentEstimate {
        value: pooled(&batches).covariance() / h,
        std_error: spread(batches.iter().map(|b| b.covariance() / h)),
        replicates,
        h,
        kind: if idx.0 == idx.1 {
            MomentKind::Variance
        } else {
            MomentKind::Covariance
        },
    })
}

/// `h^-1 E[dN_t]` over one step of length `h` from `state`.
pub fn estimate_infinitesimal_mean(
    spec: &SystemSpec,
    state: &StateVector,
    t: &TransitionType,
    h: f64,
    replicates: u64,
    rng: RngStream,
) -> Result<MomentEstimate> {
    let idx = spec.transition_index(t)?;
    check_regime(spec, state, h, replicates)?;
    let batches = batched_increments(spec, state, (idx, idx), h, replicates, rng)?;
    Ok(MomentEstimate {
        value: pooled(&batches).mean_x() / h,
        std_error: spread(batches.iter().map(|b| b.mean_x() / h)),
        replicates,
        h,
        kind: MomentKind::Mean,
    })
}

/// Exact infinitesimal mean `sum_k k q_t(x, k)`.
pub fn infinitesimal_mean(
    spec: &SystemSpec,
    state: &StateVector,
    t: &TransitionType,
) -> Result<f64> {
    let idx = spec.transition_index(t)?;
    let mut sum = NeumaierSum::<f64>::new();
    for f in spec.unit_families() {
        sum.add(f.event().increment(idx) as f64 * f.rate(state));
    }
    for f in spec.cojump_families() {
        if f.first() != idx && f.second() != idx {
            continue;
        }
        let (m1, m2) = f.rate_table(state)?.mean_rates();
        if f.first() == idx {
            sum.add(m1);
        }
        if f.second() == idx {
            sum.add(m2);
        }
    }
    Ok(sum.total())
}

/// Exact infinitesimal covariance `sum_l l_a l_b q(x, l)` over every family.
pub fn infinitesimal_covariance(
    spec: &SystemSpec,
    state: &StateVector,
    a: &TransitionType,
    b: &TransitionType,
) -> Result<f64> {
    let (ia, ib) = (spec.transition_index(a)?, spec.transition_index(b)?);
    let mut sum = NeumaierSum::<f64>::new();
    for f in spec.unit_families() {
        let e = f.event();
        sum.add((e.increment(ia) * e.increment(ib)) as f64 * f.rate(state));
    }
    for f in spec.cojump_families() {
        let weight = |t: TransitionIdx, k1: u64, k2: u64| {
            (if f.first() == t { k1 } else { 0 }) + (if f.second() == t { k2 } else { 0 })
        };
        if weight(ia, 1, 1) == 0 || weight(ib, 1, 1) == 0 {
            continue;
        }
        for ((k1, k2), q) in f.rate_table(state)?.iter() {
            sum.add((weight(ia, k1, k2) * weight(ib, k1, k2)) as f64 * q);
        }
    }
    Ok(sum.total())
}

/// Sum over `k >= 1` of `k * marginal_rate(t, k)`; a slower cross-check of
/// [`infinitesimal_mean`].
pub fn infinitesimal_mean_by_marginals(
    spec: &SystemSpec,
    state: &StateVector,
    t: &TransitionType,
) -> Result<f64> {
    let largest = state.counts().iter().copied().max().unwrap_or(0).max(1);
    let mut sum = NeumaierSum::<f64>::new();
    for k in 1..=largest {
        sum.add(k as f64 * marginal_rate(spec, state, t, k)?);
    }
    Ok(sum.total())
}

/// Joint law of the death counts over `[0, h]` of two populations sharing the
/// gamma clock `g ~ Gamma(h / tau, tau)`:
/// `P(d1, d2) = E[Bin(d1; y1, 1 - e^(-delta g)) Bin(d2; y2, 1 - e^(-delta g))]`.
///
/// With `w = g / tau = v^(1 / a)` and `a = h / tau` the gamma density becomes
/// `e^(-w) / Gamma(a + 1) dv`, which is bounded at the origin for any shape,
/// so plain adaptive Gauss-Kronrod applies on `v in [0, w_max^a]`.
pub fn one_step_distribution_oracle(
    y0: (u64, u64),
    delta: f64,
    noise: GammaNoiseParams,
    h: f64,
) -> Result<BTreeMap<(u64, u64), f64>> {
    let (y1, y2) = y0;
    if y1 > ORACLE_POPULATION_CAP || y2 > ORACLE_POPULATION_CAP {
        return Err(Error::PopulationCapExceeded {
            requested: y1.max(y2),
            cap: ORACLE_POPULATION_CAP,
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step h must be positive, got {h}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "death rate must be nonnegative, got {delta}"
        )));
    }
    if (y1 == 0 && y2 == 0) || delta == 0.0 {
        return Ok(BTreeMap::from([((0, 0), 1.0)]));
    }

    let tau = noise.tau();
    let a = noise.shape(h);
    let mut w_max = a.max(1.0);
    while gamma_ur(a, w_max) > 1e-18 {
        w_max *= 2.0;
    }
    let v_max = w_max.powf(a);
    let log_norm = -ln_gamma(a + 1.0);
    let triangle = PascalTriangle::global();
    let log_binom = |y: u64| -> Result<Vec<f64>> {
        (0..=y).map(|d| Ok(triangle.rounded(y, d)?.ln())).collect()
    };
    let (lc1, lc2) = (log_binom(y1)?, log_binom(y2)?);
    let cols = (y2 + 1) as usize;

    let integrand = |v: f64, out: &mut [f64]| {
        out.fill(0.0);
        let w = v.powf(1.0 / a);
        let x = delta * tau * w;
        if x == 0.0 {
            out[0] = log_norm.exp();
            return;
        }
        let log_p = (-(-x).exp_m1()).ln();
        let log_q = -x;
        let base = log_norm - w;
        for d1 in 0..=y1 {
            let l1 = lc1[d1 as usize] + d1 as f64 * log_p + (y1 - d1) as f64 * log_q;
            for d2 in 0..=y2 {
                let l2 = lc2[d2 as usize] + d2 as f64 * log_p + (y2 - d2) as f64 * log_q;
                out[d1 as usize * cols + d2 as usize] = (base + l1 + l2).exp();
            }
        }
    };
    let opts = QuadratureOptions {
        abs_tol: 1e-11,
        initial_intervals: 32,
        max_intervals: 50_000,
    };
    let r = integrate_vec(integrand, (y1 as usize + 1) * cols, 0.0, v_max, opts)?;

    let total = r
        .values
        .iter()
        .copied()
        .collect::<NeumaierSum<f64>>()
        .total();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::QuadratureFailure(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(r.values
        .iter()
        .enumerate()
        .map(|(i, &p)| (((i / cols) as u64, (i % cols) as u64), p.max(0.0)))
        .collect())
}

/// Parameters of one of the two built-in models.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    BivariateDeath(BivariateDeathParams),
    MultistrainSir(SirParams),
}

/// Static majorants behind the third-moment condition on jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda_at_state: f64,
    pub static_lambda_bound: f64,
    pub static_increment_bound: f64,
    /// `static_increment_bound^2 * static_lambda_bound`.
    pub p3_moment_bound: f64,
}

/// Evaluates `lambda(x)` against the model's state-independent bound.
///
/// SIR: `(m + r + lambda_1max + lambda_2max) P` with increments at most `P`.
/// Bivariate death: `delta (y1(0) + y2(0))` with increments at most
/// `y1(0) + y2(0)`.
pub fn check_p3_bound(
    spec: &SystemSpec,
    state: &StateVector,
    params: &ModelParams,
) -> Result<BoundReport> {
    let lambda = rate_function(spec, state)?;
    let (bound, increment) = match params {
        ModelParams::MultistrainSir(p) => {
            let pop = p.population as f64;
            ((p.m + p.r + 2.0 * p.max_force_of_infection()) * pop, pop)
        }
        ModelParams::BivariateDeath(p) => {
            let n0 = (p.y1_0 + p.y2_0) as f64;
            (p.delta * n0, n0)
        }
    };
    let report = BoundReport {
        lambda_at_state: lambda,
        static_lambda_bound: bound,
        static_increment_bound: increment,
        p3_moment_bound: increment * increment * bound,
    };
    if lambda.is_nan() || lambda > bound || !report.p3_moment_bound.is_finite() {
        return Err(Error::BoundViolated { lambda, bound });
    }
    Ok(report)
}

/// 64-bit FNV-1a of the occupancies, as 16 hex digits.
pub fn state_hash(state: &StateVector) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for c in state.counts() {
        for byte in c.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{hash:016x}")
}

/// One row of an estimation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub model: String,
    pub state_hash: String,
    pub pair: String,
    pub h: f64,
    pub replicates: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub closed_form: f64,
    pub z_score: f64,
}

impl EstimateRecord {
    pub fn new(
        model: &str,
        state: &StateVector,
        pair: String,
        estimate: &MomentEstimate,
        closed_form: f64,
    ) -> Self {
        Self {
            model: model.to_string(),
            state_hash: state_hash(state),
            pair,
            h: estimate.h,
            replicates: estimate.replicates,
            estimate: estimate.value,
            std_error: estimate.std_error,
            closed_form,
            z_score: estimate.z_score(closed_form),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "model",
    "state_hash",
    "pair",
    "h",
    "replicates",
    "estimate",
    "std_error",
    "closed_form",
    "z_score",
];

pub fn write_estimate_report<W: Write>(records: &[EstimateRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(REPORT_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
