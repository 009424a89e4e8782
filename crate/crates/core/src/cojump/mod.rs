//! Closed-form co-jump rates for a pair of linear death processes driven by a
//! common gamma white noise.
//!
//! Two populations of sizes `y1`, `y2` with a shared per-capita rate `delta`,
//! time-changed by a gamma process with `E[G(t)] = t`, `V[G(t)] = tau t`, jump
//! together. The joint rate of `k1` removals from the first and `k2` from the
//! second population is
//!
//! ```text
//! q(k1, k2) = C(y1, k1) C(y2, k2) D(k1 + k2),
//! D(n)      = sum_{j=0}^{n} C(n, j) (-1)^(n - j + 1) ln(1 + delta tau (y1 + y2 - j)) / tau,
//! ```
//!
//! the rates sum to `ln(1 + delta tau (y1 + y2)) / tau`, and the weighted sum
//! `sum k1 k2 q(k1, k2)` equals `y1 y2 ln((1 + delta tau)^2 / (1 + 2 delta tau)) / tau`.

mod extended;

use std::fmt;
use std::sync::Arc;

use crate::binomial::{PascalTriangle, DEFAULT_POPULATION_CAP};
use crate::error::{Error, Result};
use crate::scalar::{NeumaierSum, Scalar};
use crate::system::{StateVector, TransitionIdx};

/// Highest order evaluated in native precision before escalating.
pub const NATIVE_MAX_ORDER: u64 = 25;

/// Relative error above which a native-only evaluation is rejected.
pub const PRECISION_LOSS_TOLERANCE: f64 = 1e-6;

/// Negative rates no larger than this fraction of the family total are set to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// How finite differences may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionPolicy {
    /// Native compensated summation, escalating to multi-precision arithmetic
    /// whenever the native error bound is not within a few ulps.
    #[default]
    Adaptive,
    /// Native compensated summation only; fails with [`Error::PrecisionLoss`]
    /// when the error bound exceeds [`PRECISION_LOSS_TOLERANCE`].
    NativeOnly,
}

/// Magnitude `tau > 0` of a gamma white noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaNoiseParams<T = f64> {
    tau: T,
}

impl<T: Scalar> GammaNoiseParams<T> {
    pub fn new(tau: T) -> Result<Self> {
        if tau.is_finite() && tau > T::zero() {
            Ok(Self { tau })
        } else {
            Err(Error::InvalidParameter(format!(
                "noise magnitude tau must be positive, got {tau}"
            )))
        }
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Gamma shape `h / tau` of the subordinator increment over a step `h`.
    pub fn shape(&self, h: T) -> T {
        h / self.tau
    }
}

fn check_delta<T: Scalar>(delta: T) -> Result<()> {
    if delta.is_finite() && delta >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "per-capita rate must be nonnegative, got {delta}"
        )))
    }
}

/// `(-1)` times the `n`-th forward difference of `j -> ln(1 + delta tau (m - j)) / tau`.
pub fn finite_difference_log<T: Scalar>(n: u64, m: u64, delta: T, tau: T) -> Result<T> {
    finite_difference_log_with(n, m, delta, tau, PrecisionPolicy::Adaptive)
}

pub fn finite_difference_log_with<T: Scalar>(
    n: u64,
    m: u64,
    delta: T,
    tau: T,
    policy: PrecisionPolicy,
) -> Result<T> {
    let row = finite_difference_log_orders(&[n], m, delta, tau, policy)?;
    Ok(row[0])
}

/// Finite differences of every order `1..=m`; index `n` of the result holds
/// order `n` and index 0 is zero.
pub fn finite_difference_log_row<T: Scalar>(
    m: u64,
    delta: T,
    tau: T,
    policy: PrecisionPolicy,
) -> Result<Vec<T>> {
    let orders: Vec<u64> = (1..=m).collect();
    let mut row = vec![T::zero()];
    row.extend(finite_difference_log_orders(
        &orders, m, delta, tau, policy,
    )?);
    Ok(row)
}

fn finite_difference_log_orders<T: Scalar>(
    orders: &[u64],
    m: u64,
    delta: T,
    tau: T,
    policy: PrecisionPolicy,
) -> Result<Vec<T>> {
    check_delta(delta)?;
    GammaNoiseParams::new(tau)?;
    for &n in orders {
        if n == 0 || n > m {
            return Err(Error::InvalidParameter(format!(
                "finite difference order {n} must lie in 1..={m}"
            )));
        }
    }
    let triangle = PascalTriangle::global();
    if m > triangle.max_n() {
        return Err(Error::PopulationCapExceeded {
            requested: m,
            cap: triangle.max_n(),
        });
    }
    if delta == T::zero() {
        return Ok(vec![T::zero(); orders.len()]);
    }

    let a = delta * tau;
    let native_max = match policy {
        PrecisionPolicy::Adaptive => orders
            .iter()
            .copied()
            .filter(|&n| n <= NATIVE_MAX_ORDER)
            .max(),
        PrecisionPolicy::NativeOnly => orders.iter().copied().max(),
    }
    .unwrap_or(0);
    let logs: Vec<T> = (0..=native_max)
        .map(|j| (a * T::from_u64_lossy(m - j)).ln_1p())
        .collect();

    let accept = T::epsilon() * T::lit(64.0);
    let mut out = vec![T::nan(); orders.len()];
    let mut escalate = Vec::new();
    for (idx, &n) in orders.iter().enumerate() {
        if n > native_max {
            escalate.push(idx);
            continue;
        }
        let mut sum = NeumaierSum::new();
        for j in 0..=n {
            let term = triangle.get::<T>(n, j)? * logs[j as usize];
            if (n - j) % 2 == 1 {
                sum.add(term);
            } else {
                sum.add(-term);
            }
        }
        let value = sum.total();
        let error = sum.error_bound(T::lit(2.0));
        if error <= accept * value.abs() {
            out[idx] = value / tau;
            continue;
        }
        match policy {
            PrecisionPolicy::Adaptive => escalate.push(idx),
            PrecisionPolicy::NativeOnly => {
                if error <= T::lit(PRECISION_LOSS_TOLERANCE) * value.abs() {
                    out[idx] = value / tau;
                } else {
                    return Err(Error::PrecisionLoss {
                        order: n,
                        error: (error / tau).as_f64(),
                        value: (value / tau).as_f64(),
                    });
                }
            }
        }
    }

    if !escalate.is_empty() {
        let wanted: Vec<u64> = escalate.iter().map(|&i| orders[i]).collect();
        let values =
            extended::finite_difference_log_orders(&wanted, m, delta.as_f64(), tau.as_f64())?;
        for (&idx, v) in escalate.iter().zip(values) {
            out[idx] = T::lit(v);
        }
    }
    Ok(out)
}

fn check_jump(y1: u64, y2: u64, k1: u64, k2: u64) -> Result<()> {
    if (k1 == 0 && k2 == 0) || k1 > y1 || k2 > y2 {
        Err(Error::InvalidJumpSize { y1, y2, k1, k2 })
    } else {
        Ok(())
    }
}

fn clamp<T: Scalar>(rate: T, total: T, order: u64) -> Result<T> {
    if rate >= T::zero() {
        Ok(rate)
    } else if -rate <= T::lit(CLAMP_TOLERANCE) * total {
        Ok(T::zero())
    } else {
        Err(Error::PrecisionLoss {
            order,
            error: rate.abs().as_f64(),
            value: rate.as_f64(),
        })
    }
}

/// Joint rate of `k1` removals from the first and `k2` from the second population.
pub fn pairwise_cojump_rate<T: Scalar>(
    y1: u64,
    y2: u64,
    k1: u64,
    k2: u64,
    delta: T,
    noise: GammaNoiseParams<T>,
) -> Result<T> {
    check_jump(y1, y2, k1, k2)?;
    let triangle = PascalTriangle::global();
    let diff = finite_difference_log(k1 + k2, y1 + y2, delta, noise.tau())?;
    let prefactor = triangle.rounded(y1, k1)? * triangle.rounded(y2, k2)?;
    let rate = T::lit(prefactor) * diff;
    if !rate.is_finite() {
        return Err(Error::RateOverflow {
            family: "pairwise co-jump".into(),
            value: rate.as_f64(),
        });
    }
    clamp(rate, total_cojump_rate(y1, y2, delta, noise), k1 + k2)
}

/// Total event rate `ln(1 + delta tau (y1 + y2)) / tau` of a co-jump family.
pub fn total_cojump_rate<T: Scalar>(y1: u64, y2: u64, delta: T, noise: GammaNoiseParams<T>) -> T {
    let tau = noise.tau();
    (delta * tau * T::from_u64_lossy(y1 + y2)).ln_1p() / tau
}

/// Infinitesimal covariance `y1 y2 ln((1 + delta tau)^2 / (1 + 2 delta tau)) / tau`.
pub fn cojump_covariance_closed_form<T: Scalar>(
    y1: u64,
    y2: u64,
    delta: T,
    noise: GammaNoiseParams<T>,
) -> T {
    let tau = noise.tau();
    let x = delta * tau;
    // (1 + x)^2 / (1 + 2x) = 1 + x^2 / (1 + 2x)
    let log_ratio = (x * x / (T::one() + x + x)).ln_1p();
    T::from_u64_lossy(y1) * T::from_u64_lossy(y2) * log_ratio / tau
}

/// Every pairwise rate of one co-jump family at a fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRateTable<T = f64> {
    y1: u64,
    y2: u64,
    delta: T,
    tau: T,
    // row-major over k1, (y2 + 1) columns; entry (0, 0) is unused and zero.
    rates: Vec<T>,
}

impl<T: Scalar> PairwiseRateTable<T> {
    pub fn build(y1: u64, y2: u64, delta: T, noise: GammaNoiseParams<T>) -> Result<Self> {
        Self::build_with(y1, y2, delta, noise, PrecisionPolicy::Adaptive)
    }

    pub fn build_with(
        y1: u64,
        y2: u64,
        delta: T,
        noise: GammaNoiseParams<T>,
        policy: PrecisionPolicy,
    ) -> Result<Self> {
        for y in [y1, y2] {
            if y > DEFAULT_POPULATION_CAP {
                return Err(Error::PopulationCapExceeded {
                    requested: y,
                    cap: DEFAULT_POPULATION_CAP,
                });
            }
        }
        check_delta(delta)?;
        let tau = noise.tau();
        let m = y1 + y2;
        let row = if m == 0 {
            vec![T::zero()]
        } else {
            finite_difference_log_row(m, delta, tau, policy)?
        };
        let total = total_cojump_rate(y1, y2, delta, noise);
        let triangle = PascalTriangle::global();
        let width = (y2 + 1) as usize;
        let mut rates = vec![T::zero(); (y1 as usize + 1) * width];
        for k1 in 0..=y1 {
            let c1 = triangle.rounded(y1, k1)?;
            for k2 in 0..=y2 {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let c = c1 * triangle.rounded(y2, k2)?;
                let rate = T::lit(c) * row[(k1 + k2) as usize];
                if !rate.is_finite() {
                    return Err(Error::RateOverflow {
                        family: "pairwise co-jump".into(),
                        value: rate.as_f64(),
                    });
                }
                rates[k1 as usize * width + k2 as usize] = clamp(rate, total, k1 + k2)?;
            }
        }
        Ok(Self {
            y1,
            y2,
            delta,
            tau,
            rates,
        })
    }

    pub fn y1(&self) -> u64 {
        self.y1
    }

    pub fn y2(&self) -> u64 {
        self.y2
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn rate(&self, k1: u64, k2: u64) -> T {
        if k1 > self.y1 || k2 > self.y2 {
            return T::zero();
        }
        self.rates[(k1 * (self.y2 + 1) + k2) as usize]
    }

    /// Admissible jump sizes with their rates, `k1` major.
    pub fn iter(&self) -> impl Iterator<Item = ((u64, u64), T)> + '_ {
        let width = self.y2 + 1;
        self.rates
            .iter()
            .enumerate()
            .skip(1)
            .map(move |(i, &r)| ((i as u64 / width, i as u64 % width), r))
    }

    pub fn len(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Compensated sum of all pairwise rates.
    pub fn total(&self) -> T {
        self.iter()
            .map(|(_, r)| r)
            .collect::<NeumaierSum<T>>()
            .total()
    }

    /// Marginal rate of exactly `k` removals from the first population.
    pub fn marginal_first(&self, k: u64) -> T {
        (0..=self.y2)
            .map(|k2| self.rate(k, k2))
            .collect::<NeumaierSum<T>>()
            .total()
    }

    /// Marginal rate of exactly `k` removals from the second population.
    pub fn marginal_second(&self, k: u64) -> T {
        (0..=self.y1)
            .map(|k1| self.rate(k1, k))
            .collect::<NeumaierSum<T>>()
            .total()
    }

    /// `sum k1 q(k1, k2)` and `sum k2 q(k1, k2)`: the drift of each counter.
    pub fn mean_rates(&self) -> (T, T) {
        let mut first = NeumaierSum::new();
        let mut second = NeumaierSum::new();
        for ((k1, k2), r) in self.iter() {
            first.add(T::from_u64_lossy(k1) * r);
            second.add(T::from_u64_lossy(k2) * r);
        }
        (first.total(), second.total())
    }
}

/// Infinitesimal covariance as the weighted sum `sum k1 k2 q(k1, k2)`.
pub fn theorem1_covariance_by_summation<T: Scalar>(table: &PairwiseRateTable<T>) -> T {
    table
        .iter()
        .map(|((k1, k2), r)| T::from_u64_lossy(k1 * k2) * r)
        .collect::<NeumaierSum<T>>()
        .total()
}

/// State-dependent rate; evaluated afresh at every event.
pub type RateFn = Arc<dyn Fn(&StateVector) -> f64 + Send + Sync>;

/// Two transitions draining distinct compartments under one shared noise with a
/// common per-capita rate.
#[derive(Clone)]
pub struct CoJumpFamily {
    pub(crate) name: String,
    pub(crate) first: TransitionIdx,
    pub(crate) second: TransitionIdx,
    pub(crate) source_of_first: usize,
    pub(crate) source_of_second: usize,
    pub(crate) per_capita_rate: RateFn,
    pub(crate) noise: GammaNoiseParams,
}

impl CoJumpFamily {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn first(&self) -> TransitionIdx {
        self.first
    }

    pub fn second(&self) -> TransitionIdx {
        self.second
    }

    pub fn noise(&self) -> GammaNoiseParams {
        self.noise
    }

    /// Occupancies of the two source compartments.
    pub fn populations(&self, state: &StateVector) -> (u64, u64) {
        (
            state.get(self.source_of_first),
            state.get(self.source_of_second),
        )
    }

    pub fn per_capita_rate(&self, state: &StateVector) -> f64 {
        (self.per_capita_rate)(state)
    }

    pub fn total_rate(&self, state: &StateVector) -> f64 {
        let (y1, y2) = self.populations(state);
        total_cojump_rate(y1, y2, self.per_capita_rate(state), self.noise)
    }

    pub fn rate_table(&self, state: &StateVector) -> Result<PairwiseRateTable> {
        let (y1, y2) = self.populations(state);
        PairwiseRateTable::build(y1, y2, self.per_capita_rate(state), self.noise)
    }
}

impl fmt::Debug for CoJumpFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoJumpFamily")
            .field("name", &self.name)
            .field("first", &self.first)
            .field("second", &self.second)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests;
