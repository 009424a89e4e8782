//! Exact event-driven simulation of a [`SystemSpec`].
//!
//! Rates are frozen between events. Each step draws an exponential waiting time
//! with rate `lambda(x)`, picks a family in proportion to its total rate and,
//! for a co-jump family, a size pair `(k1, k2)` by inverse-CDF lookup in the
//! family's pairwise rate table.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Open01};

use crate::cojump::{CoJumpFamily, GammaNoiseParams, PairwiseRateTable};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::system::{
    apply_jump, CountVector, Family, JumpEvent, StateVector, SystemSpec, TransitionIdx,
};

pub const DEFAULT_EVENT_BUDGET: u64 = 10_000_000;

const CACHE_CAPACITY: usize = 64;

/// Rounds a rate to 12 significant decimal digits.
pub fn quantize_rate(rate: f64) -> f64 {
    if rate == 0.0 || !rate.is_finite() {
        return rate;
    }
    let exponent = rate.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - exponent);
    if scale.is_finite() && scale > 0.0 {
        (rate * scale).round() / scale
    } else {
        rate
    }
}

/// Cumulative pairwise rates in `k1`-major order, zero entries dropped.
#[derive(Debug, Clone)]
pub struct SamplingTable {
    sizes: Vec<(u64, u64)>,
    cumulative: Vec<f64>,
}

impl SamplingTable {
    pub fn from_rates(table: &PairwiseRateTable) -> Self {
        let mut sizes = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (k, r) in table.iter() {
            if r > 0.0 {
                acc += r;
                sizes.push(k);
                cumulative.push(acc);
            }
        }
        Self { sizes, cumulative }
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Probability of each size pair, in table order.
    pub fn probabilities(&self) -> Vec<((u64, u64), f64)> {
        let total = self.total();
        let mut prev = 0.0;
        self.sizes
            .iter()
            .zip(&self.cumulative)
            .map(|(&k, &c)| {
                let p = (c - prev) / total;
                prev = c;
                (k, p)
            })
            .collect()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<(u64, u64)> {
        let target = rng.random::<f64>() * self.total();
        let i = self.cumulative.partition_point(|&c| c <= target);
        self.sizes
            .get(i.min(self.sizes.len().saturating_sub(1)))
            .copied()
    }
}

/// An event as recorded on a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedEvent {
    pub family: usize,
    pub sizes: (u64, u64),
    pub event: JumpEvent,
}

/// A sample path of `(X(t), N(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub counts: Vec<CountVector>,
    pub events: Vec<RecordedEvent>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states
            .last()
            .expect("trajectory holds its initial state")
    }

    pub fn final_counts(&self) -> &CountVector {
        self.counts
            .last()
            .expect("trajectory holds its initial counts")
    }

    /// Writes `time,event_type,k1,k2,<compartments>` rows, starting with the
    /// initial state labelled `init`.
    pub fn write_csv<W: Write>(&self, spec: &SystemSpec, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "time".to_string(),
            "event_type".into(),
            "k1".into(),
            "k2".into(),
        ];
        header.extend(spec.compartments().iter().map(|c| c.to_string()));
        w.write_record(&header)?;
        for (i, state) in self.states.iter().enumerate() {
            let (name, (k1, k2)) = if i == 0 {
                ("init".to_string(), (0, 0))
            } else {
                let e = &self.events[i - 1];
                (spec.family(e.family).name().to_string(), e.sizes)
            };
            let mut row = vec![
                format!("{:.9}", self.times[i]),
                name,
                k1.to_string(),
                k2.to_string(),
            ];
            row.extend(state.counts().iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Checks the trajectory invariants: increasing times, `x_(k+1) = x_k + u_k`,
/// `n_(k+1) = n_k + l_k`, and mass conservation against the initial state as
/// an exact integer identity.
pub fn check_trajectory(spec: &SystemSpec, traj: &Trajectory) -> Result<()> {
    let fail = |msg: String| Err(Error::InvalidSystem(msg));
    let n = traj.states.len();
    if traj.times.len() != n || traj.counts.len() != n || traj.events.len() + 1 != n {
        return fail("trajectory columns have inconsistent lengths".into());
    }
    let init = &traj.states[0];
    for k in 0..traj.events.len() {
        if traj.times[k + 1] <= traj.times[k] {
            return fail(format!("time does not increase at step {k}"));
        }
        let e = &traj.events[k].event;
        if apply_jump(spec, &traj.states[k], e)? != traj.states[k + 1] {
            return fail(format!("state update mismatch at step {k}"));
        }
        let mut expected = traj.counts[k].clone();
        expected.record(e);
        if expected != traj.counts[k + 1] {
            return fail(format!("count update mismatch at step {k}"));
        }
        if traj.counts[k + 1]
            .counts()
            .iter()
            .zip(traj.counts[k].counts())
            .any(|(a, b)| a < b)
        {
            return fail(format!("counts decrease at step {k}"));
        }
    }
    for (k, (state, counts)) in traj.states.iter().zip(&traj.counts).enumerate() {
        if !conserves_mass(spec, init, counts, state) {
            return fail(format!("mass conservation fails at step {k}"));
        }
    }
    Ok(())
}

fn conserves_mass(
    spec: &SystemSpec,
    init: &StateVector,
    counts: &CountVector,
    state: &StateVector,
) -> bool {
    mass_balance(spec, init, counts)
        .iter()
        .zip(state.counts())
        .all(|(&x, &y)| x == y as i64)
}

/// `X_c(0) + sum_(i,c) N_ic - sum_(c,j) N_cj` for every compartment.
pub fn mass_balance(spec: &SystemSpec, init: &StateVector, counts: &CountVector) -> Vec<i64> {
    let mut x: Vec<i64> = init.counts().iter().map(|&v| v as i64).collect();
    for (i, &n) in counts.counts().iter().enumerate() {
        let (from, to) = spec.endpoint_indices(TransitionIdx(i));
        if let Some(c) = from {
            x[c] -= n as i64;
        }
        if let Some(c) = to {
            x[c] += n as i64;
        }
    }
    x
}

/// Event-driven sampler for one system; owns a small rate-table memo, so keep
/// one per thread.
pub struct Simulator<'a> {
    spec: &'a SystemSpec,
    cache: HashMap<(usize, u64, u64, u64), Arc<SamplingTable>>,
    event_budget: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a SystemSpec) -> Self {
        Self {
            spec,
            cache: HashMap::new(),
            event_budget: DEFAULT_EVENT_BUDGET,
        }
    }

    pub fn with_event_budget(mut self, budget: u64) -> Self {
        self.event_budget = budget;
        self
    }

    pub fn spec(&self) -> &SystemSpec {
        self.spec
    }

    /// Sampling table of co-jump family `index` at `state`, memoized on the
    /// populations and the quantized per-capita rate.
    pub fn sampling_table(
        &mut self,
        index: usize,
        state: &StateVector,
    ) -> Result<Arc<SamplingTable>> {
        let family: &CoJumpFamily = &self.spec.cojump_families()[index];
        let (y1, y2) = family.populations(state);
        let rate = quantize_rate(family.per_capita_rate(state));
        let key = (index, y1, y2, rate.to_bits());
        if let Some(t) = self.cache.get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = PairwiseRateTable::build(y1, y2, rate, family.noise())?;
        let sampling = Arc::new(SamplingTable::from_rates(&table));
        if self.cache.len() >= CACHE_CAPACITY {
            self.cache.clear();
        }
        self.cache.insert(key, Arc::clone(&sampling));
        Ok(sampling)
    }

    /// Waiting time and event of the next jump from `state`.
    pub fn next_event(
        &mut self,
        state: &StateVector,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, RecordedEvent)> {
        let rates = self.spec.family_rates(state)?;
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return Err(Error::AbsorbedState);
        }
        let u: f64 = rng.sample(Open01);
        let wait = -u.ln() / total;

        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &r) in rates.iter().enumerate() {
            if r <= 0.0 {
                continue;
            }
            chosen = Some(i);
            acc += r;
            if target < acc {
                break;
            }
        }
        let family = chosen.ok_or(Error::AbsorbedState)?;

        let recorded = match self.spec.family(family) {
            Family::Unit(f) => RecordedEvent {
                family,
                sizes: (1, 0),
                event: f.event().clone(),
            },
            Family::CoJump(f) => {
                let (first, second) = (f.first(), f.second());
                let index = family - self.spec.unit_families().len();
                let table = self.sampling_table(index, state)?;
                let (k1, k2) = table.sample(rng).ok_or(Error::AbsorbedState)?;
                RecordedEvent {
                    family,
                    sizes: (k1, k2),
                    event: JumpEvent::new(self.spec, vec![(first, k1), (second, k2)])?,
                }
            }
        };
        Ok((wait, recorded))
    }

    /// All events up to `t_end`, stopping early when the state absorbs.
    pub fn simulate(
        &mut self,
        init: &StateVector,
        t_end: f64,
        rng: RngStream,
    ) -> Result<Trajectory> {
        self.spec.check_state(init)?;
        let mut g = rng.generator();
        let mut traj = Trajectory {
            times: vec![0.0],
            states: vec![init.clone()],
            counts: vec![CountVector::zeros(self.spec.transitions().len())],
            events: Vec::new(),
        };
        let mut t = 0.0;
        loop {
            let state = traj.final_state().clone();
            let (wait, e) = match self.next_event(&state, &mut g) {
                Ok(x) => x,
                Err(Error::AbsorbedState) => break,
                Err(e) => return Err(e),
            };
            if t + wait > t_end {
                break;
            }
            if traj.events.len() as u64 >= self.event_budget {
                return Err(Error::EventBudgetExceeded(self.event_budget));
            }
            t += wait;
            let next = apply_jump(self.spec, &state, &e.event)?;
            let mut counts = traj.final_counts().clone();
            counts.record(&e.event);
            traj.times.push(t);
            traj.states.push(next);
            traj.counts.push(counts);
            traj.events.push(e);
        }
        Ok(traj)
    }

    /// Count increments over `[0, h]` from `init` without storing the path;
    /// mass conservation is still checked after every event.
    pub fn increments(
        &mut self,
        init: &StateVector,
        h: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<CountVector> {
        let mut state = init.clone();
        let mut counts = CountVector::zeros(self.spec.transitions().len());
        let mut t = 0.0;
        let mut events = 0u64;
        loop {
            let (wait, e) = match self.next_event(&state, rng) {
                Ok(x) => x,
                Err(Error::AbsorbedState) => break,
                Err(e) => return Err(e),
            };
            t += wait;
            if t > h {
                break;
            }
            events += 1;
            if events > self.event_budget {
                return Err(Error::EventBudgetExceeded(self.event_budget));
            }
            state = apply_jump(self.spec, &state, &e.event)?;
            counts.record(&e.event);
            if !conserves_mass(self.spec, init, &counts, &state) {
                return Err(Error::InvalidSystem(format!(
                    "mass conservation fails after event {events}"
                )));
            }
        }
        Ok(counts)
    }
}

/// One draw of the next event with a fresh simulator.
pub fn next_event(
    spec: &SystemSpec,
    state: &StateVector,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, RecordedEvent)> {
    Simulator::new(spec).next_event(state, rng)
}

pub fn simulate(
    spec: &SystemSpec,
    init: &StateVector,
    t_end: f64,
    rng: RngStream,
) -> Result<Trajectory> {
    Simulator::new(spec).simulate(init, t_end, rng)
}

/// Death counts over `[0, h]` of two linear death processes run on a common
/// gamma clock: `g ~ Gamma(h / tau, tau)`, then `d_i ~ Binomial(y_i, 1 - e^(-delta g))`.
pub fn simulate_subordinated_bivariate_death(
    y0: (u64, u64),
    delta: f64,
    noise: GammaNoiseParams,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(u64, u64)> {
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
    let clock = Gamma::new(noise.shape(h), noise.tau())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let g: f64 = clock.sample(rng);
    let p = -(-delta * g).exp_m1();
    let mut draw = |n: u64| -> Result<u64> {
        if n == 0 || p == 0.0 {
            return Ok(0);
        }
        let b = Binomial::new(n, p.min(1.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(b.sample(rng))
    };
    let d1 = draw(y0.0)?;
    let d2 = draw(y0.1)?;
    Ok((d1, d2))
}
