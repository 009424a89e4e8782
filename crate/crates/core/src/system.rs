//! Markov counting systems: compartments, transitions, jump algebra and rates.
//!
//! Occupancies live in a dense vector ordered as the compartments were declared.
//! Boundary nodes (births `B`, deaths `D`) are not materialized; transitions into
//! or out of them only move the counting process, so mass conservation
//! `X_c(t) = X_c(0) + inflow_c(t) - outflow_c(t)` stays an exact integer identity
//! on the materialized compartments.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::cojump::{CoJumpFamily, GammaNoiseParams, RateFn};
use crate::error::{Error, Result};
use crate::scalar::NeumaierSum;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompartmentId(String);

impl CompartmentId {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An allowed transition `from -> to`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionType {
    pub from: CompartmentId,
    pub to: CompartmentId,
}

impl TransitionType {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: CompartmentId::new(from),
            to: CompartmentId::new(to),
        }
    }

    /// Parses the `FROM->TO` label form.
    pub fn parse(label: &str) -> Result<Self> {
        match label.split_once("->") {
            Some((from, to)) if !from.trim().is_empty() && !to.trim().is_empty() => {
                Ok(Self::new(from.trim(), to.trim()))
            }
            _ => Err(Error::UnknownTransition(label.to_string())),
        }
    }
}

impl fmt::Display for TransitionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Position of a transition in [`SystemSpec::transitions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionIdx(pub usize);

/// Compartment occupancies `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateVector {
    counts: Vec<u64>,
}

impl StateVector {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    #[inline]
    pub fn get(&self, compartment: usize) -> u64 {
        self.counts[compartment]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Cumulative transition counts `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountVector {
    counts: Vec<u64>,
}

impl CountVector {
    pub fn zeros(transitions: usize) -> Self {
        Self {
            counts: vec![0; transitions],
        }
    }

    pub fn get(&self, t: TransitionIdx) -> u64 {
        self.counts[t.0]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn record(&mut self, event: &JumpEvent) {
        for &(t, k) in event.increments() {
            self.counts[t.0] += k;
        }
    }
}

/// Count increments `l` over transitions together with the induced state change `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JumpEvent {
    increments: Vec<(TransitionIdx, u64)>,
    induced: Vec<i64>,
}

impl JumpEvent {
    /// Builds the event and derives `u_c = sum_(i,c) l_ic - sum_(c,j) l_cj`.
    pub fn new(spec: &SystemSpec, increments: Vec<(TransitionIdx, u64)>) -> Result<Self> {
        let increments: Vec<_> = increments.into_iter().filter(|&(_, k)| k > 0).collect();
        if increments.is_empty() {
            return Err(Error::InvalidSystem("jump event with no increments".into()));
        }
        let mut induced = vec![0i64; spec.compartments.len()];
        for &(t, k) in &increments {
            let (from, to) = spec
                .endpoints
                .get(t.0)
                .ok_or_else(|| Error::UnknownTransition(format!("#{}", t.0)))?;
            if let Endpoint::Compartment(c) = from {
                induced[*c] -= k as i64;
            }
            if let Endpoint::Compartment(c) = to {
                induced[*c] += k as i64;
            }
        }
        Ok(Self {
            increments,
            induced,
        })
    }

    pub fn increments(&self) -> &[(TransitionIdx, u64)] {
        &self.increments
    }

    pub fn increment(&self, t: TransitionIdx) -> u64 {
        self.increments
            .iter()
            .find(|(i, _)| *i == t)
            .map_or(0, |&(_, k)| k)
    }

    pub fn induced(&self) -> &[i64] {
        &self.induced
    }
}

/// New state `x + u`, failing if any compartment would go negative.
pub fn apply_jump(
    spec: &SystemSpec,
    state: &StateVector,
    event: &JumpEvent,
) -> Result<StateVector> {
    let mut counts = Vec::with_capacity(state.len());
    for (c, (&x, &u)) in state.counts.iter().zip(&event.induced).enumerate() {
        let value = x as i64 + u;
        if value < 0 {
            return Err(Error::NegativeOccupancy {
                compartment: spec.compartments[c].to_string(),
                value,
            });
        }
        counts.push(value as u64);
    }
    Ok(StateVector { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endpoint {
    Compartment(usize),
    Boundary,
}

/// A family firing one fixed event (size one on each listed transition) at a
/// state-dependent rate.
#[derive(Clone)]
pub struct UnitFamily {
    name: String,
    event: JumpEvent,
    rate: RateFn,
}

impl UnitFamily {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn event(&self) -> &JumpEvent {
        &self.event
    }

    pub fn rate(&self, state: &StateVector) -> f64 {
        (self.rate)(state)
    }
}

impl fmt::Debug for UnitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitFamily")
            .field("name", &self.name)
            .field("event", &self.event)
            .finish_non_exhaustive()
    }
}

/// Either kind of rate family, indexed unit families first.
#[derive(Debug, Clone, Copy)]
pub enum Family<'a> {
    Unit(&'a UnitFamily),
    CoJump(&'a CoJumpFamily),
}

impl Family<'_> {
    pub fn name(&self) -> &str {
        match self {
            Family::Unit(f) => f.name(),
            Family::CoJump(f) => f.name(),
        }
    }
}

/// A Markov counting system: compartments, allowed transitions and rate families.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    compartments: Vec<CompartmentId>,
    boundary: Vec<CompartmentId>,
    transitions: Vec<TransitionType>,
    endpoints: Vec<(Endpoint, Endpoint)>,
    unit_families: Vec<UnitFamily>,
    cojump_families: Vec<CoJumpFamily>,
}

impl SystemSpec {
    pub fn builder() -> SystemBuilder {
        SystemBuilder::default()
    }

    pub fn compartments(&self) -> &[CompartmentId] {
        &self.compartments
    }

    pub fn boundary(&self) -> &[CompartmentId] {
        &self.boundary
    }

    pub fn transitions(&self) -> &[TransitionType] {
        &self.transitions
    }

    pub fn unit_families(&self) -> &[UnitFamily] {
        &self.unit_families
    }

    pub fn cojump_families(&self) -> &[CoJumpFamily] {
        &self.cojump_families
    }

    pub fn family_count(&self) -> usize {
        self.unit_families.len() + self.cojump_families.len()
    }

    pub fn family(&self, index: usize) -> Family<'_> {
        if index < self.unit_families.len() {
            Family::Unit(&self.unit_families[index])
        } else {
            Family::CoJump(&self.cojump_families[index - self.unit_families.len()])
        }
    }

    /// Source and destination compartment indices of transition `t`; `None`
    /// for a boundary endpoint.
    pub fn endpoint_indices(&self, t: TransitionIdx) -> (Option<usize>, Option<usize>) {
        let index = |e: &Endpoint| match e {
            Endpoint::Compartment(c) => Some(*c),
            Endpoint::Boundary => None,
        };
        let (from, to) = &self.endpoints[t.0];
        (index(from), index(to))
    }

    pub fn compartment_index(&self, label: &str) -> Result<usize> {
        self.compartments
            .iter()
            .position(|c| c.as_str() == label)
            .ok_or_else(|| Error::UnknownCompartment(label.to_string()))
    }

    pub fn transition_index(&self, t: &TransitionType) -> Result<TransitionIdx> {
        self.transitions
            .iter()
            .position(|x| x == t)
            .map(TransitionIdx)
            .ok_or_else(|| Error::UnknownTransition(t.to_string()))
    }

    pub fn transition_by_label(&self, label: &str) -> Result<TransitionIdx> {
        self.transition_index(&TransitionType::parse(label)?)
    }

    /// State from `(label, count)` pairs; unlisted compartments are empty.
    pub fn state<'a, I>(&self, entries: I) -> Result<StateVector>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut counts = vec![0u64; self.compartments.len()];
        for (label, n) in entries {
            counts[self.compartment_index(label)?] = n;
        }
        Ok(StateVector::new(counts))
    }

    pub fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.len() == self.compartments.len() {
            Ok(())
        } else {
            Err(Error::InvalidSystem(format!(
                "state has {} entries, system has {} compartments",
                state.len(),
                self.compartments.len()
            )))
        }
    }

    /// Total rate of each family at `state`, unit families first.
    pub fn family_rates(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let mut rates = Vec::with_capacity(self.family_count());
        for f in &self.unit_families {
            rates.push(checked(f.name(), f.rate(state))?);
        }
        for f in &self.cojump_families {
            rates.push(checked(f.name(), f.total_rate(state))?);
        }
        Ok(rates)
    }
}

fn checked(family: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::RateOverflow {
            family: family.to_string(),
            value,
        })
    }
}

/// Total event rate `lambda(x) = sum_l q(x, l)`.
pub fn rate_function(spec: &SystemSpec, state: &StateVector) -> Result<f64> {
    let rates = spec.family_rates(state)?;
    let total = rates.into_iter().collect::<NeumaierSum<f64>>().total();
    checked("rate function", total)
}

/// Marginal rate `q_ij(x, k)` of `k` simultaneous transitions of type `t`.
pub fn marginal_rate(
    spec: &SystemSpec,
    state: &StateVector,
    t: &TransitionType,
    k: u64,
) -> Result<f64> {
    let idx = spec.transition_index(t)?;
    spec.check_state(state)?;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "marginal rate size must be at least 1".into(),
        ));
    }
    let mut sum = NeumaierSum::<f64>::new();
    for f in &spec.unit_families {
        if f.event.increment(idx) == k {
            sum.add(f.rate(state));
        }
    }
    for f in &spec.cojump_families {
        if f.first != idx && f.second != idx {
            continue;
        }
        let table = f.rate_table(state)?;
        if f.first == idx {
            sum.add(table.marginal_first(k));
        }
        if f.second == idx {
            sum.add(table.marginal_second(k));
        }
    }
    Ok(sum.total())
}

/// Incremental construction of a [`SystemSpec`] by labels.
#[derive(Default)]
pub struct SystemBuilder {
    compartments: Vec<CompartmentId>,
    boundary: Vec<CompartmentId>,
    transitions: Vec<TransitionType>,
    units: Vec<(String, Vec<TransitionType>, RateFn)>,
    cojumps: Vec<(
        String,
        TransitionType,
        TransitionType,
        RateFn,
        GammaNoiseParams,
    )>,
}

impl SystemBuilder {
    pub fn compartment(mut self, label: &str) -> Self {
        self.compartments.push(CompartmentId::new(label));
        self
    }

    /// A node outside the system (birth source or death sink).
    pub fn boundary(mut self, label: &str) -> Self {
        self.boundary.push(CompartmentId::new(label));
        self
    }

    pub fn transition(mut self, from: &str, to: &str) -> Self {
        self.transitions.push(TransitionType::new(from, to));
        self
    }

    pub fn unit_family<F>(mut self, name: &str, transitions: &[(&str, &str)], rate: F) -> Self
    where
        F: Fn(&StateVector) -> f64 + Send + Sync + 'static,
    {
        let ts = transitions
            .iter()
            .map(|(a, b)| TransitionType::new(*a, *b))
            .collect();
        self.units.push((name.to_string(), ts, Arc::new(rate)));
        self
    }

    pub fn cojump_family<F>(
        mut self,
        name: &str,
        first: (&str, &str),
        second: (&str, &str),
        noise: GammaNoiseParams,
        per_capita_rate: F,
    ) -> Self
    where
        F: Fn(&StateVector) -> f64 + Send + Sync + 'static,
    {
        self.cojumps.push((
            name.to_string(),
            TransitionType::new(first.0, first.1),
            TransitionType::new(second.0, second.1),
            Arc::new(per_capita_rate),
            noise,
        ));
        self
    }

    pub fn build(self) -> Result<SystemSpec> {
        if self.compartments.is_empty() {
            return Err(Error::InvalidSystem("no compartments".into()));
        }
        let mut index: HashMap<&str, Endpoint> = HashMap::new();
        for (i, c) in self.compartments.iter().enumerate() {
            if index.insert(c.as_str(), Endpoint::Compartment(i)).is_some() {
                return Err(Error::InvalidSystem(format!("duplicate compartment {c}")));
            }
        }
        for b in &self.boundary {
            if index.insert(b.as_str(), Endpoint::Boundary).is_some() {
                return Err(Error::InvalidSystem(format!("duplicate compartment {b}")));
            }
        }
        let mut endpoints = Vec::with_capacity(self.transitions.len());
        for (i, t) in self.transitions.iter().enumerate() {
            if t.from == t.to {
                return Err(Error::InvalidSystem(format!("self transition {t}")));
            }
            if self.transitions[..i].contains(t) {
                return Err(Error::InvalidSystem(format!("duplicate transition {t}")));
            }
            let from = *index
                .get(t.from.as_str())
                .ok_or_else(|| Error::UnknownCompartment(t.from.to_string()))?;
            let to = *index
                .get(t.to.as_str())
                .ok_or_else(|| Error::UnknownCompartment(t.to.to_string()))?;
            if from == Endpoint::Boundary && to == Endpoint::Boundary {
                return Err(Error::InvalidSystem(format!(
                    "transition {t} touches no compartment"
                )));
            }
            endpoints.push((from, to));
        }

        let mut spec = SystemSpec {
            compartments: self.compartments,
            boundary: self.boundary,
            transitions: self.transitions,
            endpoints,
            unit_families: Vec::new(),
            cojump_families: Vec::new(),
        };

        for (name, ts, rate) in self.units {
            let increments = ts
                .iter()
                .map(|t| spec.transition_index(t).map(|i| (i, 1)))
                .collect::<Result<Vec<_>>>()?;
            let event = JumpEvent::new(&spec, increments)?;
            spec.unit_families.push(UnitFamily { name, event, rate });
        }
        for (name, first, second, per_capita_rate, noise) in self.cojumps {
            let a = spec.transition_index(&first)?;
            let b = spec.transition_index(&second)?;
            let source = |t: TransitionIdx| match spec.endpoints[t.0].0 {
                Endpoint::Compartment(c) => Ok(c),
                Endpoint::Boundary => Err(Error::InvalidSystem(format!(
                    "co-jump transition {} must drain a compartment",
                    spec.transitions[t.0]
                ))),
            };
            let (sa, sb) = (source(a)?, source(b)?);
            if a == b || sa == sb {
                return Err(Error::InvalidSystem(format!(
                    "co-jump family {name} needs two transitions draining distinct compartments"
                )));
            }
            spec.cojump_families.push(CoJumpFamily {
                name,
                first: a,
                second: b,
                source_of_first: sa,
                source_of_second: sb,
                per_capita_rate,
                noise,
            });
        }
        Ok(spec)
    }
}
