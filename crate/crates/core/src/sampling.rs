//! Replicated samplers behind the distributional checks. Replicate `r` always
//! draws from substream `r`, and batches merge in order, so every result is a
//! function of the seed alone.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cojump::GammaNoiseParams;
use crate::error::Result;
use crate::rng::RngStream;
use crate::simulator::{check_trajectory, simulate_subordinated_bivariate_death, Simulator};
use crate::system::{StateVector, SystemSpec, TransitionIdx};

const BATCHES: u64 = 64;

/// Joint frequency table of integer pairs.
pub type PairCounts = BTreeMap<(u64, u64), u64>;

fn merge(parts: Vec<PairCounts>) -> PairCounts {
    let mut all = PairCounts::new();
    for part in parts {
        for (k, n) in part {
            *all.entry(k).or_default() += n;
        }
    }
    all
}

fn ranges(replicates: u64) -> impl ParallelIterator<Item = std::ops::Range<u64>> {
    (0..BATCHES)
        .into_par_iter()
        .map(move |b| b * replicates / BATCHES..(b + 1) * replicates / BATCHES)
}

/// Frequencies of `(dN_a, dN_b)` over `[0, h]` from `init` under the exact sampler.
pub fn one_step_increments(
    spec: &SystemSpec,
    init: &StateVector,
    pair: (TransitionIdx, TransitionIdx),
    h: f64,
    replicates: u64,
    rng: RngStream,
) -> Result<PairCounts> {
    let parts: Result<Vec<PairCounts>> = ranges(replicates)
        .map(|range| {
            let mut sim = Simulator::new(spec);
            let mut counts = PairCounts::new();
            for r in range {
                let n = sim.increments(init, h, &mut rng.substream(r).generator())?;
                *counts.entry((n.get(pair.0), n.get(pair.1))).or_default() += 1;
            }
            Ok(counts)
        })
        .collect();
    Ok(merge(parts?))
}

/// Frequencies of `(d1, d2)` under the gamma time change.
pub fn subordinated_increments(
    y0: (u64, u64),
    delta: f64,
    noise: GammaNoiseParams,
    h: f64,
    replicates: u64,
    rng: RngStream,
) -> Result<PairCounts> {
    let parts: Result<Vec<PairCounts>> = ranges(replicates)
        .map(|range| {
            let mut counts = PairCounts::new();
            for r in range {
                let d = simulate_subordinated_bivariate_death(
                    y0,
                    delta,
                    noise,
                    h,
                    &mut rng.substream(r).generator(),
                )?;
                *counts.entry(d).or_default() += 1;
            }
            Ok(counts)
        })
        .collect();
    Ok(merge(parts?))
}

/// Frequencies of the sizes `(k1, k2)` of the first event from `init`,
/// restricted to events of co-jump family `family` (an index into
/// [`SystemSpec::cojump_families`]). Also returns how many first events fell
/// in other families.
pub fn first_event_sizes(
    spec: &SystemSpec,
    init: &StateVector,
    family: usize,
    replicates: u64,
    rng: RngStream,
) -> Result<(PairCounts, u64)> {
    let target = spec.unit_families().len() + family;
    let parts: Result<Vec<(PairCounts, u64)>> = ranges(replicates)
        .map(|range| {
            let mut sim = Simulator::new(spec);
            let mut counts = PairCounts::new();
            let mut other = 0;
            for r in range {
                let (_, e) = sim.next_event(init, &mut rng.substream(r).generator())?;
                if e.family == target {
                    *counts.entry(e.sizes).or_default() += 1;
                } else {
                    other += 1;
                }
            }
            Ok((counts, other))
        })
        .collect();
    let parts = parts?;
    let other = parts.iter().map(|p| p.1).sum();
    Ok((merge(parts.into_iter().map(|p| p.0).collect()), other))
}

/// At least `count` states visited by trajectories from `init` over `[0, t_end]`,
/// running further replicates until enough states are collected.
pub fn visited_states(
    spec: &SystemSpec,
    init: &StateVector,
    count: usize,
    t_end: f64,
    rng: RngStream,
) -> Result<Vec<StateVector>> {
    let mut sim = Simulator::new(spec);
    let mut states = Vec::with_capacity(count);
    let mut r = 0;
    while states.len() < count {
        let traj = sim.simulate(init, t_end, rng.substream(r))?;
        check_trajectory(spec, &traj)?;
        states.extend(traj.states);
        r += 1;
    }
    states.truncate(count);
    Ok(states)
}
