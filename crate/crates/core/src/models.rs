//! The bivariate death system and the two-strain SIR system with co-jumps.

use serde::{Deserialize, Serialize};

use crate::binomial::DEFAULT_POPULATION_CAP;
use crate::cojump::GammaNoiseParams;
use crate::error::{Error, Result};
use crate::system::{StateVector, SystemSpec};

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and nonnegative, got {x}"
        )))
    }
}

/// Two linear death processes with a common per-capita rate under one gamma noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateDeathParams {
    pub y1_0: u64,
    pub y2_0: u64,
    pub delta: f64,
    pub tau: f64,
}

impl BivariateDeathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        GammaNoiseParams::new(self.tau)?;
        for y in [self.y1_0, self.y2_0] {
            if y > DEFAULT_POPULATION_CAP {
                return Err(Error::PopulationCapExceeded {
                    requested: y,
                    cap: DEFAULT_POPULATION_CAP,
                });
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> StateVector {
        StateVector::new(vec![self.y1_0, self.y2_0])
    }
}

/// Compartments `{Y1, Y2}` and one co-jump family over `(Y1->D, Y2->D)`.
pub fn bivariate_death_system(params: &BivariateDeathParams) -> Result<SystemSpec> {
    params.validate()?;
    let delta = params.delta;
    SystemSpec::builder()
        .compartment("Y1")
        .compartment("Y2")
        .boundary("D")
        .transition("Y1", "D")
        .transition("Y2", "D")
        .cojump_family(
            "deaths",
            ("Y1", "D"),
            ("Y2", "D"),
            GammaNoiseParams::new(params.tau)?,
            move |_| delta,
        )
        .build()
}

/// Compartment order of the SIR system.
pub const SIR_COMPARTMENTS: [&str; 8] = ["S", "I1", "I2", "S1", "S2", "I1*", "I2*", "R"];

const S: usize = 0;
const I: [usize; 2] = [1, 2];
const I_STAR: [usize; 2] = [5, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strain {
    One,
    Two,
}

impl Strain {
    fn index(self) -> usize {
        match self {
            Strain::One => 0,
            Strain::Two => 1,
        }
    }
}

/// Two-strain SIR with a fixed population, constant transmission and no
/// cross-immunity under noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    #[serde(rename = "P")]
    pub population: u64,
    pub beta: f64,
    pub omega: f64,
    pub alpha: f64,
    pub m: f64,
    pub r: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        Self {
            population: 200,
            beta: 1.5,
            omega: 0.01,
            alpha: 1.0,
            m: 0.02,
            r: 0.5,
            gamma: 0.0,
            tau: 0.2,
        }
    }
}

impl SirParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma != 0.0 {
            return Err(Error::UnsupportedGamma(self.gamma));
        }
        if self.population == 0 {
            return Err(Error::InvalidParameter(
                "population P must be positive".into(),
            ));
        }
        if self.population > DEFAULT_POPULATION_CAP {
            return Err(Error::PopulationCapExceeded {
                requested: self.population,
                cap: DEFAULT_POPULATION_CAP,
            });
        }
        nonnegative("beta", self.beta)?;
        nonnegative("omega", self.omega)?;
        nonnegative("m", self.m)?;
        nonnegative("r", self.r)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        GammaNoiseParams::new(self.tau)?;
        Ok(())
    }

    /// Largest force of infection over all states, reached with every member
    /// infected by the strain: `beta P^alpha / P + omega`.
    pub fn max_force_of_infection(&self) -> f64 {
        let p = self.population as f64;
        self.beta * p.powf(self.alpha) / p + self.omega
    }

    /// `S = 190, I1 = I2 = 5` scaled to `P` (exact for the default `P = 200`).
    pub fn default_initial_state(&self) -> StateVector {
        let infected = (self.population / 40).max(1).min(self.population / 2);
        let mut counts = vec![0; SIR_COMPARTMENTS.len()];
        counts[I[0]] = infected;
        counts[I[1]] = infected;
        counts[S] = self.population - 2 * infected;
        StateVector::new(counts)
    }
}

/// `lambda_i = beta (I_i + I_i*)^alpha / P + omega`, with `0^0 = 1`.
pub fn strain_force_of_infection(state: &StateVector, params: &SirParams, strain: Strain) -> f64 {
    force(
        state,
        params.beta,
        params.alpha,
        params.omega,
        params.population,
        strain.index(),
    )
}

fn force(state: &StateVector, beta: f64, alpha: f64, omega: f64, population: u64, i: usize) -> f64 {
    let infectives = (state.get(I[i]) + state.get(I_STAR[i])) as f64;
    beta * infectives.powf(alpha) / population as f64 + omega
}

/// The eight-compartment SIR system with one co-jump family per strain pairing
/// `S -> I_i` with `S_i -> I_i*`.
///
/// Deaths are replaced by births into `S`: a death from compartment `c` is the
/// atomic event `{c -> D, B -> S}`, so a death from `S` leaves the state
/// unchanged but is still counted.
pub fn multistrain_sir_system(params: &SirParams) -> Result<SystemSpec> {
    params.validate()?;
    let noise = GammaNoiseParams::new(params.tau)?;
    let mut b = SystemSpec::builder();
    for c in SIR_COMPARTMENTS {
        b = b.compartment(c);
    }
    b = b
        .boundary("B")
        .boundary("D")
        .transition("S", "I1")
        .transition("S", "I2")
        .transition("I1", "S1")
        .transition("I2", "S2")
        .transition("S1", "I1*")
        .transition("S2", "I2*")
        .transition("I1*", "R")
        .transition("I2*", "R")
        .transition("B", "S");
    for c in SIR_COMPARTMENTS {
        b = b.transition(c, "D");
    }

    let r = params.r;
    for (i, (from, to)) in [("I1", "S1"), ("I2", "S2"), ("I1*", "R"), ("I2*", "R")]
        .into_iter()
        .enumerate()
    {
        let c = [I[0], I[1], I_STAR[0], I_STAR[1]][i];
        b = b.unit_family(&format!("recovery {from}"), &[(from, to)], move |x| {
            r * x.get(c) as f64
        });
    }
    let m = params.m;
    for (c, label) in SIR_COMPARTMENTS.into_iter().enumerate() {
        b = b.unit_family(
            &format!("death {label}"),
            &[(label, "D"), ("B", "S")],
            move |x| m * x.get(c) as f64,
        );
    }
    for (i, (first, second)) in [(("S", "I1"), ("S1", "I1*")), (("S", "I2"), ("S2", "I2*"))]
        .into_iter()
        .enumerate()
    {
        let (beta, alpha, omega, pop) =
            (params.beta, params.alpha, params.omega, params.population);
        b = b.cojump_family(
            &format!("infection {}", i + 1),
            first,
            second,
            noise,
            move |x| force(x, beta, alpha, omega, pop, i),
        );
    }
    b.build()
}
