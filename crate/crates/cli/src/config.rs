//! Run configuration: one TOML document with `[model]`, `[params]`, `[init]`
//! and `[noise]` sections. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cojump_core::models::{
    bivariate_death_system, multistrain_sir_system, BivariateDeathParams, SirParams,
};
use cojump_core::moments::ModelParams;
use cojump_core::{Error, Result, StateVector, SystemSpec};
use serde::Deserialize;

pub const DEFAULT_T_END: f64 = 10.0;
pub const DEFAULT_REPLICATES: u64 = 1;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    BivariateDeath,
    MultistrainSir,
}

impl ModelName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelName::BivariateDeath => "bivariate_death",
            ModelName::MultistrainSir => "multistrain_sir",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    name: ModelName,
    seed: u64,
    t_end: Option<f64>,
    replicates: Option<u64>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    tau: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    params: toml::Table,
    #[serde(default)]
    init: Option<BTreeMap<String, u64>>,
    noise: NoiseSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BivariateBlock {
    y1_0: u64,
    y2_0: u64,
    delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SirBlock {
    #[serde(rename = "P")]
    population: u64,
    beta: f64,
    omega: f64,
    alpha: f64,
    m: f64,
    r: f64,
    #[serde(default)]
    gamma: f64,
}

/// A validated run: model parameters, initial state and run controls.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelName,
    pub params: ModelParams,
    pub init: StateVector,
    pub seed: u64,
    pub t_end: f64,
    pub replicates: u64,
    pub output_dir: PathBuf,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(config_error)?;
        let tau = raw.noise.tau;
        let params = match raw.model.name {
            ModelName::BivariateDeath => {
                let b: BivariateBlock = raw.params.try_into().map_err(config_error)?;
                ModelParams::BivariateDeath(BivariateDeathParams {
                    y1_0: b.y1_0,
                    y2_0: b.y2_0,
                    delta: b.delta,
                    tau,
                })
            }
            ModelName::MultistrainSir => {
                let s: SirBlock = raw.params.try_into().map_err(config_error)?;
                ModelParams::MultistrainSir(SirParams {
                    population: s.population,
                    beta: s.beta,
                    omega: s.omega,
                    alpha: s.alpha,
                    m: s.m,
                    r: s.r,
                    gamma: s.gamma,
                    tau,
                })
            }
        };

        let spec = build_spec(&params)?;
        let init = match (&params, raw.init) {
            (ModelParams::BivariateDeath(p), None) => p.initial_state(),
            (ModelParams::MultistrainSir(p), None) => p.default_initial_state(),
            (_, Some(entries)) => spec.state(entries.iter().map(|(k, &v)| (k.as_str(), v)))?,
        };
        match &params {
            ModelParams::BivariateDeath(p) if init != p.initial_state() => {
                return Err(Error::Config(format!(
                    "[init] must match y1_0 = {} and y2_0 = {}",
                    p.y1_0, p.y2_0
                )));
            }
            ModelParams::MultistrainSir(p) if init.total() != p.population => {
                return Err(Error::Config(format!(
                    "[init] sums to {} but P = {}",
                    init.total(),
                    p.population
                )));
            }
            _ => {}
        }

        let t_end = raw.model.t_end.unwrap_or(DEFAULT_T_END);
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!(
                "t_end must be finite and nonnegative, got {t_end}"
            )));
        }
        let replicates = raw.model.replicates.unwrap_or(DEFAULT_REPLICATES);
        if replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        Ok(Self {
            model: raw.model.name,
            params,
            init,
            seed: raw.model.seed,
            t_end,
            replicates,
            output_dir: raw
                .model
                .output_dir
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        })
    }

    pub fn spec(&self) -> Result<SystemSpec> {
        build_spec(&self.params)
    }
}

pub fn build_spec(params: &ModelParams) -> Result<SystemSpec> {
    match params {
        ModelParams::BivariateDeath(p) => bivariate_death_system(p),
        ModelParams::MultistrainSir(p) => multistrain_sir_system(p),
    }
}
