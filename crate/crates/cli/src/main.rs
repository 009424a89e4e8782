//! `cojump`: simulate, verify and estimate Markov counting systems with
//! gamma-noise co-jumps.
//!
//! Exit codes: 0 success, 1 failed verification, 2 configuration error,
//! 3 runtime error.

mod config;
mod suites;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cojump_core::moments::{
    default_step, estimate_infinitesimal_covariance, infinitesimal_covariance,
    write_estimate_report, EstimateRecord,
};
use cojump_core::rng::RngStream;
use cojump_core::simulator::{check_trajectory, Simulator, Trajectory};
use cojump_core::{Error, SystemSpec, TransitionType};
use rayon::prelude::*;
use serde::Serialize;

use config::RunConfig;
use suites::Suite;

const SCHEMA_VERSION: u32 = 1;
const DEFAULT_ESTIMATE_REPLICATES: u64 = 100_000;

#[derive(Parser)]
#[command(
    name = "cojump",
    version,
    about = "Exact simulation and verification of co-jump counting systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[model] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectories for `simulate`, Monte Carlo replicates otherwise.
    #[arg(long)]
    replicates: Option<u64>,
    /// Overrides `[model] output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[model] t_end`.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write CSV files plus a JSON summary.
    Simulate(Common),
    /// Run a verification suite and write its report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Estimate an infinitesimal covariance at the initial state.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Two transitions, e.g. `S->I1,S1->I1*`.
        #[arg(long)]
        pair: String,
        /// Step length; defaults to `0.05 / lambda(init)`.
        #[arg(long)]
        h: Option<f64>,
    },
}

enum Failure {
    Verification(String),
    Config(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn runtime(e: Error) -> Failure {
    match e {
        Error::StepTooLarge { .. } | Error::TooFewReplicates { .. } => Failure::Config(e),
        e => Failure::Runtime(e),
    }
}

fn load(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut config = RunConfig::load(&common.config).map_err(Failure::Config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(t_end) = common.t_end {
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Failure::Config(Error::Config(format!(
                "--t-end must be nonnegative, got {t_end}"
            ))));
        }
        config.t_end = t_end;
    }
    if let Some(0) = common.replicates {
        return Err(Failure::Config(Error::Config(
            "--replicates must be positive".into(),
        )));
    }
    Ok(config)
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(Error::Io(format!("{}: {e}", path.display()))))
}

fn output_dir(config: &RunConfig) -> std::result::Result<&Path, Failure> {
    fs::create_dir_all(&config.output_dir).map_err(|e| {
        Failure::Runtime(Error::Io(format!("{}: {e}", config.output_dir.display())))
    })?;
    Ok(&config.output_dir)
}

#[derive(Serialize)]
struct RunSummary {
    replicate: u64,
    file: String,
    events: usize,
    final_time: f64,
    final_state: BTreeMap<String, u64>,
    family_events: BTreeMap<String, u64>,
    transition_counts: BTreeMap<String, u64>,
}

#[derive(Serialize)]
struct Summary {
    schema_version: u32,
    model: &'static str,
    seed: u64,
    t_end: f64,
    replicates: u64,
    compartments: Vec<String>,
    runs: Vec<RunSummary>,
}

fn summarize(spec: &SystemSpec, replicate: u64, file: String, traj: &Trajectory) -> RunSummary {
    let final_state = spec
        .compartments()
        .iter()
        .zip(traj.final_state().counts())
        .map(|(c, &n)| (c.to_string(), n))
        .collect();
    let mut family_events = BTreeMap::new();
    for e in &traj.events {
        *family_events
            .entry(spec.family(e.family).name().to_string())
            .or_insert(0) += 1;
    }
    let transition_counts = spec
        .transitions()
        .iter()
        .zip(traj.final_counts().counts())
        .map(|(t, &n)| (t.to_string(), n))
        .collect();
    RunSummary {
        replicate,
        file,
        events: traj.events.len(),
        final_time: traj.times.last().copied().unwrap_or(0.0),
        final_state,
        family_events,
        transition_counts,
    }
}

/// Re-reads a written trajectory and checks its layout, the initial row and,
/// for closed populations, that every row sums to the population size.
fn validate_file(
    path: &Path,
    spec: &SystemSpec,
    traj: &Trajectory,
    population: Option<u64>,
) -> cojump_core::Result<()> {
    let fail = |msg: String| Err(Error::InvalidSystem(format!("{}: {msg}", path.display())));
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let width = 4 + spec.compartments().len();
    if header.len() != width || &header[0] != "time" {
        return fail("unexpected header".into());
    }
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let counts: Vec<u64> = (4..width)
            .map(|i| {
                record[i]
                    .parse::<u64>()
                    .map_err(|e| Error::InvalidSystem(e.to_string()))
            })
            .collect::<cojump_core::Result<_>>()?;
        if traj
            .states
            .get(k)
            .is_none_or(|s| s.counts() != counts.as_slice())
        {
            return fail(format!("row {k} disagrees with the simulated state"));
        }
        if let Some(p) = population {
            if counts.iter().sum::<u64>() != p {
                return fail(format!("row {k} does not sum to P = {p}"));
            }
        }
        rows += 1;
    }
    if rows != traj.states.len() {
        return fail(format!("{rows} rows for {} states", traj.states.len()));
    }
    Ok(())
}

fn simulate(common: &Common) -> Outcome {
    let config = load(common)?;
    let spec = config.spec().map_err(Failure::Config)?;
    let replicates = common.replicates.unwrap_or(config.replicates);
    let dir = output_dir(&config)?;

    let trajectories: Vec<cojump_core::Result<Trajectory>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            Simulator::new(&spec).simulate(
                &config.init,
                config.t_end,
                RngStream::new(config.seed, r),
            )
        })
        .collect();
    let population = match &config.params {
        cojump_core::moments::ModelParams::MultistrainSir(p) => Some(p.population),
        _ => None,
    };

    let mut runs = Vec::new();
    for (r, traj) in trajectories.into_iter().enumerate() {
        let traj = traj.map_err(runtime)?;
        let name = format!("trajectory_{r}.csv");
        let path = dir.join(&name);
        let mut w = create(&path)?;
        traj.write_csv(&spec, &mut w).map_err(runtime)?;
        w.flush().map_err(|e| Failure::Runtime(e.into()))?;
        drop(w);
        check_trajectory(&spec, &traj).map_err(runtime)?;
        validate_file(&path, &spec, &traj, population).map_err(runtime)?;
        runs.push(summarize(&spec, r as u64, name, &traj));
    }

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        model: config.model.as_str(),
        seed: config.seed,
        t_end: config.t_end,
        replicates,
        compartments: spec.compartments().iter().map(|c| c.to_string()).collect(),
        runs,
    };
    let mut w = create(&dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &summary)
        .map_err(|e| Failure::Runtime(Error::Io(e.to_string())))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Runtime(e.into()))?;
    println!(
        "wrote {replicates} trajectories and summary.json to {}",
        dir.display()
    );
    Ok(())
}

fn verify(common: &Common, suite: Suite) -> Outcome {
    let config = load(common)?;
    config.spec().map_err(Failure::Config)?;
    let replicates = common.replicates.unwrap_or(suites::MIN_SUITE_REPLICATES);
    let dir = output_dir(&config)?;
    let rows = suites::run(suite, &config, replicates).map_err(runtime)?;
    let path = dir.join(format!("verify_{}.csv", suite.name()));
    let mut w = create(&path)?;
    suites::write_rows(&rows, &mut w).map_err(runtime)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;

    let failed: Vec<_> = rows.iter().filter(|r| !r.passed).collect();
    for r in &failed {
        eprintln!(
            "FAIL {} [{}]: statistic {} against limit {} (value {}, target {})",
            r.check, r.case, r.statistic, r.limit, r.value, r.target
        );
    }
    println!(
        "{}: {} of {} checks passed; report {}",
        suite.name(),
        rows.len() - failed.len(),
        rows.len(),
        path.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "{} checks failed",
            failed.len()
        )))
    }
}

fn parse_pair(
    spec: &SystemSpec,
    pair: &str,
) -> std::result::Result<(TransitionType, TransitionType), Failure> {
    let parts: Vec<&str> = pair.split(',').collect();
    let [a, b] = parts.as_slice() else {
        return Err(Failure::Config(Error::Config(format!(
            "--pair expects two transitions A->B,C->D, got {pair}"
        ))));
    };
    let a = TransitionType::parse(a).map_err(Failure::Config)?;
    let b = TransitionType::parse(b).map_err(Failure::Config)?;
    spec.transition_index(&a).map_err(Failure::Config)?;
    spec.transition_index(&b).map_err(Failure::Config)?;
    Ok((a, b))
}

fn estimate(common: &Common, pair: &str, h: Option<f64>) -> Outcome {
    let config = load(common)?;
    let spec = config.spec().map_err(Failure::Config)?;
    let (a, b) = parse_pair(&spec, pair)?;
    let x = &config.init;
    let h = match h {
        Some(h) => h,
        None => default_step(&spec, x).map_err(runtime)?,
    };
    let replicates = common.replicates.unwrap_or(DEFAULT_ESTIMATE_REPLICATES);
    let est = estimate_infinitesimal_covariance(
        &spec,
        x,
        (&a, &b),
        h,
        replicates,
        RngStream::new(config.seed, 0),
    )
    .map_err(runtime)?;
    let target = infinitesimal_covariance(&spec, x, &a, &b).map_err(runtime)?;
    let record = EstimateRecord::new(config.model.as_str(), x, format!("{a},{b}"), &est, target);

    let dir = output_dir(&config)?;
    let mut w = create(&dir.join("estimate.csv"))?;
    write_estimate_report(std::slice::from_ref(&record), &mut w).map_err(runtime)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    println!(
        "covariance {a},{b}: estimate {} (std error {}, h {}, replicates {}); closed form {}; z-score {:.3}",
        est.value, est.std_error, est.h, est.replicates, target, record.z_score
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(common) => simulate(common),
        Command::Verify { common, suite } => verify(common, *suite),
        Command::Estimate { common, pair, h } => estimate(common, pair, *h),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verification(msg) => eprintln!("verification failed: {msg}"),
                Failure::Config(e) => eprintln!("configuration error: {e}"),
                Failure::Runtime(e) => eprintln!("runtime error: {e}"),
            }
            ExitCode::from(f.code())
        }
    }
}
