//! The named experiment suites behind `sociq run`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sociq::d2dsim::SchemeKind;

use crate::config::{Experiment, ExperimentConfig};
use crate::manifest::OutputRecord;
use crate::{CliError, CliResult};

mod centrality;
mod credit_scenario;
mod oracle_compare;
mod reputation;
mod sweep;
mod tail_verify;

/// Everything an experiment needs besides its own section.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub replications: u32,
}

/// What an experiment hands back for the manifest.
pub struct ExpOutcome {
    pub summary: BTreeMap<String, toml::Value>,
    pub outputs: Vec<OutputRecord>,
}

/// Dispatches the configured experiment.
pub fn dispatch(config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    match config.experiment {
        Experiment::TailVerify => tail_verify::run(config.tail_verify.as_ref().unwrap(), ctx),
        Experiment::OracleCompare => {
            oracle_compare::run(config.oracle_compare.as_ref().unwrap(), ctx)
        }
        Experiment::CreditScenario => {
            credit_scenario::run(config.credit_scenario.as_ref().unwrap(), ctx)
        }
        Experiment::Reputation => reputation::run(config.reputation.as_ref().unwrap(), ctx),
        Experiment::Centrality => centrality::run(config.centrality.as_ref().unwrap(), ctx),
        Experiment::Sweep => sweep::run(config.sweep.as_ref().unwrap(), ctx),
    }
}

/// Wire name of a scheme, matching its configuration spelling.
pub fn scheme_name(scheme: SchemeKind) -> &'static str {
    match scheme {
        SchemeKind::QosDriven => "qos_driven",
        SchemeKind::WaterFilling => "water_filling",
        SchemeKind::AbsoluteControl => "absolute_control",
    }
}

/// Natural log as CSV text; exact zeros print as "-inf".
pub fn log_str(p: f64) -> String {
    format!("{}", p.ln())
}

/// Optional float as CSV text; absent values print empty.
pub fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs replication workers in parallel but merges in replication order,
/// so results are identical under any thread count.
pub fn per_replication<T: Send>(
    replications: u32,
    worker: impl Fn(u64) -> CliResult<T> + Sync,
) -> CliResult<Vec<T>> {
    use rayon::prelude::*;
    (0..replications as u64)
        .into_par_iter()
        .map(|rep| worker(rep))
        .collect::<Result<Vec<T>, CliError>>()
}
