//! Strict experiment configuration: TOML in, fully validated structs out.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sociq::d2dsim::{ScenarioConfig, SchemeKind};
use sociq::processes::ProcessSpec;
use sociq::queueing::{DEFAULT_WARMUP_SLOTS, DTMC_MAX_CAP};
use sociq::Error;

use crate::{CliError, CliResult};

/// Slots in a full-size tail experiment.
pub const DEFAULT_TAIL_SLOTS: usize = 10_000_000;
/// Slot ceiling applied by `--quick`.
pub const QUICK_SLOTS: usize = 1_000_000;

/// The named experiment suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TailVerify,
    OracleCompare,
    CreditScenario,
    Reputation,
    Centrality,
    Sweep,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::TailVerify,
        Experiment::OracleCompare,
        Experiment::CreditScenario,
        Experiment::Reputation,
        Experiment::Centrality,
        Experiment::Sweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::TailVerify => "tail-verify",
            Experiment::OracleCompare => "oracle-compare",
            Experiment::CreditScenario => "credit-scenario",
            Experiment::Reputation => "reputation",
            Experiment::Centrality => "centrality",
            Experiment::Sweep => "sweep",
        }
    }

    pub fn blurb(&self) -> &'static str {
        match self {
            Experiment::TailVerify => {
                "uncapped queue tail vs the solved decay exponent (CCDF + fit)"
            }
            Experiment::OracleCompare => {
                "simulated capped-queue histogram vs the exact stationary chain"
            }
            Experiment::CreditScenario => {
                "D2D relay credit scenario across spending schemes (CDF + summary)"
            }
            Experiment::Reputation => "reputation dynamics in filter or queue mode",
            Experiment::Centrality => "centrality queue drain and growth trace",
            Experiment::Sweep => "credit scenario swept over one scalar parameter",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Root of a config file; exactly one experiment section may be present,
/// and it must match `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_verify: Option<TailVerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_compare: Option<OracleCompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credit_scenario: Option<CreditScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reputation: Option<ReputationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centrality: Option<CentralityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seed() -> u64 {
    2026
}

fn default_replications() -> u32 {
    1
}

fn default_tail_slots() -> usize {
    DEFAULT_TAIL_SLOTS
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP_SLOTS
}

fn default_slot_sample() -> usize {
    10_000
}

fn default_filter_slots() -> usize {
    200
}

fn default_centrality_slots() -> usize {
    1_000
}

/// Uncapped-queue tail experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailVerifyConfig {
    pub arrival: ProcessSpec,
    pub departure: ProcessSpec,
    #[serde(default = "default_tail_slots")]
    pub n_slots: usize,
    #[serde(default = "default_warmup")]
    pub warmup_slots: usize,
}

/// Capped-queue histogram vs exact stationary law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCompareConfig {
    pub arrival: ProcessSpec,
    pub departure: ProcessSpec,
    pub c_max: u32,
    #[serde(default = "default_tail_slots")]
    pub n_slots: usize,
    #[serde(default = "default_warmup")]
    pub warmup_slots: usize,
}

/// Relay scenario over one or more spending schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditScenarioConfig {
    pub scenario: ScenarioConfig,
    /// Schemes to run; defaults to the scenario's own scheme only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<SchemeKind>>,
    /// Leading slots exported to the per-slot CSV.
    #[serde(default = "default_slot_sample")]
    pub slot_sample: usize,
}

impl CreditScenarioConfig {
    pub fn scheme_list(&self) -> Vec<SchemeKind> {
        match &self.schemes {
            Some(list) => list.clone(),
            None => vec![self.scenario.scheme],
        }
    }
}

/// Reputation dynamics, either exponential-forgetting or capped-queue mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReputationConfig {
    Filter {
        lambda: f64,
        initial: f64,
        /// Constant per-slot rating input.
        gain: f64,
        #[serde(default = "default_filter_slots")]
        n_slots: usize,
    },
    Queue {
        r_max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<f64>,
        gain: ProcessSpec,
        spend: ProcessSpec,
        #[serde(default = "default_tail_slots")]
        n_slots: usize,
        #[serde(default = "default_warmup")]
        warmup_slots: usize,
    },
}

/// Centrality trace from an initial backlog under a constant drain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralityConfig {
    pub initial: f64,
    pub mu: f64,
    /// Per-slot increments; omitted means none (pure drain).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increments: Option<ProcessSpec>,
    #[serde(default = "default_centrality_slots")]
    pub n_slots: usize,
}

/// Scalar scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Price,
    Markup,
    PAvg,
    InterferenceCap,
    CTh,
    Delta,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Price => "price",
            SweepParameter::Markup => "markup",
            SweepParameter::PAvg => "p_avg",
            SweepParameter::InterferenceCap => "interference_cap",
            SweepParameter::CTh => "c_th",
            SweepParameter::Delta => "delta",
        }
    }

    pub fn apply(&self, scenario: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut s = scenario.clone();
        match self {
            SweepParameter::Price => s.price = value,
            SweepParameter::Markup => s.markup = value,
            SweepParameter::PAvg => s.power.p_avg = value,
            SweepParameter::InterferenceCap => s.interference_cap = value,
            SweepParameter::CTh => s.account.c_th = value,
            SweepParameter::Delta => s.account.delta = value,
        }
        s
    }
}

/// Credit scenario repeated along one parameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub scenario: ScenarioConfig,
}

impl ExperimentConfig {
    /// Full validation: the matching section is present, no stray sections,
    /// and every embedded module config validates.
    pub fn validate(&self) -> CliResult<()> {
        if self.replications == 0 {
            return Err(config_err("replications", "must be at least 1"));
        }
        let sections: [(&str, bool); 6] = [
            ("tail_verify", self.tail_verify.is_some()),
            ("oracle_compare", self.oracle_compare.is_some()),
            ("credit_scenario", self.credit_scenario.is_some()),
            ("reputation", self.reputation.is_some()),
            ("centrality", self.centrality.is_some()),
            ("sweep", self.sweep.is_some()),
        ];
        let expected = match self.experiment {
            Experiment::TailVerify => "tail_verify",
            Experiment::OracleCompare => "oracle_compare",
            Experiment::CreditScenario => "credit_scenario",
            Experiment::Reputation => "reputation",
            Experiment::Centrality => "centrality",
            Experiment::Sweep => "sweep",
        };
        for (name, present) in sections {
            if name == expected && !present {
                return Err(config_err(
                    name,
                    format!("experiment \"{}\" needs this section", self.experiment),
                ));
            }
            if name != expected && present {
                return Err(config_err(
                    name,
                    format!(
                        "section does not belong to experiment \"{}\"",
                        self.experiment
                    ),
                ));
            }
        }

        match self.experiment {
            Experiment::TailVerify => {
                let c = self.tail_verify.as_ref().unwrap();
                c.arrival.validate().map_err(prefix("tail_verify.arrival"))?;
                c.departure
                    .validate()
                    .map_err(prefix("tail_verify.departure"))?;
                check_slots("tail_verify", c.n_slots, c.warmup_slots)?;
            }
            Experiment::OracleCompare => {
                let c = self.oracle_compare.as_ref().unwrap();
                c.arrival
                    .validate()
                    .map_err(prefix("oracle_compare.arrival"))?;
                c.departure
                    .validate()
                    .map_err(prefix("oracle_compare.departure"))?;
                if c.c_max == 0 || c.c_max > DTMC_MAX_CAP {
                    return Err(config_err(
                        "oracle_compare.c_max",
                        format!("must lie in 1..={DTMC_MAX_CAP}"),
                    ));
                }
                check_slots("oracle_compare", c.n_slots, c.warmup_slots)?;
            }
            Experiment::CreditScenario => {
                let c = self.credit_scenario.as_ref().unwrap();
                c.scenario.validate().map_err(CliError::from)?;
                if c.scheme_list().is_empty() {
                    return Err(config_err("credit_scenario.schemes", "must be non-empty"));
                }
            }
            Experiment::Reputation => match self.reputation.as_ref().unwrap() {
                ReputationConfig::Filter {
                    lambda,
                    initial,
                    gain,
                    n_slots,
                } => {
                    sociq::social::ReputationState::filter(*initial, *lambda)
                        .map_err(prefix("reputation"))?;
                    if !(*gain >= 0.0) || !gain.is_finite() {
                        return Err(config_err("reputation.gain", "must be finite and >= 0"));
                    }
                    if *n_slots == 0 {
                        return Err(config_err("reputation.n_slots", "must be at least 1"));
                    }
                }
                ReputationConfig::Queue {
                    r_max,
                    initial,
                    gain,
                    spend,
                    n_slots,
                    warmup_slots,
                } => {
                    let level = initial.unwrap_or(r_max / 2.0);
                    sociq::social::ReputationState::queue(level, *r_max)
                        .map_err(prefix("reputation"))?;
                    gain.validate().map_err(prefix("reputation.gain"))?;
                    spend.validate().map_err(prefix("reputation.spend"))?;
                    check_slots("reputation", *n_slots, *warmup_slots)?;
                }
            },
            Experiment::Centrality => {
                let c = self.centrality.as_ref().unwrap();
                sociq::social::CentralityState::new(c.initial, c.mu)
                    .map_err(prefix("centrality"))?;
                if let Some(spec) = &c.increments {
                    spec.validate().map_err(prefix("centrality.increments"))?;
                }
                if c.n_slots == 0 {
                    return Err(config_err("centrality.n_slots", "must be at least 1"));
                }
            }
            Experiment::Sweep => {
                let c = self.sweep.as_ref().unwrap();
                if c.values.is_empty() {
                    return Err(config_err("sweep.values", "must be non-empty"));
                }
                c.scenario.validate().map_err(CliError::from)?;
                for &value in &c.values {
                    c.parameter
                        .apply(&c.scenario, value)
                        .validate()
                        .map_err(|e| {
                            CliError::Config(format!(
                                "sweep value {value} for {}: {e}",
                                c.parameter.name()
                            ))
                        })?;
                }
            }
        }
        Ok(())
    }

    /// Caps every slot count at the quick-mode size.
    pub fn apply_quick(&mut self) {
        let cap = |n: &mut usize| *n = (*n).min(QUICK_SLOTS);
        if let Some(c) = &mut self.tail_verify {
            cap(&mut c.n_slots);
        }
        if let Some(c) = &mut self.oracle_compare {
            cap(&mut c.n_slots);
        }
        if let Some(c) = &mut self.credit_scenario {
            cap(&mut c.scenario.n_slots);
        }
        if let Some(ReputationConfig::Queue { n_slots, .. }) = &mut self.reputation {
            cap(n_slots);
        }
        if let Some(c) = &mut self.sweep {
            cap(&mut c.scenario.n_slots);
        }
    }

    /// Canonical serialized form; both the echo-back output and the hashed
    /// configuration identity.
    pub fn canonical_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("serialize: {e}")))
    }
}

fn check_slots(section: &str, n_slots: usize, warmup: usize) -> CliResult<()> {
    if n_slots == 0 || n_slots <= warmup {
        return Err(config_err(
            format!("{section}.n_slots"),
            "must exceed warmup_slots",
        ));
    }
    Ok(())
}

fn config_err(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::from(Error::validation(field, reason))
}

fn prefix(path: &'static str) -> impl Fn(Error) -> CliError {
    move |e| match e {
        Error::Validation { field, reason } => {
            CliError::Config(format!("{path}.{field}: {reason}"))
        }
        other => CliError::from(other),
    }
}

/// Reads and fully validates a config file.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
