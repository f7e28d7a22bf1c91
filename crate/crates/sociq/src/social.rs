//! Credit, reputation and centrality state machines built on the queue model.

use crate::error::{Error, Result};
use crate::queueing::{inverse_transform, step_queue, QueueTrace};

/// A device's credit account and its statistical outage requirement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditAccount {
    /// Current credit level.
    pub level: f64,
    /// Maximum credit the account can hold.
    pub c_max: f64,
    /// Outage threshold: dropping below this is a service outage.
    pub c_th: f64,
    /// Tolerated outage probability.
    pub delta: f64,
}

impl CreditAccount {
    pub fn new(c_max: f64, c_th: f64, delta: f64) -> Result<Self> {
        let account = CreditAccount {
            level: c_max / 2.0,
            c_max,
            c_th,
            delta,
        };
        account.validate()?;
        Ok(account)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c_max.is_finite() || self.c_max <= 0.0 {
            return Err(Error::validation("account.c_max", "must be finite and > 0"));
        }
        if !(self.c_th >= 0.0 && self.c_th < self.c_max) {
            return Err(Error::validation(
                "account.c_th",
                "must satisfy 0 <= c_th < c_max",
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::validation(
                "account.delta",
                "must lie strictly in (0, 1)",
            ));
        }
        if !(self.level >= 0.0 && self.level <= self.c_max) {
            return Err(Error::validation(
                "account.level",
                "must satisfy 0 <= level <= c_max",
            ));
        }
        Ok(())
    }
}

/// Outcome of evaluating the statistical credit constraint on a trace.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CreditCheck {
    /// Fraction of post-warmup slots with credit below the threshold.
    pub outage_prob: f64,
    /// Whether the outage probability stays below the account's delta.
    pub satisfied: bool,
}

/// Evaluates the statistical credit constraint `Pr{Q < c_th} < delta` on the
/// post-warmup part of a trace.
pub fn check_credit_constraint(trace: &QueueTrace, account: &CreditAccount) -> Result<CreditCheck> {
    account.validate()?;
    if trace.config().c_max != account.c_max {
        return Err(Error::validation(
            "trace",
            format!(
                "trace cap {} does not match account cap {}",
                trace.config().c_max,
                account.c_max
            ),
        ));
    }
    let view = trace.post_warmup();
    let mut outages = 0usize;
    for q in view {
        let outage = *q < account.c_th;
        // The budget-view event {c_max - Q > c_max - c_th} is the same event.
        debug_assert_eq!(
            outage,
            inverse_transform(*q, account.c_max).unwrap() > account.c_max - account.c_th
        );
        if outage {
            outages += 1;
        }
    }
    let outage_prob = outages as f64 / view.len() as f64;
    Ok(CreditCheck {
        outage_prob,
        satisfied: outage_prob < account.delta,
    })
}

/// Wilson score upper confidence limit for a binomial proportion, the
/// honest way to report an outage estimate from `count` hits in `n` slots.
pub fn wilson_upper(count: u64, n: u64, z: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::validation("n", "needs at least one trial"));
    }
    if count > n {
        return Err(Error::validation("count", "cannot exceed the trial count"));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::validation("z", "must be finite and >= 0"));
    }
    let n = n as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center + spread) / denom).min(1.0))
}

/// Reputation carried either as a forgetting-factor filter or as a capped
/// queue level.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReputationState {
    Filter { value: f64, lambda: f64 },
    Queue { level: f64, r_max: f64 },
}

impl ReputationState {
    pub fn filter(value: f64, lambda: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::validation("reputation.value", "must be finite, >= 0"));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::validation(
                "reputation.lambda",
                "must lie strictly in (0, 1)",
            ));
        }
        Ok(ReputationState::Filter { value, lambda })
    }

    pub fn queue(level: f64, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0) {
            return Err(Error::validation("reputation.r_max", "must be > 0"));
        }
        if !(level >= 0.0 && level <= r_max) {
            return Err(Error::validation(
                "reputation.level",
                "must satisfy 0 <= level <= r_max",
            ));
        }
        Ok(ReputationState::Queue { level, r_max })
    }

    /// The scalar reputation value, whichever mode carries it.
    pub fn value(&self) -> f64 {
        match self {
            ReputationState::Filter { value, .. } => *value,
            ReputationState::Queue { level, .. } => *level,
        }
    }
}

/// One step of the filter-mode update: `value' = λ value + (1-λ) gain`.
pub fn reputation_filter_update(state: &ReputationState, gain: f64) -> Result<ReputationState> {
    if !(gain >= 0.0) {
        return Err(Error::validation("gain", "must be >= 0"));
    }
    match state {
        ReputationState::Filter { value, lambda } => Ok(ReputationState::Filter {
            value: lambda * value + (1.0 - lambda) * gain,
            lambda: *lambda,
        }),
        ReputationState::Queue { .. } => Err(Error::Unsupported {
            op: "reputation_filter_update".into(),
            reason: "state is in queue mode".into(),
        }),
    }
}

/// One step of the queue-mode update, a capped queue step.
pub fn reputation_queue_update(
    state: &ReputationState,
    gain: f64,
    spend: f64,
) -> Result<ReputationState> {
    if !(gain >= 0.0) || !(spend >= 0.0) {
        return Err(Error::validation("gain/spend", "must be >= 0"));
    }
    match state {
        ReputationState::Queue { level, r_max } => Ok(ReputationState::Queue {
            level: step_queue(*level, gain, spend, *r_max),
            r_max: *r_max,
        }),
        ReputationState::Filter { .. } => Err(Error::Unsupported {
            op: "reputation_queue_update".into(),
            reason: "state is in filter mode".into(),
        }),
    }
}

/// How much credit a device may borrow given its reputation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoanPolicy {
    /// Credit granted per unit of reputation.
    pub kappa: f64,
    /// Hard cap on the loan.
    pub l_max: f64,
}

impl LoanPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::validation("loan.kappa", "must be finite and >= 0"));
        }
        if !(self.l_max >= 0.0) || !self.l_max.is_finite() {
            return Err(Error::validation("loan.l_max", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Loan available at a reputation level: `min(kappa * reputation, l_max)`.
pub fn loan_limit(policy: &LoanPolicy, reputation: f64) -> Result<f64> {
    policy.validate()?;
    if !(reputation >= 0.0) {
        return Err(Error::validation("reputation", "must be >= 0"));
    }
    Ok((policy.kappa * reputation).min(policy.l_max))
}

/// Outage threshold after a loan shifts the bound: `max(c_th - loan, 0)`.
pub fn effective_outage_threshold(account: &CreditAccount, loan: f64) -> Result<f64> {
    account.validate()?;
    if !(loan >= 0.0) {
        return Err(Error::validation("loan", "must be >= 0"));
    }
    Ok((account.c_th - loan).max(0.0))
}

/// Centrality as an uncapped queue with a constant virtual departure rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralityState {
    pub level: f64,
    /// Virtual constant departure rate.
    pub mu: f64,
}

impl CentralityState {
    pub fn new(level: f64, mu: f64) -> Result<Self> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::validation("centrality.level", "must be finite, >= 0"));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::validation("centrality.mu", "must be finite and > 0"));
        }
        Ok(CentralityState { level, mu })
    }
}

/// One centrality step: `level' = max(level + increment - mu, 0)`.
pub fn centrality_update(state: &CentralityState, increment: f64) -> Result<CentralityState> {
    if !(increment >= 0.0) {
        return Err(Error::validation("increment", "must be >= 0"));
    }
    Ok(CentralityState {
        level: step_queue(state.level, increment, state.mu, f64::INFINITY),
        mu: state.mu,
    })
}
