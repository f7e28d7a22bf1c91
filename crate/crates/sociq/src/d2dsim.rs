//! Two-hop relay scenario: device A serves data to device C through relay B,
//! reusing a cellular user's spectrum under an interference cap, with C
//! paying for relayed bits out of a credit account.

use crate::effective::{
    empirical_ccdf, fit_decay_rate, target_theta, QoSExponent, TailFit,
};
use crate::error::{Error, Result};
use crate::processes::ProcessSpec;
use crate::queueing::{step_queue, QueueConfig, QueueTrace};
use crate::rng::{exp_inverse, replication_stream, StreamRng, StreamSeed};
use crate::social::{check_credit_constraint, CreditAccount};

/// Stream purposes within one replication's stream block.
pub const STREAM_CHANNEL: u64 = 0;
pub const STREAM_EARN: u64 = 1;
pub const STREAM_QOS_CALIBRATION: u64 = 2;
pub const STREAM_WF_CALIBRATION: u64 = 3;

/// Channel samples drawn for spending/power calibration.
pub const CALIBRATION_SLOTS: usize = 100_000;
/// Quantile bins used to discretize the spending distribution.
pub const SPEND_QUANTILE_BINS: usize = 64;
/// Absolute tolerance of the spending-scale bisection.
pub const BETA_TOL: f64 = 1e-4;
/// Smallest spending scale probed before declaring infeasibility.
pub const BETA_MIN: f64 = 1e-6;
/// Relative tolerance of the water-level bisection.
pub const WF_REL_TOL: f64 = 1e-6;

/// Mean power gains of the four links in play: the two relay hops and the
/// two interference paths into the cellular user.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub mean_gain_ab: f64,
    pub mean_gain_bc: f64,
    pub mean_gain_a_ue: f64,
    pub mean_gain_b_ue: f64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("channel.mean_gain_ab", self.mean_gain_ab),
            ("channel.mean_gain_bc", self.mean_gain_bc),
            ("channel.mean_gain_a_ue", self.mean_gain_a_ue),
            ("channel.mean_gain_b_ue", self.mean_gain_b_ue),
        ] {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::validation(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Per-device transmit power limits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    /// Hard per-slot power limit.
    pub p_max: f64,
    /// Average-power budget (enforced by the water-filling scheme only).
    pub p_avg: f64,
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0) || !self.p_max.is_finite() {
            return Err(Error::validation("power.p_max", "must be finite and > 0"));
        }
        if !(self.p_avg > 0.0) || !self.p_avg.is_finite() {
            return Err(Error::validation("power.p_avg", "must be finite and > 0"));
        }
        if self.p_avg > self.p_max {
            return Err(Error::validation("power.p_avg", "must not exceed p_max"));
        }
        Ok(())
    }
}

/// Transmission-control scheme compared in the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Spending scaled so the credit queue meets its decay-rate target.
    QosDriven,
    /// Water-filling power over the bottleneck channel, spending freely.
    WaterFilling,
    /// Hard floor: never let credit drop below the outage threshold.
    AbsoluteControl,
}

/// Full description of one scenario run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_slots: usize,
    #[serde(default = "default_warmup")]
    pub warmup_slots: usize,
    pub channel: ChannelConfig,
    pub power: PowerConfig,
    /// Maximum interference power received by the cellular user.
    pub interference_cap: f64,
    #[serde(default = "default_one")]
    pub bandwidth: f64,
    #[serde(default = "default_one")]
    pub noise: f64,
    /// Credit forwarded to A per relayed bit.
    pub price: f64,
    /// Relay surcharge: C pays `markup * price` per bit, B keeps the margin.
    #[serde(default = "default_markup")]
    pub markup: f64,
    /// C's credit income from activities outside this relay flow.
    pub earn: ProcessSpec,
    pub account: CreditAccount,
    pub scheme: SchemeKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replication: u64,
    /// Skips calibration and runs the QoS scheme at a fixed spending scale.
    #[serde(default)]
    pub beta_override: Option<f64>,
}

fn default_warmup() -> usize {
    crate::queueing::DEFAULT_WARMUP_SLOTS
}

fn default_one() -> f64 {
    1.0
}

fn default_markup() -> f64 {
    1.1
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 || self.n_slots <= self.warmup_slots {
            return Err(Error::validation(
                "n_slots",
                "must exceed warmup_slots",
            ));
        }
        self.channel.validate()?;
        self.power.validate()?;
        if !(self.interference_cap > 0.0) || !self.interference_cap.is_finite() {
            return Err(Error::validation(
                "interference_cap",
                "must be finite and > 0",
            ));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::validation("bandwidth", "must be finite and > 0"));
        }
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return Err(Error::validation("noise", "must be finite and > 0"));
        }
        if !(self.price >= 0.0) || !self.price.is_finite() {
            return Err(Error::validation("price", "must be finite and >= 0"));
        }
        if !(self.markup >= 1.0) || !self.markup.is_finite() {
            return Err(Error::validation("markup", "must be finite and >= 1"));
        }
        self.earn.validate()?;
        self.account.validate()?;
        if let Some(beta) = self.beta_override {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::validation(
                    "beta_override",
                    "must lie in (0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// Power gains of the four links in one slot.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinkGains {
    pub ab: f64,
    pub bc: f64,
    pub a_ue: f64,
    pub b_ue: f64,
}

fn draw_gains(rng: &mut StreamRng, channel: &ChannelConfig) -> LinkGains {
    LinkGains {
        ab: exp_inverse(rng, channel.mean_gain_ab),
        bc: exp_inverse(rng, channel.mean_gain_bc),
        a_ue: exp_inverse(rng, channel.mean_gain_a_ue),
        b_ue: exp_inverse(rng, channel.mean_gain_b_ue),
    }
}

/// Words of RNG output one slot's gains consume (4 gains, 2 words each).
const WORDS_PER_SLOT: u128 = 8;

/// Gains of an arbitrary slot, addressed directly in the stream.
pub fn sample_channel(channel: &ChannelConfig, slot: u64, seed: StreamSeed) -> Result<LinkGains> {
    channel.validate()?;
    let mut rng = seed.rng();
    rng.set_word_pos(slot as u128 * WORDS_PER_SLOT);
    Ok(draw_gains(&mut rng, channel))
}

/// Sequential per-slot channel sampler; emits the same sequence that
/// `sample_channel` addresses randomly.
pub struct ChannelSampler {
    rng: StreamRng,
    channel: ChannelConfig,
}

impl ChannelSampler {
    pub fn new(channel: &ChannelConfig, seed: StreamSeed) -> Result<Self> {
        channel.validate()?;
        Ok(ChannelSampler {
            rng: seed.rng(),
            channel: *channel,
        })
    }

    pub fn next_gains(&mut self) -> LinkGains {
        draw_gains(&mut self.rng, &self.channel)
    }
}

/// Single-hop rate at the given gain and power.
pub fn hop_rate(gain: f64, power: f64, noise: f64, bandwidth: f64) -> f64 {
    bandwidth * (1.0 + gain * power / noise).log2()
}

/// End-to-end two-slot relay rate: half the bottleneck hop rate.
pub fn relay_rate(gain_ab: f64, gain_bc: f64, power: f64, noise: f64, bandwidth: f64) -> f64 {
    0.5 * hop_rate(gain_ab.min(gain_bc), power, noise, bandwidth)
}

/// Largest transmit power that keeps the received interference at the
/// cellular user under the cap.
pub fn interference_feasible_power(gain_to_ue: f64, interference_cap: f64, p_max: f64) -> f64 {
    p_max.min(interference_cap / gain_to_ue)
}

/// Water-filling solution over a channel sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Waterfilling {
    pub water_level: f64,
    /// Power allocated to each input sample.
    pub powers: Vec<f64>,
    pub avg_power: f64,
    /// All per-slot caps bind; the average-power target is unreachable.
    pub saturated: bool,
}

/// Power poured at water level `nu` for one channel state.
pub fn waterfilling_power(water_level: f64, gain: f64, noise: f64, cap: f64) -> f64 {
    (water_level - noise / gain).max(0.0).min(cap)
}

/// Chooses the water level so that the mean allocated power over the sample
/// hits `p_avg`, honoring per-sample power caps.
pub fn waterfilling_allocation(
    gains: &[f64],
    caps: &[f64],
    p_avg: f64,
    noise: f64,
) -> Result<Waterfilling> {
    if gains.is_empty() || gains.len() != caps.len() {
        return Err(Error::validation(
            "gains",
            "need equally many gains and caps, at least one",
        ));
    }
    if gains.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::validation("gains", "must be finite and > 0"));
    }
    if caps.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::validation("caps", "must be > 0"));
    }
    if !(p_avg > 0.0) || !p_avg.is_finite() || !(noise > 0.0) {
        return Err(Error::validation("p_avg/noise", "must be finite and > 0"));
    }

    let avg_at = |nu: f64| -> f64 {
        gains
            .iter()
            .zip(caps)
            .map(|(g, c)| waterfilling_power(nu, *g, noise, *c))
            .sum::<f64>()
            / gains.len() as f64
    };

    let cap_mean = caps.iter().sum::<f64>() / caps.len() as f64;
    if cap_mean.is_finite() && cap_mean <= p_avg {
        // Even unlimited water cannot reach the target.
        let powers: Vec<f64> = caps.to_vec();
        return Ok(Waterfilling {
            water_level: f64::INFINITY,
            avg_power: cap_mean,
            powers,
            saturated: true,
        });
    }

    let mut lo = 0.0;
    let mut hi = gains
        .iter()
        .map(|g| noise / g)
        .fold(0.0f64, f64::max)
        .max(1.0)
        + p_avg;
    let mut grow = 0;
    while avg_at(hi) < p_avg {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NonConvergence {
                op: "water level bracket".into(),
                iterations: grow,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let avg = avg_at(mid);
        if (avg - p_avg).abs() <= WF_REL_TOL * p_avg {
            let powers: Vec<f64> = gains
                .iter()
                .zip(caps)
                .map(|(g, c)| waterfilling_power(mid, *g, noise, *c))
                .collect();
            return Ok(Waterfilling {
                water_level: mid,
                avg_power: avg,
                powers,
                saturated: false,
            });
        }
        if avg > p_avg {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::NonConvergence {
        op: "water level bisection".into(),
        iterations: 200,
    })
}

/// Result of tuning the QoS-driven spending scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Largest spending scale meeting the decay-rate target.
    pub beta: f64,
    pub theta_target: f64,
    /// Decay rate achieved at the chosen scale (infinite when the budget
    /// tail vanishes faster than any exponential probed).
    pub theta_achieved: f64,
    /// Mean per-slot spend at full scale.
    pub mean_spend_full: f64,
    pub mean_earn: f64,
    /// Quantile-bin support of the full-scale spending distribution.
    pub spend_support: Vec<f64>,
}

fn slot_power_cap(config: &ScenarioConfig, gains: &LinkGains) -> f64 {
    interference_feasible_power(gains.a_ue, config.interference_cap, config.power.p_max).min(
        interference_feasible_power(gains.b_ue, config.interference_cap, config.power.p_max),
    )
}

fn spend_quantile_support(mut spends: Vec<f64>) -> Vec<f64> {
    spends.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = spends.len();
    (0..SPEND_QUANTILE_BINS)
        .map(|k| {
            let lo = k * n / SPEND_QUANTILE_BINS;
            let hi = ((k + 1) * n / SPEND_QUANTILE_BINS).max(lo + 1);
            spends[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Finds the largest spending scale β in (0, 1] whose credit-budget decay
/// rate still meets the account's target, by bisection.
pub fn qos_calibrate(config: &ScenarioConfig) -> Result<Calibration> {
    config.validate()?;
    let theta_target = target_theta(config.account.c_max, config.account.c_th, config.account.delta)?
        .theta()
        .expect("finite corridor yields a finite target");
    let mean_earn = config.earn.mean_rate()?;

    let mut sampler = ChannelSampler::new(
        &config.channel,
        StreamSeed::new(
            config.seed,
            replication_stream(config.replication, STREAM_QOS_CALIBRATION),
        ),
    )?;
    let mut spends = Vec::with_capacity(CALIBRATION_SLOTS);
    for _ in 0..CALIBRATION_SLOTS {
        let gains = sampler.next_gains();
        let power = slot_power_cap(config, &gains);
        let bits = relay_rate(gains.ab, gains.bc, power, config.noise, config.bandwidth);
        spends.push(config.markup * (config.price * bits));
    }
    let mean_spend_full = spends.iter().sum::<f64>() / spends.len() as f64;
    let support = spend_quantile_support(spends);

    let theta_at = |beta: f64| -> Result<f64> {
        let spec = ProcessSpec::DiscreteUniform {
            support: support.iter().map(|s| beta * s).collect(),
        };
        match crate::effective::solve_theta(&spec, &config.earn) {
            Ok(QoSExponent::Finite { theta }) => Ok(theta),
            Ok(QoSExponent::DeterministicInfinite) => Ok(f64::INFINITY),
            Err(Error::NoFiniteRoot { .. }) => Ok(f64::INFINITY),
            Err(Error::Unstable { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    };

    let theta_full = theta_at(1.0)?;
    if theta_full >= theta_target {
        return Ok(Calibration {
            beta: 1.0,
            theta_target,
            theta_achieved: theta_full,
            mean_spend_full,
            mean_earn,
            spend_support: support,
        });
    }
    if theta_at(BETA_MIN)? < theta_target {
        return Err(Error::Infeasible {
            reason: format!(
                "even beta = {BETA_MIN} misses the decay-rate target {theta_target}; \
                 the earning process is too weak for this account"
            ),
        });
    }

    let mut lo = BETA_MIN;
    let mut hi = 1.0;
    while hi - lo > BETA_TOL {
        let mid = 0.5 * (lo + hi);
        if theta_at(mid)? >= theta_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        beta: lo,
        theta_target,
        theta_achieved: theta_at(lo)?,
        mean_spend_full,
        mean_earn,
        spend_support: support,
    })
}

/// Everything that happened in one slot, for per-slot exports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub gains: LinkGains,
    pub power: f64,
    pub bits: f64,
    pub spend: f64,
    pub earn: f64,
    /// Credit level after this slot's flows.
    pub credit: f64,
}

/// Per-slot credit movements summed over the run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LedgerTotals {
    pub spent_by_c: f64,
    pub received_by_b: f64,
    pub forwarded_to_a: f64,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub credit_trace: QueueTrace,
    pub outage_prob: f64,
    pub constraint_satisfied: bool,
    /// Mean post-warmup bits per slot delivered to C.
    pub throughput: f64,
    /// Mean post-warmup transmit power.
    pub avg_power: f64,
    /// Log-linear fit of the credit-budget tail, when one is estimable.
    pub tail_fit: Option<TailFit>,
    /// Spending scale in effect (QoS scheme only).
    pub beta: Option<f64>,
    pub theta_target: f64,
    /// Credit income discarded against the account cap.
    pub discarded_credit: f64,
    /// Slots on which spending was cut to the available credit.
    pub spend_truncations: u64,
    pub ledger: LedgerTotals,
}

/// Runs the scenario and returns summary metrics.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunMetrics> {
    run_scenario_with(config, |_| {})
}

/// Runs the scenario, handing every slot to `on_slot` before summarizing.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    mut on_slot: impl FnMut(&SlotRecord),
) -> Result<RunMetrics> {
    config.validate()?;
    let theta_target = target_theta(config.account.c_max, config.account.c_th, config.account.delta)?
        .theta()
        .expect("finite corridor yields a finite target");

    let beta = match config.scheme {
        SchemeKind::QosDriven => Some(match config.beta_override {
            Some(beta) => beta,
            None => qos_calibrate(config)?.beta,
        }),
        _ => None,
    };
    let waterfilling = match config.scheme {
        SchemeKind::WaterFilling => {
            let mut sampler = ChannelSampler::new(
                &config.channel,
                StreamSeed::new(
                    config.seed,
                    replication_stream(config.replication, STREAM_WF_CALIBRATION),
                ),
            )?;
            let mut gains = Vec::with_capacity(CALIBRATION_SLOTS);
            let mut caps = Vec::with_capacity(CALIBRATION_SLOTS);
            for _ in 0..CALIBRATION_SLOTS {
                let g = sampler.next_gains();
                caps.push(slot_power_cap(config, &g));
                gains.push(g.ab.min(g.bc));
            }
            Some(waterfilling_allocation(
                &gains,
                &caps,
                config.power.p_avg,
                config.noise,
            )?)
        }
        _ => None,
    };

    let earn_trace = config.earn.sample_path(
        config.n_slots,
        StreamSeed::new(
            config.seed,
            replication_stream(config.replication, STREAM_EARN),
        ),
    )?;
    let mut sampler = ChannelSampler::new(
        &config.channel,
        StreamSeed::new(
            config.seed,
            replication_stream(config.replication, STREAM_CHANNEL),
        ),
    )?;

    let unit_cost = config.markup * config.price;
    let c_max = config.account.c_max;
    let c_th = config.account.c_th;
    let mut q = config.account.level;
    let mut levels = Vec::with_capacity(config.n_slots + 1);
    levels.push(q);

    let mut bits_sum = 0.0;
    let mut power_sum = 0.0;
    let mut tracked_slots = 0u64;
    let mut spent = 0.0;
    let mut forwarded_total = 0.0;
    let mut discarded = 0.0;
    let mut truncations = 0u64;

    for (slot, earn) in earn_trace.values().iter().enumerate() {
        let gains = sampler.next_gains();
        let cap_power = slot_power_cap(config, &gains);
        let power = match &waterfilling {
            Some(w) => waterfilling_power(
                w.water_level,
                gains.ab.min(gains.bc),
                config.noise,
                cap_power,
            ),
            None => cap_power,
        };
        debug_assert!(gains.a_ue * power <= config.interference_cap * (1.0 + 1e-9));
        debug_assert!(gains.b_ue * power <= config.interference_cap * (1.0 + 1e-9));
        let feasible_bits = relay_rate(gains.ab, gains.bc, power, config.noise, config.bandwidth);

        let (bits, spend, forwarded) = match config.scheme {
            SchemeKind::QosDriven => {
                let bits = beta.unwrap() * feasible_bits;
                let forwarded = config.price * bits;
                (bits, config.markup * forwarded, forwarded)
            }
            SchemeKind::WaterFilling => {
                let available_bits = if unit_cost > 0.0 {
                    q / unit_cost
                } else {
                    f64::INFINITY
                };
                let bits = feasible_bits.min(available_bits);
                if bits < feasible_bits {
                    truncations += 1;
                }
                let forwarded = config.price * bits;
                (bits, config.markup * forwarded, forwarded)
            }
            SchemeKind::AbsoluteControl => {
                // Decided in credit space so the floor at c_th is exact.
                let spend = (unit_cost * feasible_bits).min((q - c_th).max(0.0));
                let bits = if unit_cost > 0.0 {
                    spend / unit_cost
                } else {
                    feasible_bits
                };
                (bits, spend, spend / config.markup)
            }
        };

        discarded += (q + earn - spend - c_max).max(0.0);
        q = step_queue(q, *earn, spend, c_max);
        levels.push(q);
        spent += spend;
        forwarded_total += forwarded;
        if slot >= config.warmup_slots {
            bits_sum += bits;
            power_sum += power;
            tracked_slots += 1;
        }
        on_slot(&SlotRecord {
            slot,
            gains,
            power,
            bits,
            spend,
            earn: *earn,
            credit: q,
        });
    }

    let trace = QueueTrace::from_levels(
        levels,
        QueueConfig {
            c_max,
            q0: config.account.level,
            warmup_slots: config.warmup_slots,
        },
    )?;
    let check = check_credit_constraint(&trace, &config.account)?;
    let tail_fit = trace
        .inverse()
        .ok()
        .and_then(|budget| empirical_ccdf(&budget).ok())
        .and_then(|ccdf| {
            let range = ccdf.default_fit_range()?;
            fit_decay_rate(&ccdf.points, range).ok()
        });

    Ok(RunMetrics {
        credit_trace: trace,
        outage_prob: check.outage_prob,
        constraint_satisfied: check.satisfied,
        throughput: bits_sum / tracked_slots as f64,
        avg_power: power_sum / tracked_slots as f64,
        tail_fit,
        beta,
        theta_target,
        discarded_credit: discarded,
        spend_truncations: truncations,
        ledger: LedgerTotals {
            spent_by_c: spent,
            received_by_b: spent,
            forwarded_to_a: forwarded_total,
        },
    })
}

/// The documented reference parameters driving the scheme comparison.
pub fn reference_config(scheme: SchemeKind) -> ScenarioConfig {
    ScenarioConfig {
        n_slots: 10_000_000,
        warmup_slots: 100_000,
        channel: ChannelConfig {
            mean_gain_ab: 1.0,
            mean_gain_bc: 1.0,
            mean_gain_a_ue: 1.0,
            mean_gain_b_ue: 1.0,
        },
        power: PowerConfig {
            p_max: 2.0,
            p_avg: 0.9,
        },
        interference_cap: 1.0,
        bandwidth: 1.0,
        noise: 1.0,
        price: 1.9,
        markup: 1.1,
        earn: ProcessSpec::BernoulliBatch {
            batch: 2.0,
            prob: 0.5,
        },
        account: CreditAccount {
            level: 50.0,
            c_max: 100.0,
            c_th: 90.0,
            delta: 1e-3,
        },
        scheme,
        seed: 7_155_205_981,
        replication: 0,
        beta_override: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(scheme: SchemeKind) -> ScenarioConfig {
        let mut config = reference_config(scheme);
        config.n_slots = 20_000;
        config.warmup_slots = 2_000;
        config
    }

    #[test]
    fn channel_is_deterministic_and_addressable() {
        let channel = reference_config(SchemeKind::QosDriven).channel;
        let seed = StreamSeed::new(9, 0);
        let mut sampler = ChannelSampler::new(&channel, seed).unwrap();
        for slot in 0..100u64 {
            let sequential = sampler.next_gains();
            let addressed = sample_channel(&channel, slot, seed).unwrap();
            assert_eq!(sequential, addressed);
        }
    }

    #[test]
    fn channel_sample_mean_is_calibrated() {
        let channel = ChannelConfig {
            mean_gain_ab: 1.0,
            mean_gain_bc: 2.0,
            mean_gain_a_ue: 0.5,
            mean_gain_b_ue: 1.0,
        };
        let mut sampler = ChannelSampler::new(&channel, StreamSeed::new(3, 0)).unwrap();
        let n = 100_000;
        let mut sums = [0.0f64; 4];
        for _ in 0..n {
            let g = sampler.next_gains();
            sums[0] += g.ab;
            sums[1] += g.bc;
            sums[2] += g.a_ue;
            sums[3] += g.b_ue;
        }
        for (sum, mean) in sums.iter().zip([1.0, 2.0, 0.5, 1.0]) {
            let sample_mean = sum / n as f64;
            let se = mean / (n as f64).sqrt();
            assert!((sample_mean - mean).abs() < 3.0 * se, "{sample_mean} vs {mean}");
        }
    }

    #[test]
    fn zero_mean_gain_rejected() {
        let channel = ChannelConfig {
            mean_gain_ab: 0.0,
            mean_gain_bc: 1.0,
            mean_gain_a_ue: 1.0,
            mean_gain_b_ue: 1.0,
        };
        assert!(sample_channel(&channel, 0, StreamSeed::new(1, 0)).is_err());
    }

    #[test]
    fn rate_formulas() {
        assert_eq!(hop_rate(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(hop_rate(1.0, 0.0, 1.0, 1.0), 0.0);
        assert_eq!(relay_rate(3.0, 5.0, 1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn interference_power_examples() {
        assert_eq!(interference_feasible_power(1.0, 0.5, 2.0), 0.5);
        assert_eq!(interference_feasible_power(1.0, 1e9, 2.0), 2.0);
        assert!(interference_feasible_power(1e9, 0.5, 2.0) < 1e-9);
    }

    #[test]
    fn waterfilling_two_state_closed_form() {
        let wf = waterfilling_allocation(
            &[1.0, 4.0],
            &[f64::INFINITY, f64::INFINITY],
            1.0,
            1.0,
        )
        .unwrap();
        assert!((wf.water_level - 1.625).abs() < 1e-5, "{}", wf.water_level);
        assert!((wf.powers[0] - 0.625).abs() < 1e-5);
        assert!((wf.powers[1] - 1.375).abs() < 1e-5);
        assert!((wf.avg_power - 1.0).abs() <= 1e-6);
        assert!(!wf.saturated);
    }

    #[test]
    fn waterfilling_equal_gains_split_evenly() {
        let wf = waterfilling_allocation(
            &[2.0, 2.0],
            &[f64::INFINITY, f64::INFINITY],
            0.7,
            1.0,
        )
        .unwrap();
        assert!((wf.powers[0] - 0.7).abs() < 1e-5);
        assert!((wf.powers[1] - 0.7).abs() < 1e-5);
    }

    #[test]
    fn waterfilling_saturates_on_binding_caps() {
        let wf = waterfilling_allocation(&[1.0, 1.0], &[0.1, 0.3], 1.0, 1.0).unwrap();
        assert!(wf.saturated);
        assert_eq!(wf.powers, vec![0.1, 0.3]);
        assert!((wf.avg_power - 0.2).abs() < 1e-12);
    }

    #[test]
    fn waterfilling_tiny_budget_tiny_powers() {
        let wf = waterfilling_allocation(
            &[1.0, 3.0],
            &[f64::INFINITY, f64::INFINITY],
            1e-6,
            1.0,
        )
        .unwrap();
        assert!((wf.avg_power - 1e-6).abs() <= 1e-12);
        assert!(wf.powers.iter().all(|p| *p < 1e-5));
    }

    #[test]
    fn calibration_slack_when_earning_dwarfs_spending() {
        let mut config = small_config(SchemeKind::QosDriven);
        config.earn = ProcessSpec::constant(1000.0);
        let cal = qos_calibrate(&config).unwrap();
        assert_eq!(cal.beta, 1.0);
        assert!(cal.theta_achieved >= cal.theta_target);
    }

    #[test]
    fn calibration_infeasible_without_income() {
        let mut config = small_config(SchemeKind::QosDriven);
        config.earn = ProcessSpec::constant(0.0);
        assert!(matches!(
            qos_calibrate(&config),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn no_income_drains_credit_to_scheme_floor() {
        let mut wf_config = small_config(SchemeKind::WaterFilling);
        wf_config.earn = ProcessSpec::constant(0.0);
        let wf = run_scenario(&wf_config).unwrap();
        assert_eq!(wf.credit_trace.min_level(), 0.0);

        let mut abs_config = small_config(SchemeKind::AbsoluteControl);
        abs_config.earn = ProcessSpec::constant(0.0);
        abs_config.account.level = 98.0;
        let abs = run_scenario(&abs_config).unwrap();
        assert_eq!(abs.credit_trace.min_level(), abs_config.account.c_th);

        let mut qos_config = small_config(SchemeKind::QosDriven);
        qos_config.earn = ProcessSpec::constant(0.0);
        qos_config.beta_override = Some(1.0);
        let qos = run_scenario(&qos_config).unwrap();
        assert_eq!(qos.credit_trace.min_level(), 0.0);
    }

    #[test]
    fn free_relay_fills_account() {
        let mut config = small_config(SchemeKind::QosDriven);
        config.price = 0.0;
        config.beta_override = Some(1.0);
        let metrics = run_scenario(&config).unwrap();
        let levels = metrics.credit_trace.levels();
        assert!(levels.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert_eq!(levels[levels.len() - 1], config.account.c_max);
        assert!(metrics.throughput > 0.0);
        assert_eq!(metrics.ledger.spent_by_c, 0.0);
    }

    #[test]
    fn ledger_balances_for_all_schemes() {
        for scheme in [
            SchemeKind::QosDriven,
            SchemeKind::WaterFilling,
            SchemeKind::AbsoluteControl,
        ] {
            let mut config = small_config(scheme);
            config.beta_override = Some(0.8);
            let metrics = run_scenario(&config).unwrap();
            let ledger = metrics.ledger;
            assert_eq!(ledger.spent_by_c, ledger.received_by_b);
            let err = (ledger.received_by_b - config.markup * ledger.forwarded_to_a).abs();
            assert!(
                err <= 1e-9 * ledger.received_by_b.max(1.0),
                "{scheme:?}: {err}"
            );
        }
    }

    #[test]
    fn interference_cap_respected_on_every_slot() {
        let config = small_config(SchemeKind::QosDriven);
        let mut config = ScenarioConfig {
            beta_override: Some(1.0),
            ..config
        };
        config.n_slots = 5_000;
        config.warmup_slots = 100;
        let mut worst: f64 = 0.0;
        run_scenario_with(&config, |slot| {
            worst = worst
                .max(slot.gains.a_ue * slot.power)
                .max(slot.gains.b_ue * slot.power);
        })
        .unwrap();
        assert!(worst <= config.interference_cap * (1.0 + 1e-9), "{worst}");
    }

    #[test]
    fn runs_are_reproducible_and_replications_differ() {
        let mut config = small_config(SchemeKind::AbsoluteControl);
        config.n_slots = 5_000;
        config.warmup_slots = 500;
        let a = run_scenario(&config).unwrap();
        let b = run_scenario(&config).unwrap();
        assert_eq!(a.credit_trace.levels(), b.credit_trace.levels());
        assert_eq!(a.throughput, b.throughput);
        config.replication = 1;
        let c = run_scenario(&config).unwrap();
        assert_ne!(a.credit_trace.levels(), c.credit_trace.levels());
    }

    #[test]
    fn waterfilling_run_tracks_power_budget() {
        let mut config = small_config(SchemeKind::WaterFilling);
        config.n_slots = 200_000;
        config.warmup_slots = 1_000;
        let metrics = run_scenario(&config).unwrap();
        assert!(
            (metrics.avg_power - config.power.p_avg).abs() <= 0.01 * config.power.p_avg,
            "{}",
            metrics.avg_power
        );
    }

    #[test]
    fn config_validation_names_fields() {
        let mut config = small_config(SchemeKind::QosDriven);
        config.markup = 0.5;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("markup"), "{err}");
        let mut config = small_config(SchemeKind::QosDriven);
        config.power.p_avg = 5.0;
        assert!(config.validate().is_err());
        let mut config = small_config(SchemeKind::QosDriven);
        config.n_slots = config.warmup_slots;
        assert!(config.validate().is_err());
        let mut config = small_config(SchemeKind::QosDriven);
        config.beta_override = Some(1.5);
        assert!(config.validate().is_err());
    }
}
