//! Capped slotted queues: the Lindley recursion, its inverse (budget) view,
//! and an exact finite-chain oracle for integer specs.

use crate::error::{Error, Result};
use crate::processes::{ProcessSpec, Trace};

/// Default number of initial slots excluded from statistics.
pub const DEFAULT_WARMUP_SLOTS: usize = 100_000;
/// State-space ceiling of the exact oracle; it is a desk-scale tool.
pub const DTMC_MAX_CAP: u32 = 10_000;
/// Successive-iterate L1 tolerance of the oracle's power iteration.
pub const DTMC_L1_TOL: f64 = 1e-12;
/// Iteration budget of the oracle's power iteration.
pub const DTMC_MAX_ITERS: usize = 2_000_000;

/// Initial level, cap and warmup policy of a queue simulation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QueueConfig {
    /// Level cap; `f64::INFINITY` for an uncapped queue.
    pub c_max: f64,
    /// Initial level.
    pub q0: f64,
    /// Leading slots excluded from statistics views.
    pub warmup_slots: usize,
}

impl QueueConfig {
    /// Uncapped queue starting empty.
    pub fn uncapped() -> Self {
        QueueConfig {
            c_max: f64::INFINITY,
            q0: 0.0,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
        }
    }

    /// Capped queue starting half full, the default for credit accounts.
    pub fn capped(c_max: f64) -> Self {
        QueueConfig {
            c_max,
            q0: c_max / 2.0,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
        }
    }

    pub fn with_q0(mut self, q0: f64) -> Self {
        self.q0 = q0;
        self
    }

    pub fn with_warmup(mut self, warmup_slots: usize) -> Self {
        self.warmup_slots = warmup_slots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_max > 0.0) || self.c_max.is_nan() {
            return Err(Error::validation("queue.c_max", "must be > 0 (may be inf)"));
        }
        if !(self.q0 >= 0.0 && self.q0 <= self.c_max) || self.q0.is_nan() || self.q0.is_infinite()
        {
            return Err(Error::validation(
                "queue.q0",
                "must be finite with 0 <= q0 <= c_max",
            ));
        }
        Ok(())
    }
}

/// Simulated level path plus the config that produced it.
#[derive(Debug, Clone)]
pub struct QueueTrace {
    levels: Vec<f64>,
    config: QueueConfig,
}

impl QueueTrace {
    /// Wraps an externally produced level path (used by the scenario engine,
    /// whose spending rule is level-dependent and cannot be two free traces).
    pub fn from_levels(levels: Vec<f64>, config: QueueConfig) -> Result<Self> {
        config.validate()?;
        if levels.len() < config.warmup_slots + 2 {
            return Err(Error::validation(
                "levels",
                "need at least warmup_slots + 2 level samples",
            ));
        }
        Ok(QueueTrace { levels, config })
    }

    /// Every level, including warmup: `levels()[t]` is Q[t].
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Levels with the warmup prefix removed; all statistics use this view.
    pub fn post_warmup(&self) -> &[f64] {
        &self.levels[self.config.warmup_slots.min(self.levels.len() - 1)..]
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    /// Minimum post-warmup level.
    pub fn min_level(&self) -> f64 {
        self.post_warmup().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Fraction of post-warmup slots strictly below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let view = self.post_warmup();
        view.iter().filter(|q| **q < threshold).count() as f64 / view.len() as f64
    }

    /// The same path seen through the inverse (budget) transform
    /// `max(c_max - q, 0)`; requires a finite cap.
    pub fn inverse(&self) -> Result<QueueTrace> {
        if !self.config.c_max.is_finite() {
            return Err(Error::validation(
                "queue.c_max",
                "inverse view requires a finite cap",
            ));
        }
        let levels = self
            .levels
            .iter()
            .map(|q| inverse_transform(*q, self.config.c_max))
            .collect::<Result<Vec<f64>>>()?;
        let config = QueueConfig {
            c_max: self.config.c_max,
            q0: inverse_transform(self.config.q0, self.config.c_max)?,
            warmup_slots: self.config.warmup_slots,
        };
        Ok(QueueTrace { levels, config })
    }

    /// Post-warmup histogram over integer levels (nearest-integer binning),
    /// as a dense count vector indexed by level.
    pub fn integer_histogram(&self) -> Vec<u64> {
        let view = self.post_warmup();
        let max = view.iter().cloned().fold(0.0f64, f64::max).round() as usize;
        let mut counts = vec![0u64; max + 1];
        for q in view {
            counts[q.round() as usize] += 1;
        }
        counts
    }
}

/// One Lindley step with cap: `min(c_max, max(q + a - r, 0))`. Arrivals
/// beyond the cap are discarded.
pub fn step_queue(q: f64, a: f64, r: f64, c_max: f64) -> f64 {
    (q + a - r).max(0.0).min(c_max)
}

/// Runs the capped recursion over two sampled traces. `levels[t]` is the
/// state before slot `t`'s flows; the result has `n + 1` levels.
pub fn simulate_queue(arrival: &Trace, departure: &Trace, config: &QueueConfig) -> Result<QueueTrace> {
    config.validate()?;
    if arrival.len() != departure.len() {
        return Err(Error::validation(
            "traces",
            format!(
                "arrival and departure lengths differ: {} vs {}",
                arrival.len(),
                departure.len()
            ),
        ));
    }
    if arrival.len() < config.warmup_slots + 1 {
        return Err(Error::validation(
            "traces",
            format!(
                "need at least warmup_slots + 1 = {} slots, got {}",
                config.warmup_slots + 1,
                arrival.len()
            ),
        ));
    }
    let mut levels = Vec::with_capacity(arrival.len() + 1);
    let mut q = config.q0;
    levels.push(q);
    for (a, r) in arrival.values().iter().zip(departure.values()) {
        q = step_queue(q, *a, *r, config.c_max);
        levels.push(q);
    }
    Ok(QueueTrace {
        levels,
        config: *config,
    })
}

/// Budget view of a level: `max(c_max - q, 0)`.
pub fn inverse_transform(q: f64, c_max: f64) -> Result<f64> {
    if !c_max.is_finite() {
        return Err(Error::validation(
            "c_max",
            "inverse view requires a finite cap",
        ));
    }
    Ok((c_max - q).max(0.0))
}

/// Total-variation distance between two distributions given as dense
/// vectors over the same index space (shorter one is zero-padded).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let mut acc = 0.0;
    for i in 0..n {
        let a = p.get(i).copied().unwrap_or(0.0);
        let b = q.get(i).copied().unwrap_or(0.0);
        acc += (a - b).abs();
    }
    acc / 2.0
}

/// Exact stationary distribution of the capped integer queue driven by two
/// i.i.d. bounded integer-valued specs, over levels `0..=c_max`.
///
/// This is the verification oracle for simulated histograms and tail slopes;
/// it is exact but deliberately desk-scale (`c_max <= 10_000`).
pub fn dtmc_stationary(
    arrival: &ProcessSpec,
    departure: &ProcessSpec,
    c_max: u32,
) -> Result<Vec<f64>> {
    if c_max == 0 || c_max > DTMC_MAX_CAP {
        return Err(Error::validation(
            "c_max",
            format!("oracle cap must lie in 1..={DTMC_MAX_CAP}"),
        ));
    }
    let a_pmf = integer_point_masses(arrival, "arrival")?;
    let r_pmf = integer_point_masses(departure, "departure")?;

    if a_pmf.len() == 1 && r_pmf.len() == 1 && a_pmf[0].0 == r_pmf[0].0 {
        return Err(Error::Unsupported {
            op: "dtmc_stationary".into(),
            reason: "deterministic zero-drift queue has a non-unique stationary distribution"
                .into(),
        });
    }

    let n = c_max as usize + 1;
    // Sparse rows of the one-step kernel: from q, mass moves by a - r, clipped.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for q in 0..n as i64 {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(a_pmf.len() * r_pmf.len());
        for (a, pa) in &a_pmf {
            for (r, pr) in &r_pmf {
                let next = (q + a - r).clamp(0, c_max as i64) as usize;
                let mass = pa * pr;
                match row.iter_mut().find(|(j, _)| *j == next) {
                    Some((_, m)) => *m += mass,
                    None => row.push((next, mass)),
                }
            }
        }
        rows.push(row);
    }

    // Lazy power iteration (I + P)/2 from uniform: same stationary law,
    // immune to periodic kernels. Convergence: successive L1 plus a relative
    // criterion so deep-tail entries (needed for log-slope checks) settle.
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    for _iter in 0..DTMC_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (q, row) in rows.iter().enumerate() {
            let mass = pi[q];
            if mass == 0.0 {
                continue;
            }
            let half = 0.5 * mass;
            next[q] += half;
            for (j, p) in row {
                next[*j] += half * p;
            }
        }
        let mut l1 = 0.0;
        let mut rel = 0.0f64;
        for i in 0..n {
            l1 += (next[i] - pi[i]).abs();
            if next[i] > 1e-280 {
                rel = rel.max((next[i] - pi[i]).abs() / next[i]);
            }
        }
        std::mem::swap(&mut pi, &mut next);
        if l1 <= DTMC_L1_TOL && rel <= 1e-9 {
            let total: f64 = pi.iter().sum();
            debug_assert!((total - 1.0).abs() < 1e-10);
            pi.iter_mut().for_each(|p| *p /= total);
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence {
        op: "dtmc stationary power iteration".into(),
        iterations: DTMC_MAX_ITERS,
    })
}

/// CCDF `Pr{level > q}` of a stationary vector, for tail-slope checks.
pub fn stationary_ccdf(pi: &[f64]) -> Vec<f64> {
    let mut ccdf = vec![0.0; pi.len()];
    let mut acc = 0.0;
    for q in (0..pi.len()).rev() {
        ccdf[q] = acc; // strictly greater than q
        acc += pi[q];
    }
    ccdf
}

fn integer_point_masses(spec: &ProcessSpec, which: &str) -> Result<Vec<(i64, f64)>> {
    spec.validate()?;
    let masses = spec.point_masses().ok_or_else(|| Error::Unsupported {
        op: "dtmc_stationary".into(),
        reason: format!("{which} spec must be i.i.d. with bounded support"),
    })?;
    masses
        .into_iter()
        .map(|(v, p)| {
            let rounded = v.round();
            if (v - rounded).abs() > 1e-9 {
                Err(Error::Unsupported {
                    op: "dtmc_stationary".into(),
                    reason: format!("{which} spec takes non-integer value {v}"),
                })
            } else {
                Ok((rounded as i64, p))
            }
        })
        .collect()
}
