//! Per-slot stochastic rate processes.
//!
//! A [`ProcessSpec`] describes the amount of work (bits, credit, service)
//! produced in one slot. Specs are the shared currency of the crate: queue
//! simulations consume their sample paths, tail analysis consumes their
//! log moment generating function.
//!
//! # Example
//! ```
//! use sociq::processes::ProcessSpec;
//! let spec = ProcessSpec::BernoulliBatch { batch: 4.0, prob: 0.5 };
//! assert!((spec.mean_rate().unwrap() - 2.0).abs() < 1e-12);
//! let lm = spec.log_mgf(0.5).unwrap();
//! assert!((lm - (0.5 * (1.0 + (2.0f64).exp())).ln()).abs() < 1e-12);
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamSeed;

/// Threshold below which log-MGF ratios switch to the series expansion.
pub const THETA_TAYLOR_SEAM: f64 = 1e-6;
/// Relative tolerance of the spectral-radius power iteration.
pub const SPECTRAL_TOL: f64 = 1e-12;
/// Iteration budget of the spectral-radius power iteration.
pub const SPECTRAL_MAX_ITERS: usize = 100_000;
/// Tolerance on row sums of a transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Stationary per-slot rate process, identified by its distribution family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    /// Deterministic rate every slot.
    Constant { rate: f64 },
    /// `batch` units with probability `prob`, otherwise zero.
    BernoulliBatch { batch: f64, prob: f64 },
    /// Equiprobable draw from a finite support.
    DiscreteUniform { support: Vec<f64> },
    /// Poisson-distributed count with the given mean.
    Poisson { mean: f64 },
    /// Rate modulated by a finite Markov chain: slot rate is
    /// `rate_per_state[state]`, and the state evolves by `transition`.
    MarkovModulated {
        transition: Vec<Vec<f64>>,
        rate_per_state: Vec<f64>,
    },
}

/// A sampled path together with the spec and seed that generated it, so any
/// trace can be reproduced or extended.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<f64>,
    spec: ProcessSpec,
    seed: StreamSeed,
}

impl Trace {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl ProcessSpec {
    /// Convenience constructor for a deterministic rate.
    pub fn constant(rate: f64) -> Self {
        ProcessSpec::Constant { rate }
    }

    /// Discretizes a stationary AR(1) recursion
    /// `x[t+1] = (1-phi)*mean + phi*x[t] + innovation` onto a finite Markov
    /// grid spanning `mean` plus/minus four stationary standard deviations,
    /// using interval-matched Gaussian transition masses. Grid rates are
    /// clamped at zero to keep rates nonnegative.
    pub fn ar1(mean: f64, phi: f64, innovation_std: f64, states: usize) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::validation("ar1.mean", "must be finite"));
        }
        if !(phi.is_finite() && phi.abs() < 1.0) {
            return Err(Error::validation("ar1.phi", "must satisfy |phi| < 1"));
        }
        if !(innovation_std.is_finite() && innovation_std > 0.0) {
            return Err(Error::validation("ar1.innovation_std", "must be > 0"));
        }
        if states < 2 {
            return Err(Error::validation("ar1.states", "needs at least 2 states"));
        }
        let stationary_std = innovation_std / (1.0 - phi * phi).sqrt();
        let lo = mean - 4.0 * stationary_std;
        let step = 8.0 * stationary_std / (states - 1) as f64;
        let grid: Vec<f64> = (0..states).map(|k| lo + step * k as f64).collect();

        let mut transition = vec![vec![0.0; states]; states];
        for (k, row) in transition.iter_mut().enumerate() {
            let center = (1.0 - phi) * mean + phi * grid[k];
            for (j, p) in row.iter_mut().enumerate() {
                let upper = if j == states - 1 {
                    1.0
                } else {
                    normal_cdf((grid[j] + step / 2.0 - center) / innovation_std)
                };
                let lower = if j == 0 {
                    0.0
                } else {
                    normal_cdf((grid[j] - step / 2.0 - center) / innovation_std)
                };
                *p = (upper - lower).max(0.0);
            }
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        let rate_per_state: Vec<f64> = grid.iter().map(|x| x.max(0.0)).collect();
        Ok(ProcessSpec::MarkovModulated {
            transition,
            rate_per_state,
        })
    }

    /// Checks distribution shape: finite parameters, probabilities in [0, 1],
    /// nonnegative rates, stochastic transition rows. Does not require
    /// irreducibility; see [`ProcessSpec::validate_analytic`].
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::Constant { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::validation("constant.rate", "must be finite and >= 0"));
                }
            }
            ProcessSpec::BernoulliBatch { batch, prob } => {
                if !(batch.is_finite() && *batch >= 0.0) {
                    return Err(Error::validation(
                        "bernoulli_batch.batch",
                        "must be finite and >= 0",
                    ));
                }
                if !(prob.is_finite() && (0.0..=1.0).contains(prob)) {
                    return Err(Error::validation(
                        "bernoulli_batch.prob",
                        "must lie in [0, 1]",
                    ));
                }
            }
            ProcessSpec::DiscreteUniform { support } => {
                if support.is_empty() {
                    return Err(Error::validation(
                        "discrete_uniform.support",
                        "must be non-empty",
                    ));
                }
                for (i, x) in support.iter().enumerate() {
                    if !(x.is_finite() && *x >= 0.0) {
                        return Err(Error::validation(
                            format!("discrete_uniform.support[{i}]"),
                            "must be finite and >= 0",
                        ));
                    }
                }
            }
            ProcessSpec::Poisson { mean } => {
                if !(mean.is_finite() && *mean >= 0.0) {
                    return Err(Error::validation("poisson.mean", "must be finite and >= 0"));
                }
            }
            ProcessSpec::MarkovModulated {
                transition,
                rate_per_state,
            } => {
                let n = rate_per_state.len();
                if n == 0 {
                    return Err(Error::validation(
                        "markov_modulated.rate_per_state",
                        "must be non-empty",
                    ));
                }
                for (i, r) in rate_per_state.iter().enumerate() {
                    if !(r.is_finite() && *r >= 0.0) {
                        return Err(Error::validation(
                            format!("markov_modulated.rate_per_state[{i}]"),
                            "must be finite and >= 0",
                        ));
                    }
                }
                if transition.len() != n {
                    return Err(Error::validation(
                        "markov_modulated.transition",
                        format!("must be {n}x{n} to match rate_per_state"),
                    ));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != n {
                        return Err(Error::validation(
                            format!("markov_modulated.transition[{i}]"),
                            format!("row must have {n} entries"),
                        ));
                    }
                    let mut sum = 0.0;
                    for (j, p) in row.iter().enumerate() {
                        if !(p.is_finite() && (0.0..=1.0).contains(p)) {
                            return Err(Error::validation(
                                format!("markov_modulated.transition[{i}][{j}]"),
                                "must lie in [0, 1]",
                            ));
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(Error::validation(
                            format!("markov_modulated.transition[{i}]"),
                            format!("row sums to {sum}, expected 1"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Shape validation plus the structural requirements of the analytic
    /// operations: a MarkovModulated chain must be irreducible so that its
    /// stationary law and Perron root are unique.
    pub fn validate_analytic(&self) -> Result<()> {
        self.validate()?;
        if let ProcessSpec::MarkovModulated { transition, .. } = self {
            if !is_irreducible(transition) {
                return Err(Error::validation(
                    "markov_modulated.transition",
                    "chain is reducible; analytic operations need an irreducible chain",
                ));
            }
        }
        Ok(())
    }

    /// Long-run mean rate per slot.
    pub fn mean_rate(&self) -> Result<f64> {
        self.validate_analytic()?;
        Ok(match self {
            ProcessSpec::Constant { rate } => *rate,
            ProcessSpec::BernoulliBatch { batch, prob } => batch * prob,
            ProcessSpec::DiscreteUniform { support } => {
                support.iter().sum::<f64>() / support.len() as f64
            }
            ProcessSpec::Poisson { mean } => *mean,
            ProcessSpec::MarkovModulated {
                transition,
                rate_per_state,
            } => {
                let pi = stationary_distribution(transition)?;
                pi.iter().zip(rate_per_state).map(|(p, r)| p * r).sum()
            }
        })
    }

    /// Asymptotic per-slot variance: `lim Var(S_n)/n` of the partial sums.
    /// Equal to the marginal variance for i.i.d. kinds; for MarkovModulated it
    /// includes autocovariance through the fundamental matrix.
    pub fn asymptotic_variance(&self) -> Result<f64> {
        self.validate_analytic()?;
        Ok(match self {
            ProcessSpec::Constant { .. } => 0.0,
            ProcessSpec::BernoulliBatch { batch, prob } => batch * batch * prob * (1.0 - prob),
            ProcessSpec::DiscreteUniform { support } => {
                let n = support.len() as f64;
                let m = support.iter().sum::<f64>() / n;
                support.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
            }
            ProcessSpec::Poisson { mean } => *mean,
            ProcessSpec::MarkovModulated {
                transition,
                rate_per_state,
            } => markov_asymptotic_variance(transition, rate_per_state)?,
        })
    }

    /// Log moment generating function of the per-slot rate, `ln E[e^{theta X}]`
    /// for i.i.d. kinds and the asymptotic per-slot limit (log Perron root of
    /// the weighted transition matrix) for MarkovModulated.
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        self.validate_analytic()?;
        if !theta.is_finite() || theta == 0.0 {
            return Err(Error::validation("theta", "must be finite and nonzero"));
        }
        Ok(match self {
            ProcessSpec::Constant { rate } => theta * rate,
            ProcessSpec::BernoulliBatch { batch, prob } => {
                // ln((1-p) + p e^{theta b}) via max-shifted log-sum-exp.
                log_sum_exp(&[(1.0 - prob).ln(), prob.ln() + theta * batch])
            }
            ProcessSpec::DiscreteUniform { support } => {
                let terms: Vec<f64> = support.iter().map(|x| theta * x).collect();
                log_sum_exp(&terms) - (support.len() as f64).ln()
            }
            ProcessSpec::Poisson { mean } => mean * theta.exp_m1(),
            ProcessSpec::MarkovModulated {
                transition,
                rate_per_state,
            } => {
                let n = rate_per_state.len();
                let mut log_entries = vec![vec![f64::NEG_INFINITY; n]; n];
                for i in 0..n {
                    for j in 0..n {
                        if transition[i][j] > 0.0 {
                            log_entries[i][j] = transition[i][j].ln() + theta * rate_per_state[j];
                        }
                    }
                }
                log_spectral_radius(&log_entries)?
            }
        })
    }

    /// `log_mgf(theta) / theta`, guarded near zero: for `|theta| < 1e-6` the
    /// ratio is evaluated by its series `mean + theta * variance / 2`, which
    /// avoids the catastrophic cancellation of the direct quotient.
    pub fn log_mgf_rate(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::validation("theta", "must be finite"));
        }
        if theta.abs() < THETA_TAYLOR_SEAM {
            let mean = self.mean_rate()?;
            let var = self.asymptotic_variance()?;
            Ok(mean + theta * var / 2.0)
        } else {
            Ok(self.log_mgf(theta)? / theta)
        }
    }

    /// Largest rate the process can emit in one slot, when the support is
    /// bounded. `None` for Poisson (unbounded support).
    pub fn max_rate(&self) -> Option<f64> {
        match self {
            ProcessSpec::Constant { rate } => Some(*rate),
            ProcessSpec::BernoulliBatch { batch, prob } => {
                Some(if *prob > 0.0 { *batch } else { 0.0 })
            }
            ProcessSpec::DiscreteUniform { support } => {
                support.iter().cloned().reduce(f64::max)
            }
            ProcessSpec::Poisson { mean } => {
                if *mean == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            ProcessSpec::MarkovModulated { rate_per_state, .. } => {
                rate_per_state.iter().cloned().reduce(f64::max)
            }
        }
    }

    /// Smallest per-slot rate, when the support is bounded below usefully.
    pub fn min_rate(&self) -> f64 {
        match self {
            ProcessSpec::Constant { rate } => *rate,
            ProcessSpec::BernoulliBatch { batch, prob } => {
                if *prob >= 1.0 {
                    *batch
                } else {
                    0.0
                }
            }
            ProcessSpec::DiscreteUniform { support } => {
                support.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            ProcessSpec::Poisson { .. } => 0.0,
            ProcessSpec::MarkovModulated { rate_per_state, .. } => {
                rate_per_state.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// True when the process emits a single value with probability one.
    pub fn is_degenerate(&self) -> bool {
        match self {
            ProcessSpec::Constant { .. } => true,
            ProcessSpec::BernoulliBatch { batch, prob } => {
                *prob == 0.0 || *prob == 1.0 || *batch == 0.0
            }
            ProcessSpec::DiscreteUniform { support } => {
                support.windows(2).all(|w| w[0] == w[1])
            }
            ProcessSpec::Poisson { mean } => *mean == 0.0,
            ProcessSpec::MarkovModulated { rate_per_state, .. } => {
                rate_per_state.windows(2).all(|w| w[0] == w[1])
            }
        }
    }

    /// Point masses `(value, probability)` for i.i.d. bounded kinds, merged
    /// over duplicate values. `None` for Poisson and MarkovModulated.
    pub fn point_masses(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            ProcessSpec::Constant { rate } => Some(vec![(*rate, 1.0)]),
            ProcessSpec::BernoulliBatch { batch, prob } => {
                if *prob == 0.0 {
                    Some(vec![(0.0, 1.0)])
                } else if *prob == 1.0 {
                    Some(vec![(*batch, 1.0)])
                } else {
                    Some(vec![(0.0, 1.0 - prob), (*batch, *prob)])
                }
            }
            ProcessSpec::DiscreteUniform { support } => {
                let p = 1.0 / support.len() as f64;
                let mut masses: Vec<(f64, f64)> = Vec::new();
                for &x in support {
                    match masses.iter_mut().find(|(v, _)| *v == x) {
                        Some((_, q)) => *q += p,
                        None => masses.push((x, p)),
                    }
                }
                Some(masses)
            }
            ProcessSpec::Poisson { .. } | ProcessSpec::MarkovModulated { .. } => None,
        }
    }

    /// Samples `n_slots` per-slot values. Deterministic in `(spec, seed)`:
    /// the same pair always reproduces the same path.
    pub fn sample_path(&self, n_slots: usize, seed: impl Into<StreamSeed>) -> Result<Trace> {
        self.validate()?;
        if n_slots == 0 {
            return Err(Error::validation("n_slots", "must be >= 1"));
        }
        let seed = seed.into();
        let mut rng = seed.rng();
        let values = match self {
            ProcessSpec::Constant { rate } => vec![*rate; n_slots],
            ProcessSpec::BernoulliBatch { batch, prob } => {
                use rand::Rng;
                (0..n_slots)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        if u < *prob {
                            *batch
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            ProcessSpec::DiscreteUniform { support } => {
                use rand::Rng;
                let n = support.len();
                (0..n_slots)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        support[((u * n as f64) as usize).min(n - 1)]
                    })
                    .collect()
            }
            ProcessSpec::Poisson { mean } => {
                if *mean == 0.0 {
                    vec![0.0; n_slots]
                } else {
                    use rand::Rng;
                    let dist = rand_distr::Poisson::new(*mean).map_err(|e| {
                        Error::validation("poisson.mean", format!("rejected by sampler: {e}"))
                    })?;
                    (0..n_slots).map(|_| rng.sample(dist)).collect()
                }
            }
            ProcessSpec::MarkovModulated {
                transition,
                rate_per_state,
            } => {
                use rand::Rng;
                let mut state = 0usize;
                let mut values = Vec::with_capacity(n_slots);
                for _ in 0..n_slots {
                    values.push(rate_per_state[state]);
                    let u: f64 = rng.gen();
                    let row = &transition[state];
                    let mut acc = 0.0;
                    let mut next = row.len() - 1;
                    for (j, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            next = j;
                            break;
                        }
                    }
                    state = next;
                }
                values
            }
        };
        Ok(Trace {
            values,
            spec: self.clone(),
            seed,
        })
    }
}

/// Max-shifted log-sum-exp; `-inf` terms are ignored, all `-inf` gives `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = terms
        .iter()
        .filter(|t| t.is_finite() || **t == f64::NEG_INFINITY)
        .map(|t| (t - m).exp())
        .sum();
    m + sum.ln()
}

/// Strong connectivity of the positive-entry digraph, by forward and backward
/// reachability from state 0.
fn is_irreducible(transition: &[Vec<f64>]) -> bool {
    let n = transition.len();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let edge = if forward {
                    transition[i][j]
                } else {
                    transition[j][i]
                };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

/// Stationary distribution of an irreducible stochastic matrix by direct
/// linear solve of `pi P = pi` with the normalization row.
pub(crate) fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = transition.len();
    // Rows of (P^T - I), with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| Error::NonConvergence {
        op: "stationary distribution solve".into(),
        iterations: 1,
    })?;
    Ok(pi.iter().map(|p| p.max(0.0)).collect())
}

/// Asymptotic variance of the modulated rate via the fundamental matrix:
/// `sigma^2 = (pi o c)^T (2Z - I) c` with `c` the centered rates and
/// `Z = (I - P + 1 pi^T)^{-1}`.
fn markov_asymptotic_variance(transition: &[Vec<f64>], rates: &[f64]) -> Result<f64> {
    let n = rates.len();
    let pi = stationary_distribution(transition)?;
    let mean: f64 = pi.iter().zip(rates).map(|(p, r)| p * r).sum();
    let c: Vec<f64> = rates.iter().map(|r| r - mean).collect();

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            a[(i, j)] = id - transition[i][j] + pi[j];
        }
    }
    let b = DVector::from_column_slice(&c);
    let zc = a.lu().solve(&b).ok_or_else(|| Error::NonConvergence {
        op: "fundamental matrix solve".into(),
        iterations: 1,
    })?;
    let mut var = 0.0;
    for i in 0..n {
        var += pi[i] * c[i] * (2.0 * zc[i] - c[i]);
    }
    // Clamp tiny negative rounding residue for near-deterministic chains.
    Ok(var.max(0.0))
}

/// Iterations before a diagonal shift is engaged to break periodicity.
const SPECTRAL_SHIFT_AFTER: usize = 200;

/// Log of the spectral radius of a nonnegative irreducible matrix given by
/// the logs of its entries (`-inf` encodes zero).
///
/// Power iteration runs entirely in log space (log-sum-exp matvec) so extreme
/// weightings never overflow; the Collatz-Wielandt ratio bracket is the
/// convergence certificate. Periodic chains make the plain iteration cycle,
/// so if the bracket has not closed after a burn-in, the matrix is shifted by
/// `alpha I` with alpha at half the bracketed radius estimate; the shift moves
/// the radius by exactly alpha (same Perron vector) and is removed at the end.
/// The bracket width criterion is relative tolerance 1e-12 on the radius
/// where that is representable, degrading to relative tolerance on its log
/// when the log itself is so large that f64 spacing cannot express 1e-12.
pub(crate) fn log_spectral_radius(log_entries: &[Vec<f64>]) -> Result<f64> {
    let n = log_entries.len();
    debug_assert!(log_entries.iter().all(|r| r.len() == n));

    if log_entries
        .iter()
        .any(|row| log_sum_exp(row) == f64::NEG_INFINITY)
    {
        return Err(Error::validation(
            "transition",
            "a row of the weighted matrix is entirely zero",
        ));
    }

    let mut log_alpha = f64::NEG_INFINITY;
    let mut lx = vec![0.0f64; n];
    let mut ly = vec![0.0f64; n];
    let mut row_buf = vec![0.0f64; n + 1];
    // Every iteration brackets the (shifted) log-radius in [lo, hi]; the
    // intersection over iterations is the sharpest estimate seen so far.
    let mut best_lo = f64::NEG_INFINITY;
    let mut best_hi = f64::INFINITY;
    for iter in 1..=SPECTRAL_MAX_ITERS {
        for i in 0..n {
            let mut k = 0;
            for j in 0..n {
                let term = log_entries[i][j] + lx[j];
                if term > f64::NEG_INFINITY {
                    row_buf[k] = term;
                    k += 1;
                }
            }
            if log_alpha > f64::NEG_INFINITY {
                row_buf[k] = log_alpha + lx[i];
                k += 1;
            }
            ly[i] = log_sum_exp(&row_buf[..k]);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let d = ly[i] - lx[i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        best_lo = best_lo.max(lo);
        best_hi = best_hi.min(hi);
        let mid = 0.5 * (lo + hi);
        if hi - lo <= SPECTRAL_TOL * mid.abs().max(1.0) {
            // Remove the diagonal shift: ln(rho - alpha) from ln rho.
            let ratio = (log_alpha - mid).exp();
            return Ok(mid + (-ratio).ln_1p());
        }
        if iter == SPECTRAL_SHIFT_AFTER && log_alpha == f64::NEG_INFINITY {
            log_alpha = 0.5 * (best_lo + best_hi) + 0.5f64.ln();
            best_lo = f64::NEG_INFINITY;
            best_hi = f64::INFINITY;
        }
        // Renormalize so the iterate stays O(1) in log space.
        let m = ly.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            lx[i] = ly[i] - m;
        }
    }
    Err(Error::NonConvergence {
        op: "spectral radius power iteration".into(),
        iterations: SPECTRAL_MAX_ITERS,
    })
}

/// Standard normal CDF via the Abramowitz-Stegun erfc polynomial
/// (absolute error below 1.5e-7, ample for building transition masses).
fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc_approx(-z / std::f64::consts::SQRT_2)
}

fn erfc_approx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_approx(-x);
    }
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(batch: f64, prob: f64) -> ProcessSpec {
        ProcessSpec::BernoulliBatch { batch, prob }
    }

    #[test]
    fn constant_path_is_constant() {
        let t = ProcessSpec::constant(2.5).sample_path(100, 1).unwrap();
        assert!(t.values().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn absorbing_start_state_emits_its_rate_forever() {
        let spec = ProcessSpec::MarkovModulated {
            transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            rate_per_state: vec![3.0, 7.0],
        };
        let t = spec.sample_path(200, 9).unwrap();
        assert!(t.values().iter().all(|v| *v == 3.0));
        // The identity chain is reducible: sampling works, analytics refuse.
        assert!(spec.mean_rate().is_err());
    }

    #[test]
    fn sample_path_is_reproducible() {
        let spec = bb(2.0, 0.4);
        let a = spec.sample_path(500, StreamSeed::new(5, 2)).unwrap();
        let b = spec.sample_path(500, StreamSeed::new(5, 2)).unwrap();
        assert_eq!(a.values(), b.values());
        let c = spec.sample_path(500, StreamSeed::new(5, 3)).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn zero_slots_rejected() {
        assert!(matches!(
            ProcessSpec::constant(1.0).sample_path(0, 1),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn log_mgf_closed_forms() {
        // ln(0.5 (1 + e^2)), frozen from a 40-digit evaluation.
        let v = bb(4.0, 0.5).log_mgf(0.5).unwrap();
        assert!((v - 1.433780830483027).abs() < 1e-12);

        let c = ProcessSpec::constant(3.0).log_mgf(2.0).unwrap();
        assert!((c - 6.0).abs() < 1e-12);

        let p = ProcessSpec::Poisson { mean: 2.0 }.log_mgf(1.0).unwrap();
        assert!((p - 2.0 * 1.0f64.exp_m1()).abs() < 1e-12);
    }

    #[test]
    fn log_mgf_rejects_zero_theta() {
        assert!(bb(1.0, 0.5).log_mgf(0.0).is_err());
        assert!(bb(1.0, 0.5).log_mgf(f64::NAN).is_err());
    }

    #[test]
    fn log_mgf_survives_extreme_theta() {
        // Max-shifted evaluation keeps huge exponents finite where the naive
        // sum would overflow.
        let v = bb(4.0, 0.5).log_mgf(500.0).unwrap();
        assert!((v - (2000.0 + 0.5f64.ln())).abs() < 1e-9);
        let w = ProcessSpec::DiscreteUniform {
            support: vec![1.0, 3.0],
        }
        .log_mgf(-800.0)
        .unwrap();
        assert!((w - (-800.0 + (0.5f64).ln())).abs() < 1e-6);
    }

    #[test]
    fn markov_fully_mixing_matches_iid() {
        // Rows equal to the stationary law make the modulated chain i.i.d.
        let spec = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            rate_per_state: vec![1.0, 3.0],
        };
        let iid = ProcessSpec::DiscreteUniform {
            support: vec![1.0, 3.0],
        };
        for theta in [-2.0, -0.5, 0.3, 1.0, 4.0] {
            let a = spec.log_mgf(theta).unwrap();
            let b = iid.log_mgf(theta).unwrap();
            assert!((a - b).abs() < 1e-10, "theta={theta}: {a} vs {b}");
        }
    }

    #[test]
    fn markov_periodic_chain_converges() {
        // A deterministic flip chain is periodic; the diagonal shift must
        // still drive the iteration home. Exact radius: geometric mean.
        let spec = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            rate_per_state: vec![0.0, 10.0],
        };
        for theta in [0.7, -1.3, 300.0] {
            let v = spec.log_mgf(theta).unwrap();
            assert!(
                (v - 5.0 * theta).abs() < 1e-8 * (5.0f64 * theta).abs().max(1.0),
                "theta={theta}: {v}"
            );
        }
    }

    #[test]
    fn mean_rate_values() {
        assert_eq!(bb(4.0, 0.5).mean_rate().unwrap(), 2.0);
        assert_eq!(
            ProcessSpec::DiscreteUniform {
                support: vec![1.0, 2.0, 3.0]
            }
            .mean_rate()
            .unwrap(),
            2.0
        );
        let mm = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            rate_per_state: vec![0.0, 2.0],
        };
        assert!((mm.mean_rate().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_mgf_rate_limits_to_mean() {
        let specs = vec![
            bb(2.0, 0.3),
            ProcessSpec::DiscreteUniform {
                support: vec![0.0, 1.0, 5.0],
            },
            ProcessSpec::Poisson { mean: 1.7 },
            ProcessSpec::MarkovModulated {
                transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                rate_per_state: vec![0.5, 4.0],
            },
        ];
        for spec in specs {
            let mean = spec.mean_rate().unwrap();
            let near = spec.log_mgf_rate(1e-8).unwrap();
            assert!((near - mean).abs() < 1e-6, "{spec:?}: {near} vs {mean}");
            let near_neg = spec.log_mgf_rate(-1e-8).unwrap();
            assert!((near_neg - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn flip_chain_has_zero_asymptotic_variance() {
        // Alternating rates average out path-wise: Var(S_n) stays bounded.
        let spec = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            rate_per_state: vec![1.0, 3.0],
        };
        assert!(spec.asymptotic_variance().unwrap().abs() < 1e-12);
    }

    #[test]
    fn iid_variances() {
        assert!((bb(4.0, 0.5).asymptotic_variance().unwrap() - 4.0).abs() < 1e-12);
        assert!(
            (ProcessSpec::Poisson { mean: 2.5 }.asymptotic_variance().unwrap() - 2.5).abs()
                < 1e-12
        );
    }

    #[test]
    fn ar1_produces_valid_irreducible_chain() {
        let spec = ProcessSpec::ar1(2.0, 0.6, 0.5, 32).unwrap();
        spec.validate_analytic().unwrap();
        let mean = spec.mean_rate().unwrap();
        // Mild clamping bias at 0 aside, the grid mean must sit near 2.
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
        if let ProcessSpec::MarkovModulated { rate_per_state, .. } = &spec {
            assert_eq!(rate_per_state.len(), 32);
            assert!(rate_per_state.iter().all(|r| *r >= 0.0));
        } else {
            panic!("ar1 must expand to MarkovModulated");
        }
    }

    #[test]
    fn ar1_rejects_bad_parameters() {
        assert!(ProcessSpec::ar1(1.0, 1.0, 0.5, 32).is_err());
        assert!(ProcessSpec::ar1(1.0, 0.5, 0.0, 32).is_err());
        assert!(ProcessSpec::ar1(1.0, 0.5, 0.5, 1).is_err());
    }

    #[test]
    fn validation_rejects_malformed_specs() {
        assert!(bb(-1.0, 0.5).validate().is_err());
        assert!(bb(1.0, 1.5).validate().is_err());
        assert!(ProcessSpec::DiscreteUniform { support: vec![] }.validate().is_err());
        assert!(ProcessSpec::Constant { rate: f64::NAN }.validate().is_err());
        let bad_rows = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.6, 0.3], vec![0.5, 0.5]],
            rate_per_state: vec![1.0, 2.0],
        };
        assert!(bad_rows.validate().is_err());
    }

    #[test]
    fn serde_round_trip_tagged() {
        let spec = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            rate_per_state: vec![1.0, 3.0],
        };
        let text = toml::to_string(&spec).unwrap();
        assert!(text.contains("kind = \"markov_modulated\""));
        let back: ProcessSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
        // Unknown fields must be rejected, not silently dropped.
        let bad = "kind = \"constant\"\nrate = 1.0\nrte = 2.0\n";
        assert!(toml::from_str::<ProcessSpec>(bad).is_err());
    }

    #[test]
    fn point_masses_merge_duplicates() {
        let spec = ProcessSpec::DiscreteUniform {
            support: vec![1.0, 1.0, 2.0, 3.0],
        };
        let masses = spec.point_masses().unwrap();
        assert_eq!(masses.len(), 3);
        let p1 = masses.iter().find(|(v, _)| *v == 1.0).unwrap().1;
        assert!((p1 - 0.5).abs() < 1e-12);
    }
}
