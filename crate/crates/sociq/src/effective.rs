//! Effective bandwidth, effective capacity, the decay-rate fixed point, and
//! empirical tail estimation from simulated level traces.

use crate::error::{Error, Result};
use crate::processes::ProcessSpec;
use crate::queueing::QueueTrace;

/// Lower end of the fixed-point bracket.
pub const THETA_BRACKET_MIN: f64 = 1e-6;
/// Upper end of the fixed-point bracket; beyond this the tail is treated as
/// faster than exponential.
pub const THETA_BRACKET_MAX: f64 = 1e6;
/// Relative tolerance on the bandwidth/capacity gap at the fixed point.
pub const SOLVE_REL_TOL: f64 = 1e-9;
/// Number of levels in the default CCDF grid.
pub const CCDF_GRID_POINTS: usize = 200;
/// Upper percentile bounding the default CCDF grid.
pub const CCDF_PERCENTILE: f64 = 0.99999;
/// Grid points below this level are excluded from the default fit range.
pub const DEFAULT_FIT_MIN_LEVEL: f64 = 10.0;
/// Minimum exceedance samples behind a grid point used in a fit.
pub const MIN_EXCEEDANCES: u64 = 50;
/// Minimum usable grid points for a tail fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Tail decay rate of a queue: either a positive exponent or the marker for
/// deterministic systems whose tail is identically zero past a point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QoSExponent {
    Finite { theta: f64 },
    DeterministicInfinite,
}

impl QoSExponent {
    pub fn finite(theta: f64) -> Self {
        QoSExponent::Finite { theta }
    }

    /// The exponent when finite, `None` for the deterministic marker.
    pub fn theta(&self) -> Option<f64> {
        match self {
            QoSExponent::Finite { theta } => Some(*theta),
            QoSExponent::DeterministicInfinite => None,
        }
    }
}

/// Least-squares summary of a log-linear tail.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TailFit {
    /// Estimated decay rate (minus the fitted slope).
    pub theta_hat: f64,
    /// Fitted probability prefactor at level 0.
    pub intercept: f64,
    /// Coefficient of determination over the fitted range.
    pub r_squared: f64,
    /// Level range the fit used.
    pub fit_range: (f64, f64),
    /// Number of grid points entering the fit.
    pub n_points: usize,
}

/// One CCDF grid point: `prob = Pr{level > level}` with the raw count
/// behind it, so replications can be merged exactly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CcdfPoint {
    pub level: f64,
    pub prob: f64,
    /// Samples strictly above `level`; `u64::MAX` marks analytic points.
    pub exceedances: u64,
}

/// Empirical complementary CDF on a fixed level grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    pub points: Vec<CcdfPoint>,
    pub n_samples: u64,
}

impl Ccdf {
    /// Wraps analytically known tail probabilities (e.g. from the exact
    /// chain oracle) so they can be fitted like empirical ones.
    pub fn exact(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let points = points
            .into_iter()
            .map(|(level, prob)| CcdfPoint {
                level,
                prob,
                exceedances: u64::MAX,
            })
            .collect();
        Ccdf {
            points,
            n_samples: 0,
        }
    }

    /// Folds another replication computed on the identical grid into this
    /// one by summing exceedance counts.
    pub fn merge(&mut self, other: &Ccdf) -> Result<()> {
        if self.points.len() != other.points.len()
            || self
                .points
                .iter()
                .zip(&other.points)
                .any(|(a, b)| a.level != b.level)
        {
            return Err(Error::validation(
                "ccdf",
                "replication grids differ; merge needs the identical level grid",
            ));
        }
        self.n_samples += other.n_samples;
        for (a, b) in self.points.iter_mut().zip(&other.points) {
            a.exceedances += b.exceedances;
            a.prob = a.exceedances as f64 / self.n_samples as f64;
        }
        Ok(())
    }

    /// Level of the last grid point backed by at least `MIN_EXCEEDANCES`
    /// samples, the default upper fit bound.
    pub fn default_fit_range(&self) -> Option<(f64, f64)> {
        let hi = self
            .points
            .iter()
            .rev()
            .find(|p| p.exceedances >= MIN_EXCEEDANCES && p.prob > 0.0)?
            .level;
        if hi > DEFAULT_FIT_MIN_LEVEL {
            Some((DEFAULT_FIT_MIN_LEVEL, hi))
        } else {
            None
        }
    }
}

/// Minimum constant departure rate that sustains tail decay rate `theta`
/// against the given arrival process.
pub fn effective_bandwidth(spec: &ProcessSpec, theta: f64) -> Result<f64> {
    require_positive_theta(theta)?;
    spec.log_mgf_rate(theta)
}

/// Maximum constant arrival rate supportable by the given departure process
/// at tail decay rate `theta`.
pub fn effective_capacity(spec: &ProcessSpec, theta: f64) -> Result<f64> {
    require_positive_theta(theta)?;
    spec.log_mgf_rate(-theta)
}

fn require_positive_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::validation("theta", "must be finite and > 0"));
    }
    Ok(())
}

/// Solves `effective_bandwidth(arrival, θ) = effective_capacity(departure, θ)`
/// for the queue's decay rate.
///
/// The gap is nondecreasing in θ and negative near 0 for a stable pair, so a
/// doubling bracket from `THETA_BRACKET_MIN` followed by bisection is exact
/// enough; the stop rule is on the gap itself, `|E_B - E_C| <= 1e-9 max(1, E_B)`.
pub fn solve_theta(arrival: &ProcessSpec, departure: &ProcessSpec) -> Result<QoSExponent> {
    let mean_a = arrival.mean_rate()?;
    let mean_r = departure.mean_rate()?;
    if mean_a >= mean_r {
        return Err(Error::Unstable {
            mean_arrival: mean_a,
            mean_departure: mean_r,
        });
    }
    if arrival.is_degenerate() && departure.is_degenerate() {
        return Ok(QoSExponent::DeterministicInfinite);
    }

    let gap = |theta: f64| -> Result<f64> {
        Ok(arrival.log_mgf_rate(theta)? - departure.log_mgf_rate(-theta)?)
    };

    let mut lo = 0.0;
    let mut hi = THETA_BRACKET_MIN;
    loop {
        let g = gap(hi)?;
        if g > 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > THETA_BRACKET_MAX {
            return Err(Error::NoFiniteRoot {
                theta_max: THETA_BRACKET_MAX,
            });
        }
    }

    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let g = gap(mid)?;
        let scale = arrival.log_mgf_rate(mid)?.abs().max(1.0);
        if g.abs() <= SOLVE_REL_TOL * scale {
            return Ok(QoSExponent::finite(mid));
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The gap can be too steep for its own tolerance; the bracket is still
    // collapsed to machine precision, so the midpoint is the root.
    Ok(QoSExponent::finite(mid))
}

/// Asymptotic tail approximation `Pr{Q > x} = e^{-θx}` with unit prefactor.
pub fn predicted_tail(exponent: &QoSExponent, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::validation("x", "must be >= 0"));
    }
    Ok(match exponent {
        QoSExponent::Finite { theta } => (-theta * x).exp(),
        QoSExponent::DeterministicInfinite => {
            if x > 0.0 {
                0.0
            } else {
                1.0
            }
        }
    })
}

/// Decay rate the budget queue must meet so that credit falls below `c_th`
/// with probability at most `delta`.
pub fn target_theta(c_max: f64, c_th: f64, delta: f64) -> Result<QoSExponent> {
    if !c_max.is_finite() || c_max <= 0.0 {
        return Err(Error::validation("c_max", "must be finite and > 0"));
    }
    if !(c_th >= 0.0 && c_th < c_max) {
        return Err(Error::validation("c_th", "must satisfy 0 <= c_th < c_max"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation("delta", "must lie strictly in (0, 1)"));
    }
    Ok(QoSExponent::finite((1.0 / delta).ln() / (c_max - c_th)))
}

/// Empirical `Pr{Q > q}` of the post-warmup trace on a grid of
/// `CCDF_GRID_POINTS` levels from 0 to the 99.999th percentile.
pub fn empirical_ccdf(trace: &QueueTrace) -> Result<Ccdf> {
    let view = trace.post_warmup();
    if view.len() < 1_000 {
        return Err(Error::validation(
            "trace",
            format!("need >= 1000 post-warmup samples, got {}", view.len()),
        ));
    }
    let mut sorted: Vec<f64> = view.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((CCDF_PERCENTILE * sorted.len() as f64).ceil() as usize)
        .clamp(1, sorted.len())
        - 1;
    let top = sorted[idx];
    let n = sorted.len() as u64;

    let grid: Vec<f64> = if top <= 0.0 {
        vec![0.0]
    } else {
        (0..CCDF_GRID_POINTS)
            .map(|i| top * i as f64 / (CCDF_GRID_POINTS - 1) as f64)
            .collect()
    };
    let points = grid
        .into_iter()
        .map(|level| {
            let above = sorted.partition_point(|q| *q <= level);
            let exceedances = (sorted.len() - above) as u64;
            CcdfPoint {
                level,
                prob: exceedances as f64 / n as f64,
                exceedances,
            }
        })
        .collect();
    Ok(Ccdf {
        points,
        n_samples: n,
    })
}

/// Empirical `Pr{Q > q}` of the post-warmup trace evaluated on a
/// caller-supplied level grid, so replications can share one grid and merge.
pub fn ccdf_at_levels(trace: &QueueTrace, levels: &[f64]) -> Result<Ccdf> {
    if levels.is_empty() {
        return Err(Error::validation("levels", "grid must be non-empty"));
    }
    let view = trace.post_warmup();
    if view.is_empty() {
        return Err(Error::validation("trace", "no post-warmup samples"));
    }
    let mut sorted: Vec<f64> = view.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as u64;
    let points = levels
        .iter()
        .map(|&level| {
            let above = sorted.partition_point(|q| *q <= level);
            let exceedances = (sorted.len() - above) as u64;
            CcdfPoint {
                level,
                prob: exceedances as f64 / n as f64,
                exceedances,
            }
        })
        .collect();
    Ok(Ccdf {
        points,
        n_samples: n,
    })
}

/// Ordinary least squares of `ln Pr{Q > q}` against `q` over `range`,
/// using only well-supported grid points.
pub fn fit_decay_rate(points: &[CcdfPoint], range: (f64, f64)) -> Result<TailFit> {
    let (q_lo, q_hi) = range;
    if !(q_lo < q_hi) {
        return Err(Error::validation("range", "fit range must satisfy lo < hi"));
    }
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| {
            p.level >= q_lo && p.level <= q_hi && p.prob > 0.0 && p.exceedances >= MIN_EXCEEDANCES
        })
        .map(|p| (p.level, p.prob.ln()))
        .collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::FitFailed {
            found: used.len(),
            required: MIN_FIT_POINTS,
        });
    }

    let n = used.len() as f64;
    let mean_x = used.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = used.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = used
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let offset = mean_y - slope * mean_x;
    let ss_tot: f64 = used.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = used
        .iter()
        .map(|(x, y)| {
            let e = y - (offset + slope * x);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(TailFit {
        theta_hat: -slope,
        intercept: offset.exp(),
        r_squared,
        fit_range: range,
        n_points: used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::ProcessSpec;
    use crate::queueing::QueueConfig;

    fn du(values: &[f64]) -> ProcessSpec {
        ProcessSpec::DiscreteUniform {
            support: values.to_vec(),
        }
    }

    fn bb(batch: f64, prob: f64) -> ProcessSpec {
        ProcessSpec::BernoulliBatch { batch, prob }
    }

    #[test]
    fn bandwidth_of_constant_is_rate() {
        let s = ProcessSpec::constant(5.0);
        assert_eq!(effective_bandwidth(&s, 2.0).unwrap(), 5.0);
        assert_eq!(effective_capacity(&s, 2.0).unwrap(), 5.0);
    }

    #[test]
    fn bandwidth_closed_form_spot_value() {
        // 2 ln(0.5 (1 + e^2)) for BernoulliBatch(4, 0.5) at theta 0.5.
        let v = effective_bandwidth(&bb(4.0, 0.5), 0.5).unwrap();
        assert!((v - 2.867561660966054374).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bandwidth_small_theta_is_mean() {
        let v = effective_bandwidth(&bb(4.0, 0.5), 1e-8).unwrap();
        assert!((v - 2.0).abs() < 1e-6);
    }

    #[test]
    fn capacity_closed_form_spot_value() {
        // -ln(0.5 (e^-1 + e^-3)) for DiscreteUniform{1,3} at theta 1.
        let v = effective_capacity(&du(&[1.0, 3.0]), 1.0).unwrap();
        assert!((v - 1.566219169516972813).abs() < 1e-9, "{v}");
    }

    #[test]
    fn capacity_large_theta_approaches_min_rate() {
        let v = effective_capacity(&du(&[1.0, 3.0]), 50.0).unwrap();
        assert!((v - 1.0138629436111989).abs() < 1e-9, "{v}");
        assert!(v > 1.0 && v - 1.0 < 0.02);
    }

    #[test]
    fn nonpositive_theta_rejected() {
        let s = ProcessSpec::constant(1.0);
        assert!(effective_bandwidth(&s, 0.0).is_err());
        assert!(effective_capacity(&s, -1.0).is_err());
        assert!(effective_bandwidth(&s, f64::NAN).is_err());
    }

    #[test]
    fn solve_theta_quadratic_oracle() {
        let theta = solve_theta(&bb(1.0, 0.4), &ProcessSpec::constant(0.5))
            .unwrap()
            .theta()
            .unwrap();
        assert!((theta - 2.0 * 1.5f64.ln()).abs() < 1e-6, "{theta}");
    }

    #[test]
    fn solve_theta_oracle_matrix() {
        let cases: [(ProcessSpec, ProcessSpec, f64); 5] = [
            (bb(2.0, 0.3), ProcessSpec::constant(1.0), (7.0f64 / 3.0).ln()),
            (bb(2.0, 0.35), ProcessSpec::constant(1.0), (13.0f64 / 7.0).ln()),
            (
                du(&[0.0, 3.0]),
                ProcessSpec::constant(2.0),
                ((1.0 + 5.0f64.sqrt()) / 2.0).ln(),
            ),
            (
                du(&[0.0, 1.0, 2.0, 3.0]),
                ProcessSpec::constant(2.0),
                (1.0 + 2.0f64.sqrt()).ln(),
            ),
            (bb(3.0, 0.2), du(&[1.0, 2.0]), 0.8239352017285439),
        ];
        for (arrival, departure, expected) in &cases {
            let theta = solve_theta(arrival, departure).unwrap().theta().unwrap();
            assert!((theta - expected).abs() < 1e-6, "{theta} vs {expected}");
        }
    }

    #[test]
    fn solve_theta_poisson_oracle() {
        let theta = solve_theta(
            &ProcessSpec::Poisson { mean: 0.8 },
            &ProcessSpec::constant(1.0),
        )
        .unwrap()
        .theta()
        .unwrap();
        assert!((theta - 0.4308422097842590).abs() < 1e-6, "{theta}");
    }

    #[test]
    fn solve_theta_deterministic_pair() {
        let k = solve_theta(&ProcessSpec::constant(2.0), &ProcessSpec::constant(3.0)).unwrap();
        assert_eq!(k, QoSExponent::DeterministicInfinite);
    }

    #[test]
    fn solve_theta_unstable_pair() {
        let err = solve_theta(&bb(4.0, 0.5), &ProcessSpec::constant(2.0)).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    #[test]
    fn solve_theta_no_finite_root() {
        // Strictly alternating modulated arrivals average 5 per slot with an
        // exactly linear log-MGF, so the gap against Constant(6) never flips.
        let flip = ProcessSpec::MarkovModulated {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            rate_per_state: vec![0.0, 10.0],
        };
        let err = solve_theta(&flip, &ProcessSpec::constant(6.0)).unwrap_err();
        assert!(matches!(err, Error::NoFiniteRoot { .. }));
    }

    #[test]
    fn solve_theta_gap_within_tolerance_at_root() {
        let arrival = bb(1.0, 0.4);
        let departure = ProcessSpec::constant(0.5);
        let theta = solve_theta(&arrival, &departure).unwrap().theta().unwrap();
        let eb = effective_bandwidth(&arrival, theta).unwrap();
        let ec = effective_capacity(&departure, theta).unwrap();
        assert!((eb - ec).abs() <= 1e-9 * eb.max(1.0));
    }

    #[test]
    fn predicted_tail_values() {
        let theta = QoSExponent::finite(2.0 * 1.5f64.ln());
        let p = predicted_tail(&theta, 10.0).unwrap();
        assert!((p - 3.007286598217175e-4).abs() < 1e-15 * 3.0, "{p}");
        assert_eq!(predicted_tail(&theta, 0.0).unwrap(), 1.0);
        let det = QoSExponent::DeterministicInfinite;
        assert_eq!(predicted_tail(&det, 5.0).unwrap(), 0.0);
        assert_eq!(predicted_tail(&det, 0.0).unwrap(), 1.0);
        assert!(predicted_tail(&theta, -1.0).is_err());
    }

    #[test]
    fn target_theta_examples() {
        let t = target_theta(100.0, 90.0, 1e-3).unwrap().theta().unwrap();
        assert!((t - 0.6907755278982137).abs() < 1e-12);
        assert!(target_theta(100.0, 90.0, 1.0).is_err());
        assert!(target_theta(100.0, 90.0, 0.0).is_err());
        assert!(target_theta(100.0, 100.0, 1e-3).is_err());
        assert!(target_theta(f64::INFINITY, 90.0, 1e-3).is_err());
        let doubled = target_theta(100.0, 80.0, 1e-3).unwrap().theta().unwrap();
        assert!((doubled - t / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ccdf_of_constant_trace() {
        let trace = QueueTrace::from_levels(
            vec![7.0; 2000],
            QueueConfig {
                c_max: f64::INFINITY,
                q0: 7.0,
                warmup_slots: 10,
            },
        )
        .unwrap();
        let ccdf = empirical_ccdf(&trace).unwrap();
        let at = |level: f64| {
            ccdf.points
                .iter()
                .find(|p| (p.level - level).abs() < 1e-9)
                .map(|p| p.prob)
        };
        let below = ccdf
            .points
            .iter()
            .filter(|p| p.level < 7.0 - 1e-9)
            .all(|p| p.prob == 1.0);
        assert!(below);
        assert_eq!(at(7.0), Some(0.0));
        assert!(ccdf
            .points
            .windows(2)
            .all(|w| w[0].prob >= w[1].prob && w[0].level < w[1].level));
    }

    #[test]
    fn ccdf_needs_enough_samples() {
        let trace = QueueTrace::from_levels(
            vec![1.0; 500],
            QueueConfig {
                c_max: f64::INFINITY,
                q0: 1.0,
                warmup_slots: 0,
            },
        )
        .unwrap();
        assert!(empirical_ccdf(&trace).is_err());
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let points: Vec<CcdfPoint> = (5..=50)
            .map(|q| {
                let level = q as f64;
                CcdfPoint {
                    level,
                    prob: (-0.7 * level).exp(),
                    exceedances: u64::MAX,
                }
            })
            .collect();
        let fit = fit_decay_rate(&points, (5.0, 50.0)).unwrap();
        assert!((fit.theta_hat - 0.7).abs() < 1e-9, "{}", fit.theta_hat);
        assert!((fit.intercept - 1.0).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert_eq!(fit.n_points, 46);
    }

    #[test]
    fn fit_requires_enough_points() {
        let points: Vec<CcdfPoint> = (0..3)
            .map(|q| CcdfPoint {
                level: q as f64,
                prob: 0.5,
                exceedances: u64::MAX,
            })
            .collect();
        let err = fit_decay_rate(&points, (0.0, 10.0)).unwrap_err();
        assert!(matches!(
            err,
            Error::FitFailed {
                found: 3,
                required: 5
            }
        ));
    }

    #[test]
    fn merge_sums_counts() {
        let mut a = Ccdf {
            points: vec![CcdfPoint {
                level: 1.0,
                prob: 0.5,
                exceedances: 50,
            }],
            n_samples: 100,
        };
        let b = Ccdf {
            points: vec![CcdfPoint {
                level: 1.0,
                prob: 0.25,
                exceedances: 25,
            }],
            n_samples: 100,
        };
        a.merge(&b).unwrap();
        assert_eq!(a.n_samples, 200);
        assert_eq!(a.points[0].exceedances, 75);
        assert!((a.points[0].prob - 0.375).abs() < 1e-15);
        let wrong_grid = Ccdf {
            points: vec![CcdfPoint {
                level: 2.0,
                prob: 0.25,
                exceedances: 25,
            }],
            n_samples: 100,
        };
        assert!(a.merge(&wrong_grid).is_err());
    }

    #[test]
    fn ccdf_at_levels_agrees_with_own_grid() {
        let levels: Vec<f64> = (0..2_000).map(|i| (i % 97) as f64).collect();
        let trace = QueueTrace::from_levels(
            levels,
            QueueConfig::uncapped().with_warmup(100),
        )
        .unwrap();
        let base = empirical_ccdf(&trace).unwrap();
        let grid: Vec<f64> = base.points.iter().map(|p| p.level).collect();
        let again = ccdf_at_levels(&trace, &grid).unwrap();
        assert_eq!(base, again);
        // A replication of itself doubles every count on merge.
        let mut merged = base.clone();
        merged.merge(&again).unwrap();
        assert_eq!(merged.n_samples, 2 * base.n_samples);
        for (m, b) in merged.points.iter().zip(&base.points) {
            assert_eq!(m.exceedances, 2 * b.exceedances);
            assert!((m.prob - b.prob).abs() < 1e-15);
        }
        assert!(ccdf_at_levels(&trace, &[]).is_err());
    }

    #[test]
    fn default_fit_range_tracks_support() {
        let points: Vec<CcdfPoint> = (0..=60)
            .map(|q| CcdfPoint {
                level: q as f64,
                prob: (-0.5 * q as f64).exp(),
                exceedances: if q <= 40 { 1000 } else { 10 },
            })
            .collect();
        let ccdf = Ccdf {
            points,
            n_samples: 100_000,
        };
        assert_eq!(ccdf.default_fit_range(), Some((10.0, 40.0)));
    }
}
