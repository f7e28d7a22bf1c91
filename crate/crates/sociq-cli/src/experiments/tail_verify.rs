//! Uncapped-queue tail decay versus the solved exponent.

use std::collections::BTreeMap;

use sociq::effective::{
    ccdf_at_levels, empirical_ccdf, fit_decay_rate, solve_theta, Ccdf, QoSExponent,
};
use sociq::queueing::{simulate_queue, QueueConfig};
use sociq::rng::{replication_stream, StreamSeed};

use super::{ExpOutcome, RunContext};
use crate::config::TailVerifyConfig;
use crate::csvout::CsvFile;
use crate::manifest::{summary_f64, summary_int, summary_str};
use crate::{CliError, CliResult};

const STREAM_ARRIVAL: u64 = 0;
const STREAM_DEPARTURE: u64 = 1;

fn replication_ccdf(
    cfg: &TailVerifyConfig,
    ctx: &RunContext,
    rep: u64,
    grid: Option<&[f64]>,
) -> CliResult<Ccdf> {
    let arrival = cfg.arrival.sample_path(
        cfg.n_slots,
        StreamSeed::new(ctx.master_seed, replication_stream(rep, STREAM_ARRIVAL)),
    )?;
    let departure = cfg.departure.sample_path(
        cfg.n_slots,
        StreamSeed::new(ctx.master_seed, replication_stream(rep, STREAM_DEPARTURE)),
    )?;
    let config = QueueConfig::uncapped().with_warmup(cfg.warmup_slots);
    let trace = simulate_queue(&arrival, &departure, &config)?;
    Ok(match grid {
        Some(levels) => ccdf_at_levels(&trace, levels)?,
        None => empirical_ccdf(&trace)?,
    })
}

pub fn run(cfg: &TailVerifyConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    let exponent = solve_theta(&cfg.arrival, &cfg.departure)?;

    // Replication 0 pins the level grid; the rest merge onto it.
    let mut merged = replication_ccdf(cfg, ctx, 0, None)?;
    let grid: Vec<f64> = merged.points.iter().map(|p| p.level).collect();
    let rest = super::per_replication(ctx.replications - 1, |rep| {
        replication_ccdf(cfg, ctx, rep + 1, Some(&grid))
    })?;
    for ccdf in &rest {
        merged.merge(ccdf)?;
    }

    let mut csv = CsvFile::create(&ctx.out_dir, "tail.csv", "level,ccdf,log_ccdf")?;
    for p in &merged.points {
        csv.row(&format!("{},{},{}", p.level, p.prob, super::log_str(p.prob)))?;
    }
    let outputs = vec![csv.finish()?];

    let mut summary = BTreeMap::new();
    summary_int(&mut summary, "n_slots", cfg.n_slots as i64);
    summary_int(&mut summary, "n_samples", merged.n_samples as i64);
    match exponent {
        QoSExponent::Finite { theta } => {
            summary_f64(&mut summary, "theta_solve", theta);
            let range = merged.default_fit_range().ok_or_else(|| {
                CliError::Numeric("tail too short for the default fit range".into())
            })?;
            let fit = fit_decay_rate(&merged.points, range)?;
            summary_f64(&mut summary, "theta_hat", fit.theta_hat);
            summary_f64(&mut summary, "r_squared", fit.r_squared);
            summary_f64(&mut summary, "intercept", fit.intercept);
            summary_f64(&mut summary, "fit_lo", range.0);
            summary_f64(&mut summary, "fit_hi", range.1);
            summary_int(&mut summary, "fit_points", fit.n_points as i64);
            summary_f64(
                &mut summary,
                "theta_rel_error",
                (fit.theta_hat - theta).abs() / theta,
            );
        }
        QoSExponent::DeterministicInfinite => {
            summary_str(&mut summary, "theta_solve", "deterministic-infinite");
        }
    }
    Ok(ExpOutcome { summary, outputs })
}
