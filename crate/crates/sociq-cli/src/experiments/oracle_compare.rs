//! Simulated capped-queue histogram versus the exact stationary chain.

use std::collections::BTreeMap;

use sociq::effective::{fit_decay_rate, solve_theta, Ccdf, QoSExponent};
use sociq::queueing::{
    dtmc_stationary, simulate_queue, stationary_ccdf, total_variation, QueueConfig,
};
use sociq::rng::{replication_stream, StreamSeed};

use super::{ExpOutcome, RunContext};
use crate::config::OracleCompareConfig;
use crate::csvout::CsvFile;
use crate::manifest::{summary_f64, summary_int, summary_str};
use crate::CliResult;

const STREAM_ARRIVAL: u64 = 0;
const STREAM_DEPARTURE: u64 = 1;

/// Tail window the oracle's log-slope is fitted over.
const SLOPE_LEVELS: (f64, f64) = (20.0, 100.0);

fn replication_histogram(
    cfg: &OracleCompareConfig,
    ctx: &RunContext,
    rep: u64,
) -> CliResult<Vec<u64>> {
    let arrival = cfg.arrival.sample_path(
        cfg.n_slots,
        StreamSeed::new(ctx.master_seed, replication_stream(rep, STREAM_ARRIVAL)),
    )?;
    let departure = cfg.departure.sample_path(
        cfg.n_slots,
        StreamSeed::new(ctx.master_seed, replication_stream(rep, STREAM_DEPARTURE)),
    )?;
    let config = QueueConfig::capped(cfg.c_max as f64)
        .with_q0((cfg.c_max / 2) as f64)
        .with_warmup(cfg.warmup_slots);
    let trace = simulate_queue(&arrival, &departure, &config)?;
    let mut histogram = trace.integer_histogram();
    histogram.resize(cfg.c_max as usize + 1, 0);
    Ok(histogram)
}

pub fn run(cfg: &OracleCompareConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    let pi = dtmc_stationary(&cfg.arrival, &cfg.departure, cfg.c_max)?;
    let oracle_ccdf = stationary_ccdf(&pi);

    let histograms = super::per_replication(ctx.replications, |rep| {
        replication_histogram(cfg, ctx, rep)
    })?;
    let mut counts = vec![0u64; cfg.c_max as usize + 1];
    for histogram in &histograms {
        for (total, c) in counts.iter_mut().zip(histogram) {
            *total += c;
        }
    }
    let total: u64 = counts.iter().sum();
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let tv = total_variation(&empirical, &pi);

    let mut oracle_csv = CsvFile::create(&ctx.out_dir, "oracle.csv", "level,probability,ccdf")?;
    for (level, (p, c)) in pi.iter().zip(&oracle_ccdf).enumerate() {
        oracle_csv.row(&format!("{level},{p},{c}"))?;
    }
    let mut hist_csv = CsvFile::create(&ctx.out_dir, "histogram.csv", "level,count,frequency")?;
    for (level, (count, freq)) in counts.iter().zip(&empirical).enumerate() {
        hist_csv.row(&format!("{level},{count},{freq}"))?;
    }
    let outputs = vec![oracle_csv.finish()?, hist_csv.finish()?];

    let mut summary = BTreeMap::new();
    summary_int(&mut summary, "n_samples", total as i64);
    summary_f64(&mut summary, "tv_distance", tv);

    // Oracle tail log-slope over the fixed window, cross-checked against the
    // uncapped decay exponent when one exists.
    let hi = SLOPE_LEVELS.1.min(cfg.c_max as f64);
    let exact = Ccdf::exact(
        oracle_ccdf
            .iter()
            .enumerate()
            .map(|(level, &p)| (level as f64, p)),
    );
    match fit_decay_rate(&exact.points, (SLOPE_LEVELS.0, hi)) {
        Ok(fit) => {
            summary_f64(&mut summary, "oracle_tail_slope", fit.theta_hat);
            summary_f64(&mut summary, "oracle_tail_r_squared", fit.r_squared);
            match solve_theta(&cfg.arrival, &cfg.departure) {
                Ok(QoSExponent::Finite { theta }) => {
                    summary_f64(&mut summary, "theta_star", theta);
                    summary_f64(
                        &mut summary,
                        "slope_rel_error",
                        (fit.theta_hat - theta).abs() / theta,
                    );
                }
                Ok(QoSExponent::DeterministicInfinite) => {
                    summary_str(&mut summary, "theta_star", "deterministic-infinite");
                }
                Err(e) => summary_str(&mut summary, "theta_star_error", e.to_string()),
            }
        }
        Err(e) => summary_str(&mut summary, "oracle_tail_slope_error", e.to_string()),
    }
    Ok(ExpOutcome { summary, outputs })
}
