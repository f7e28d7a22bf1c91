//! Reputation dynamics: exponential forgetting or a capped queue.

use std::collections::BTreeMap;

use sociq::queueing::{dtmc_stationary, total_variation, QueueConfig, QueueTrace};
use sociq::rng::{replication_stream, StreamSeed};
use sociq::social::{
    reputation_filter_update, reputation_queue_update, ReputationState,
};
use sociq::Error;

use super::{ExpOutcome, RunContext};
use crate::config::ReputationConfig;
use crate::csvout::CsvFile;
use crate::manifest::{summary_f64, summary_int, summary_str};
use crate::CliResult;

const STREAM_GAIN: u64 = 0;
const STREAM_SPEND: u64 = 1;
/// Leading trace slots exported for plots.
const TRACE_SAMPLE: usize = 10_000;

pub fn run(cfg: &ReputationConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    match cfg {
        ReputationConfig::Filter {
            lambda,
            initial,
            gain,
            n_slots,
        } => run_filter(*lambda, *initial, *gain, *n_slots, ctx),
        ReputationConfig::Queue {
            r_max,
            initial,
            gain,
            spend,
            n_slots,
            warmup_slots,
        } => run_queue(
            *r_max,
            initial.unwrap_or(r_max / 2.0),
            gain,
            spend,
            *n_slots,
            *warmup_slots,
            ctx,
        ),
    }
}

fn run_filter(
    lambda: f64,
    initial: f64,
    gain: f64,
    n_slots: usize,
    ctx: &RunContext,
) -> CliResult<ExpOutcome> {
    let mut state = ReputationState::filter(initial, lambda)?;
    let mut csv = CsvFile::create(
        &ctx.out_dir,
        "trace.csv",
        "slot,value,closed_form,abs_error",
    )?;
    let mut max_abs_error = 0.0f64;
    csv.row(&format!("0,{initial},{initial},0"))?;
    for slot in 1..=n_slots {
        state = reputation_filter_update(&state, gain)?;
        let closed_form = gain + lambda.powi(slot as i32) * (initial - gain);
        let abs_error = (state.value() - closed_form).abs();
        max_abs_error = max_abs_error.max(abs_error);
        csv.row(&format!("{slot},{},{closed_form},{abs_error}", state.value()))?;
    }
    let outputs = vec![csv.finish()?];

    let mut summary = BTreeMap::new();
    summary_str(&mut summary, "mode", "filter");
    summary_f64(&mut summary, "lambda", lambda);
    summary_f64(&mut summary, "gain", gain);
    summary_f64(&mut summary, "final_value", state.value());
    summary_f64(&mut summary, "max_abs_error_vs_closed_form", max_abs_error);
    Ok(ExpOutcome { summary, outputs })
}

#[allow(clippy::too_many_arguments)]
fn run_queue(
    r_max: f64,
    initial: f64,
    gain: &sociq::processes::ProcessSpec,
    spend: &sociq::processes::ProcessSpec,
    n_slots: usize,
    warmup_slots: usize,
    ctx: &RunContext,
) -> CliResult<ExpOutcome> {
    let traces = super::per_replication(ctx.replications, |rep| {
        let gains = gain.sample_path(
            n_slots,
            StreamSeed::new(ctx.master_seed, replication_stream(rep, STREAM_GAIN)),
        )?;
        let spends = spend.sample_path(
            n_slots,
            StreamSeed::new(ctx.master_seed, replication_stream(rep, STREAM_SPEND)),
        )?;
        let mut state = ReputationState::queue(initial, r_max)?;
        let mut levels = Vec::with_capacity(n_slots + 1);
        levels.push(state.value());
        for (g, s) in gains.values().iter().zip(spends.values()) {
            state = reputation_queue_update(&state, *g, *s)?;
            levels.push(state.value());
        }
        Ok(QueueTrace::from_levels(
            levels,
            QueueConfig {
                c_max: r_max,
                q0: initial,
                warmup_slots,
            },
        )?)
    })?;

    let mut counts: Vec<u64> = Vec::new();
    let mut mean_sum = 0.0;
    for trace in &traces {
        let histogram = trace.integer_histogram();
        if histogram.len() > counts.len() {
            counts.resize(histogram.len(), 0);
        }
        for (total, c) in counts.iter_mut().zip(&histogram) {
            *total += c;
        }
        let view = trace.post_warmup();
        mean_sum += view.iter().sum::<f64>() / view.len() as f64;
    }
    let total: u64 = counts.iter().sum();

    let mut outputs = Vec::new();
    let mut trace_csv = CsvFile::create(&ctx.out_dir, "trace.csv", "slot,level")?;
    for (slot, level) in traces[0].levels().iter().take(TRACE_SAMPLE).enumerate() {
        trace_csv.row(&format!("{slot},{level}"))?;
    }
    outputs.push(trace_csv.finish()?);
    let mut hist_csv = CsvFile::create(&ctx.out_dir, "histogram.csv", "level,count,frequency")?;
    for (level, &count) in counts.iter().enumerate() {
        hist_csv.row(&format!(
            "{level},{count},{}",
            count as f64 / total as f64
        ))?;
    }
    outputs.push(hist_csv.finish()?);

    let mut summary = BTreeMap::new();
    summary_str(&mut summary, "mode", "queue");
    summary_f64(&mut summary, "r_max", r_max);
    summary_f64(&mut summary, "mean_level", mean_sum / traces.len() as f64);
    summary_int(&mut summary, "n_samples", total as i64);

    // Exact-chain cross-check whenever the oracle supports the spec pair.
    if r_max.fract() == 0.0 && r_max >= 1.0 {
        match dtmc_stationary(gain, spend, r_max as u32) {
            Ok(pi) => {
                let empirical: Vec<f64> =
                    counts.iter().map(|&c| c as f64 / total as f64).collect();
                let tv = total_variation(&empirical, &pi);
                summary_f64(&mut summary, "tv_distance", tv);
                let mut oracle_csv =
                    CsvFile::create(&ctx.out_dir, "oracle.csv", "level,probability")?;
                for (level, p) in pi.iter().enumerate() {
                    oracle_csv.row(&format!("{level},{p}"))?;
                }
                outputs.push(oracle_csv.finish()?);
            }
            Err(Error::Unsupported { reason, .. }) => {
                summary_str(&mut summary, "oracle_status", format!("unsupported: {reason}"));
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        summary_str(&mut summary, "oracle_status", "skipped: r_max not an integer");
    }
    Ok(ExpOutcome { summary, outputs })
}
