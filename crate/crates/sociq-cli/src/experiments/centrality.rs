//! Centrality as an uncapped queue with a constant virtual drain.

use std::collections::BTreeMap;

use sociq::rng::{replication_stream, StreamSeed};
use sociq::social::{centrality_update, CentralityState};

use super::{ExpOutcome, RunContext};
use crate::config::CentralityConfig;
use crate::csvout::CsvFile;
use crate::manifest::{summary_f64, summary_int, summary_str};
use crate::CliResult;

const STREAM_INCREMENTS: u64 = 0;

pub fn run(cfg: &CentralityConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    let increments = match &cfg.increments {
        Some(spec) => spec
            .sample_path(
                cfg.n_slots,
                StreamSeed::new(ctx.master_seed, replication_stream(0, STREAM_INCREMENTS)),
            )?
            .values()
            .to_vec(),
        None => vec![0.0; cfg.n_slots],
    };

    let mut state = CentralityState::new(cfg.initial, cfg.mu)?;
    let mut csv = CsvFile::create(&ctx.out_dir, "trace.csv", "slot,level")?;
    csv.row(&format!("0,{}", state.level))?;
    let mut drained_at: Option<usize> = None;
    for (slot, inc) in increments.iter().enumerate() {
        state = centrality_update(&state, *inc)?;
        csv.row(&format!("{},{}", slot + 1, state.level))?;
        if drained_at.is_none() && state.level == 0.0 {
            drained_at = Some(slot + 1);
        }
    }
    let outputs = vec![csv.finish()?];

    let mut summary = BTreeMap::new();
    summary_f64(&mut summary, "initial", cfg.initial);
    summary_f64(&mut summary, "mu", cfg.mu);
    summary_f64(&mut summary, "final_level", state.level);
    match drained_at {
        Some(slot) => summary_int(&mut summary, "drained_at_slot", slot as i64),
        None => summary_str(&mut summary, "drained_at_slot", "never"),
    }
    if cfg.increments.is_none() {
        summary_int(
            &mut summary,
            "predicted_drain_slot",
            (cfg.initial / cfg.mu).ceil() as i64,
        );
    }
    Ok(ExpOutcome { summary, outputs })
}
