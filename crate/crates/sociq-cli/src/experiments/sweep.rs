//! One-parameter sweep of the relay credit scenario.

use std::collections::BTreeMap;

use rayon::prelude::*;
use sociq::d2dsim::{run_scenario, RunMetrics};
use sociq::effective::{ccdf_at_levels, empirical_ccdf, fit_decay_rate};
use sociq::social::wilson_upper;

use super::{ExpOutcome, RunContext};
use crate::config::SweepConfig;
use crate::csvout::CsvFile;
use crate::manifest::{summary_int, summary_str};
use crate::CliResult;

/// Two-sided 95% normal quantile for the Wilson upper limit.
const WILSON_Z: f64 = 1.959_963_984_540_054;

/// One scenario run; `None` when the value admits no feasible calibration.
fn one_run(cfg: &SweepConfig, ctx: &RunContext, value: f64, rep: u64) -> CliResult<Option<RunMetrics>> {
    let mut scenario = cfg.parameter.apply(&cfg.scenario, value);
    scenario.seed = ctx.master_seed;
    scenario.replication = rep;
    match run_scenario(&scenario) {
        Ok(metrics) => Ok(Some(metrics)),
        Err(sociq::Error::Infeasible { .. }) => Ok(None),
        Err(err) => Err(err.into()),
    }
}

pub fn run(cfg: &SweepConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    let reps = ctx.replications as u64;
    let jobs: Vec<(usize, u64)> = (0..cfg.values.len())
        .flat_map(|vi| (0..reps).map(move |rep| (vi, rep)))
        .collect();
    let runs: Vec<Option<RunMetrics>> = jobs
        .into_par_iter()
        .map(|(vi, rep)| one_run(cfg, ctx, cfg.values[vi], rep))
        .collect::<CliResult<_>>()?;

    let mut csv = CsvFile::create(
        &ctx.out_dir,
        "sweep.csv",
        "parameter,value,status,beta,theta_target,theta_hat,outage,wilson_upper,\
         satisfied,throughput,avg_power,min_credit",
    )?;
    let name = cfg.parameter.name();
    let mut n_infeasible = 0u32;
    for (vi, value) in cfg.values.iter().enumerate() {
        let group = &runs[vi * reps as usize..(vi + 1) * reps as usize];
        if group.iter().any(|r| r.is_none()) {
            n_infeasible += 1;
            csv.row(&format!("{name},{value},infeasible,,,,,,,,,"))?;
            continue;
        }
        let group: Vec<&RunMetrics> = group.iter().map(|r| r.as_ref().unwrap()).collect();

        let scenario = cfg.parameter.apply(&cfg.scenario, *value);
        let c_th = scenario.account.c_th;
        let mut outage_slots = 0u64;
        let mut total_slots = 0u64;
        let mut throughput = 0.0;
        let mut avg_power = 0.0;
        let mut min_credit = f64::INFINITY;
        for m in &group {
            let view = m.credit_trace.post_warmup();
            outage_slots += view.iter().filter(|q| **q < c_th).count() as u64;
            total_slots += view.len() as u64;
            throughput += m.throughput;
            avg_power += m.avg_power;
            min_credit = min_credit.min(m.credit_trace.min_level());
        }
        throughput /= group.len() as f64;
        avg_power /= group.len() as f64;
        let outage = outage_slots as f64 / total_slots as f64;
        let wilson = wilson_upper(outage_slots, total_slots, WILSON_Z)?;
        let satisfied = outage < scenario.account.delta;

        // Budget tail pooled across replications, grid pinned by the first.
        let budget0 = group[0].credit_trace.inverse()?;
        let mut budget_ccdf = empirical_ccdf(&budget0)?;
        let grid: Vec<f64> = budget_ccdf.points.iter().map(|p| p.level).collect();
        for m in &group[1..] {
            budget_ccdf.merge(&ccdf_at_levels(&m.credit_trace.inverse()?, &grid)?)?;
        }
        let fit = budget_ccdf
            .default_fit_range()
            .and_then(|range| fit_decay_rate(&budget_ccdf.points, range).ok());

        csv.row(&format!(
            "{name},{value},ok,{},{},{},{outage},{wilson},{satisfied},{throughput},\
             {avg_power},{min_credit}",
            super::opt_str(group[0].beta),
            group[0].theta_target,
            super::opt_str(fit.map(|f| f.theta_hat)),
        ))?;
    }
    let outputs = vec![csv.finish()?];

    let mut summary = BTreeMap::new();
    summary_str(&mut summary, "parameter", name);
    summary_int(&mut summary, "n_values", cfg.values.len() as i64);
    summary_int(&mut summary, "n_infeasible", n_infeasible as i64);
    Ok(ExpOutcome { summary, outputs })
}
