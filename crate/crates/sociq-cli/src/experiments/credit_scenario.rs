//! The relay credit scenario across spending schemes: credit CDFs, budget
//! tails, slot samples, and a per-scheme summary table.

use std::collections::BTreeMap;

use sociq::d2dsim::{run_scenario_with, RunMetrics, SchemeKind, SlotRecord};
use sociq::effective::{ccdf_at_levels, empirical_ccdf, fit_decay_rate, Ccdf};
use sociq::social::wilson_upper;

use super::{scheme_name, ExpOutcome, RunContext};
use crate::config::CreditScenarioConfig;
use crate::csvout::CsvFile;
use crate::manifest::{summary_f64, summary_str, OutputRecord};
use crate::CliResult;

/// Levels in the fixed credit-CDF export grid.
const CDF_GRID_POINTS: usize = 200;
/// Two-sided 95% normal quantile for the Wilson upper limit.
const WILSON_Z: f64 = 1.959_963_984_540_054;

struct SchemeRun {
    metrics: RunMetrics,
    slots: Vec<SlotRecord>,
}

fn one_run(
    cfg: &CreditScenarioConfig,
    ctx: &RunContext,
    scheme: SchemeKind,
    rep: u64,
) -> CliResult<SchemeRun> {
    let mut scenario = cfg.scenario.clone();
    scenario.scheme = scheme;
    scenario.seed = ctx.master_seed;
    scenario.replication = rep;
    let mut slots = Vec::new();
    let keep = if rep == 0 { cfg.slot_sample } else { 0 };
    let metrics = run_scenario_with(&scenario, |record| {
        if record.slot < keep {
            slots.push(*record);
        }
    })?;
    Ok(SchemeRun { metrics, slots })
}

pub fn run(cfg: &CreditScenarioConfig, ctx: &RunContext) -> CliResult<ExpOutcome> {
    let c_th = cfg.scenario.account.c_th;
    let c_max = cfg.scenario.account.c_max;
    let credit_grid: Vec<f64> = (0..=CDF_GRID_POINTS)
        .map(|i| c_max * i as f64 / CDF_GRID_POINTS as f64)
        .collect();

    let mut outputs: Vec<OutputRecord> = Vec::new();
    let mut summary = BTreeMap::new();
    let mut summary_csv = CsvFile::create(
        &ctx.out_dir,
        "summary.csv",
        "scheme,n_slots,replications,beta,theta_target,theta_hat,r_squared,outage,\
         wilson_upper,satisfied,throughput,avg_power,min_credit,discarded_credit,\
         spend_truncations,spent_by_c,received_by_b,forwarded_to_a",
    )?;

    for scheme in cfg.scheme_list() {
        let name = scheme_name(scheme);
        let runs = super::per_replication(ctx.replications, |rep| {
            one_run(cfg, ctx, scheme, rep)
        })?;

        // Pooled outage count over every post-warmup slot of every run.
        let mut outage_slots = 0u64;
        let mut total_slots = 0u64;
        let mut throughput = 0.0;
        let mut avg_power = 0.0;
        let mut min_credit = f64::INFINITY;
        let mut discarded = 0.0;
        let mut truncations = 0u64;
        for run in &runs {
            let view = run.metrics.credit_trace.post_warmup();
            outage_slots += view.iter().filter(|q| **q < c_th).count() as u64;
            total_slots += view.len() as u64;
            throughput += run.metrics.throughput;
            avg_power += run.metrics.avg_power;
            min_credit = min_credit.min(run.metrics.credit_trace.min_level());
            discarded += run.metrics.discarded_credit;
            truncations += run.metrics.spend_truncations;
        }
        let n_runs = runs.len() as f64;
        throughput /= n_runs;
        avg_power /= n_runs;
        let outage = outage_slots as f64 / total_slots as f64;
        let wilson = wilson_upper(outage_slots, total_slots, WILSON_Z)?;
        let satisfied = outage < cfg.scenario.account.delta;

        // Credit CDF on the fixed grid, pooled across replications.
        let mut credit_ccdf: Option<Ccdf> = None;
        for run in &runs {
            let part = ccdf_at_levels(&run.metrics.credit_trace, &credit_grid)?;
            match &mut credit_ccdf {
                Some(all) => all.merge(&part)?,
                None => credit_ccdf = Some(part),
            }
        }
        let credit_ccdf = credit_ccdf.expect("scheme list is non-empty");
        let mut cdf_csv = CsvFile::create(
            &ctx.out_dir,
            &format!("credit_cdf_{name}.csv"),
            "level,cdf,log_cdf",
        )?;
        for p in &credit_ccdf.points {
            let cdf = 1.0 - p.prob;
            cdf_csv.row(&format!("{},{},{}", p.level, cdf, super::log_str(cdf)))?;
        }
        outputs.push(cdf_csv.finish()?);

        // Budget (inverse-queue) tail, grid pinned by replication 0.
        let budget0 = runs[0].metrics.credit_trace.inverse()?;
        let mut budget_ccdf = empirical_ccdf(&budget0)?;
        let budget_grid: Vec<f64> = budget_ccdf.points.iter().map(|p| p.level).collect();
        for run in &runs[1..] {
            let budget = run.metrics.credit_trace.inverse()?;
            budget_ccdf.merge(&ccdf_at_levels(&budget, &budget_grid)?)?;
        }
        let mut tail_csv = CsvFile::create(
            &ctx.out_dir,
            &format!("budget_ccdf_{name}.csv"),
            "level,ccdf,log_ccdf",
        )?;
        for p in &budget_ccdf.points {
            tail_csv.row(&format!("{},{},{}", p.level, p.prob, super::log_str(p.prob)))?;
        }
        outputs.push(tail_csv.finish()?);
        let tail_fit = budget_ccdf
            .default_fit_range()
            .and_then(|range| fit_decay_rate(&budget_ccdf.points, range).ok());

        // Slot-level sample from replication 0.
        let mut slots_csv = CsvFile::create(
            &ctx.out_dir,
            &format!("slots_{name}.csv"),
            "slot,gain_ab,gain_bc,gain_a_ue,gain_b_ue,power,bits,spend,earn,credit",
        )?;
        for s in &runs[0].slots {
            slots_csv.row(&format!(
                "{},{},{},{},{},{},{},{},{},{}",
                s.slot,
                s.gains.ab,
                s.gains.bc,
                s.gains.a_ue,
                s.gains.b_ue,
                s.power,
                s.bits,
                s.spend,
                s.earn,
                s.credit
            ))?;
        }
        outputs.push(slots_csv.finish()?);

        let beta = runs[0].metrics.beta;
        let theta_target = runs[0].metrics.theta_target;
        let ledger = runs
            .iter()
            .fold((0.0, 0.0, 0.0), |acc, r| {
                (
                    acc.0 + r.metrics.ledger.spent_by_c,
                    acc.1 + r.metrics.ledger.received_by_b,
                    acc.2 + r.metrics.ledger.forwarded_to_a,
                )
            });
        summary_csv.row(&format!(
            "{name},{},{},{},{theta_target},{},{},{outage},{wilson},{satisfied},\
             {throughput},{avg_power},{min_credit},{discarded},{truncations},{},{},{}",
            cfg.scenario.n_slots,
            ctx.replications,
            super::opt_str(beta),
            super::opt_str(tail_fit.map(|f| f.theta_hat)),
            super::opt_str(tail_fit.map(|f| f.r_squared)),
            ledger.0,
            ledger.1,
            ledger.2,
        ))?;

        summary_f64(&mut summary, &format!("{name}.outage"), outage);
        summary_f64(&mut summary, &format!("{name}.wilson_upper"), wilson);
        summary_f64(&mut summary, &format!("{name}.throughput"), throughput);
        summary_f64(&mut summary, &format!("{name}.min_credit"), min_credit);
        if let Some(beta) = beta {
            summary_f64(&mut summary, &format!("{name}.beta"), beta);
        }
        if let Some(fit) = tail_fit {
            summary_f64(&mut summary, &format!("{name}.theta_hat"), fit.theta_hat);
            summary_f64(&mut summary, &format!("{name}.r_squared"), fit.r_squared);
        }
        summary_str(
            &mut summary,
            &format!("{name}.satisfied"),
            if satisfied { "yes" } else { "no" },
        );
    }
    summary_f64(&mut summary, "theta_target", {
        let account = &cfg.scenario.account;
        ((1.0 / account.delta).ln()) / (account.c_max - account.c_th)
    });

    outputs.insert(0, summary_csv.finish()?);
    Ok(ExpOutcome { summary, outputs })
}
