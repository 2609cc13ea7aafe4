//! Multi-round pipeline runs and their CSV/JSON results.

use std::io::Write;

use anyhow::{Context, Result};
use budget_auction_core::analysis::{compute_metrics, evaluate_series, Series, Variation};
use budget_auction_core::seed::RoundSeeds;
use budget_auction_core::{
    allocate_time_slots, build_conflict_graph, generate_scenario, GradingParams, Mechanism, Money, Scenario,
    ScenarioConfig,
};
use serde::Serialize;

use crate::format::round_money;

/// Where each round's market comes from.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    /// A fresh market per round from the round's scenario seed.
    Generate(ScenarioConfig),
    /// The same market every round; only grading and misreporting vary.
    Fixed(Box<Scenario>),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub source: ScenarioSource,
    pub rounds: usize,
    pub mechanisms: Vec<Mechanism>,
    pub variation: Variation,
    pub grading: GradingParams,
    pub kappa: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerRecord {
    pub device: usize,
    pub bid: Money,
    pub payment: Money,
    pub utility: Money,
}

/// One `(round, mechanism, task)` result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub round: usize,
    pub mechanism: &'static str,
    pub task: usize,
    pub slot: usize,
    pub budget: Money,
    pub winner_count: usize,
    pub payment_total: Money,
    pub utilization: f64,
    pub device_utility: Money,
    pub quality_set: Vec<usize>,
    pub winners: Vec<WinnerRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: usize,
    pub mechanism: &'static str,
    pub kappa: usize,
    pub slots_used: usize,
    pub total_payment: Money,
    pub total_budget: Money,
    pub aggregate_utilization: f64,
    pub total_device_utility: Money,
    pub winners: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResults {
    pub records: Vec<TaskRecord>,
    pub rounds: Vec<RoundSummary>,
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

pub fn execute(spec: &RunSpec) -> Result<RunResults> {
    let series: Vec<Series> = spec
        .mechanisms
        .iter()
        .map(|&mechanism| Series { mechanism, variation: spec.variation })
        .collect();
    let mut results = RunResults::default();
    for round in 0..spec.rounds {
        let seeds = RoundSeeds::new(spec.seed, round as u64);
        let generated;
        let scenario = match &spec.source {
            ScenarioSource::Fixed(s) => s.as_ref(),
            ScenarioSource::Generate(cfg) => {
                generated = generate_scenario(cfg, seeds.scenario)?;
                &generated
            }
        };
        if round == 0 {
            for w in scenario.warnings() {
                log::warn!("{w}");
            }
        }
        let graph = build_conflict_graph(scenario);
        let kappa = spec.kappa.unwrap_or_else(|| graph.default_kappa());
        let slots = allocate_time_slots(&graph, kappa)?;
        let outcomes = evaluate_series(scenario, &slots, &spec.grading, &series, &seeds)
            .with_context(|| format!("round {round}"))?;
        let truth = scenario.truthful_bids();
        for (s, outcome) in series.iter().zip(&outcomes) {
            let metrics = compute_metrics(outcome, scenario);
            let mechanism = s.mechanism.name();
            for task in scenario.tasks() {
                let out = &outcome.per_task[task.id.0];
                let quality = outcome.quality_sets.get(&task.id);
                let winners: Vec<WinnerRecord> = out
                    .winners
                    .iter()
                    .map(|&d| {
                        let pay = out.payments[&d];
                        WinnerRecord {
                            device: d.0,
                            bid: round_money(quality.and_then(|q| q.bid_of(d)).unwrap_or(f64::NAN)),
                            payment: round_money(pay),
                            utility: round_money(pay - truth.get(d, task.id).unwrap_or(0.0)),
                        }
                    })
                    .collect();
                let utility: Money = out
                    .winners
                    .iter()
                    .map(|d| out.payments[d] - truth.get(*d, task.id).unwrap_or(0.0))
                    .sum();
                results.records.push(TaskRecord {
                    round,
                    mechanism,
                    task: task.id.0,
                    slot: slots.slot(task.id).unwrap_or(0),
                    budget: task.budget,
                    winner_count: out.winner_count(),
                    payment_total: out.payment_total(),
                    utilization: metrics.task_utilization[task.id.0],
                    device_utility: utility,
                    quality_set: quality.map(|q| q.members.iter().map(|d| d.0).collect()).unwrap_or_default(),
                    winners,
                    skipped: outcome
                        .warnings
                        .iter()
                        .find(|w| w.task == task.id)
                        .map(|w| w.reason.to_string()),
                });
            }
            results.rounds.push(RoundSummary {
                round,
                mechanism,
                kappa,
                slots_used: slots.max_slot(),
                total_payment: metrics.total_payment,
                total_budget: metrics.total_budget,
                aggregate_utilization: metrics.aggregate_utilization,
                total_device_utility: metrics.total_device_utility,
                winners: metrics.winner_counts.iter().sum(),
            });
        }
    }
    Ok(results)
}

/// Columns `round,mechanism,task,slot,winners,payment_total,budget,utilization`.
pub fn write_csv<W: Write>(results: &RunResults, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "mechanism", "task", "slot", "winners", "payment_total", "budget", "utilization"])?;
    for r in &results.records {
        w.write_record([
            r.round.to_string(),
            r.mechanism.to_string(),
            r.task.to_string(),
            r.slot.to_string(),
            r.winner_count.to_string(),
            format!("{:.2}", r.payment_total),
            format!("{:.2}", r.budget),
            format!("{:.4}", r.utilization),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MechanismMean {
    mechanism: &'static str,
    rounds: usize,
    mean_utilization: f64,
    mean_device_utility: Money,
    mean_winners: f64,
}

#[derive(Serialize)]
struct Settings {
    seed: u64,
    rounds: usize,
    variation: &'static str,
    kappa: Option<usize>,
    batch_size: usize,
    graders_per_batch: Option<usize>,
}

#[derive(Serialize)]
struct Summary<'a> {
    settings: Settings,
    mechanisms: Vec<MechanismMean>,
    rounds: Vec<RoundSummary>,
    tasks: &'a [TaskRecord],
}

fn rounded_summary(r: &RoundSummary) -> RoundSummary {
    RoundSummary {
        total_payment: round_money(r.total_payment),
        total_budget: round_money(r.total_budget),
        aggregate_utilization: round4(r.aggregate_utilization),
        total_device_utility: round_money(r.total_device_utility),
        ..r.clone()
    }
}

fn rounded_record(r: &TaskRecord) -> TaskRecord {
    TaskRecord {
        budget: round_money(r.budget),
        payment_total: round_money(r.payment_total),
        utilization: round4(r.utilization),
        device_utility: round_money(r.device_utility),
        ..r.clone()
    }
}

/// Aggregate JSON document: settings, per-mechanism means, per-round totals
/// and every task record with its quality set and winners.
pub fn summary_json(spec: &RunSpec, results: &RunResults) -> String {
    let mechanisms = spec
        .mechanisms
        .iter()
        .map(|m| {
            let rows: Vec<&RoundSummary> = results.rounds.iter().filter(|r| r.mechanism == m.name()).collect();
            let n = rows.len().max(1) as f64;
            MechanismMean {
                mechanism: m.name(),
                rounds: rows.len(),
                mean_utilization: round4(rows.iter().map(|r| r.aggregate_utilization).sum::<f64>() / n),
                mean_device_utility: round_money(rows.iter().map(|r| r.total_device_utility).sum::<f64>() / n),
                mean_winners: round4(rows.iter().map(|r| r.winners as f64).sum::<f64>() / n),
            }
        })
        .collect();
    let tasks: Vec<TaskRecord> = results.records.iter().map(rounded_record).collect();
    let summary = Summary {
        settings: Settings {
            seed: spec.seed,
            rounds: spec.rounds,
            variation: spec.variation.name(),
            kappa: spec.kappa,
            batch_size: spec.grading.batch_size,
            graders_per_batch: spec.grading.graders_per_batch,
        },
        mechanisms,
        rounds: results.rounds.iter().map(rounded_summary).collect(),
        tasks: &tasks,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summaries always serialize");
    s.push('\n');
    s
}
