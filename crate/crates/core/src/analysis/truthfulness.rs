//! Randomised search for profitable unilateral deviations.
//!
//! Each instance is a generated scenario graded once under truthful bids. A
//! deviation replaces one quality device's bid on one task and reruns that
//! task's auction with the quality set held fixed (grading never reads bids).
//! The gain is the change in the device's utility measured against its true
//! valuation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use super::AnalysisError;
use crate::conflict::{allocate_time_slots, build_conflict_graph};
use crate::grading::{GradingParams, QualitySet};
use crate::market::{generate_scenario, DeviceId, DistributionSpec, Money, Scenario, ScenarioConfig, TaskId};
use crate::mechanism::{determine_quality_sets, fair_share, Mechanism};
use crate::seed::{derive_seed, rng_from_seed, RoundSeeds};

/// Gains at or below this are treated as ties.
pub const PROFIT_TOLERANCE: f64 = 1e-9;

const DELTAS: [f64; 8] = [0.01, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub scenario: ScenarioConfig,
    pub grading: GradingParams,
}

impl Default for SearchConfig {
    /// Five tasks, sixty devices, default uniform bid and budget ranges.
    fn default() -> Self {
        let mut scenario = ScenarioConfig::new(5, 60, DistributionSpec::uniform());
        scenario.interest_hi = 3;
        Self { scenario, grading: GradingParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRecord {
    pub instance_seed: u64,
    pub device: DeviceId,
    pub task: TaskId,
    pub original_bid: Money,
    pub deviated_bid: Money,
    pub gain: Money,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationReport {
    pub instances_tested: usize,
    pub deviations_tested: usize,
    pub profitable_found: Vec<DeviationRecord>,
}

impl DeviationReport {
    pub fn max_gain(&self) -> Option<Money> {
        self.profitable_found.iter().map(|r| r.gain).reduce(f64::max)
    }
}

struct Instance {
    scenario: Scenario,
    quality_sets: BTreeMap<TaskId, QualitySet>,
}

fn build_instance(config: &SearchConfig, instance_seed: u64) -> Result<Instance, AnalysisError> {
    let seeds = RoundSeeds::from_round_seed(instance_seed);
    let scenario = generate_scenario(&config.scenario, seeds.scenario)?;
    let graph = build_conflict_graph(&scenario);
    let slots = allocate_time_slots(&graph, graph.default_kappa())?;
    let stage = determine_quality_sets(
        &scenario,
        scenario.truthful_bids(),
        &slots,
        &config.grading,
        seeds.grading,
    )?;
    Ok(Instance { scenario, quality_sets: stage.quality_sets })
}

fn utility(mechanism: Mechanism, set: &QualitySet, budget: Money, device: DeviceId, value: Money) -> Result<Money, AnalysisError> {
    let out = mechanism.run(set, budget)?;
    Ok(out.payment(device).map_or(0.0, |p| p - value))
}

/// Utility change for `device` when it reports `new_bid` instead of its
/// current bid in `set`, given its true cost `value`.
pub fn deviation_gain(
    mechanism: Mechanism,
    set: &QualitySet,
    budget: Money,
    device: DeviceId,
    value: Money,
    new_bid: Money,
) -> Result<Money, AnalysisError> {
    let deviated = set
        .with_bid(device, new_bid)
        .ok_or(AnalysisError::InvalidConfig("deviating device is not in the quality set"))?;
    Ok(utility(mechanism, &deviated, budget, device, value)? - utility(mechanism, set, budget, device, value)?)
}

/// Alternative reports for `device`: relative perturbations of its true cost,
/// the other members' bids and points just around them, and points around
/// the mechanism's acceptance thresholds.
pub fn candidate_bids(mechanism: Mechanism, set: &QualitySet, budget: Money, device: DeviceId, value: Money) -> Vec<Money> {
    let mut out = Vec::new();
    for d in DELTAS {
        out.push(value * (1.0 + d));
        out.push(value * (1.0 - d));
    }
    let nudge = |x: Money| [x.next_down(), x, x.next_up(), x * (1.0 - 1e-6), x * (1.0 + 1e-6)];
    for (other, bid) in set.entries() {
        if other != device {
            out.extend(nudge(bid));
            if let Mechanism::Benchmark { epsilon } = mechanism {
                out.extend(nudge(bid - epsilon));
            }
        }
    }
    if mechanism == Mechanism::TubeTap {
        for i in 1..=set.len() {
            out.extend(nudge(fair_share(budget, i)));
        }
    }
    out.retain(|b| *b > 0.0 && b.is_finite());
    out
}

/// Searches `instances` random scenarios with `deviations_per_instance`
/// random single-bid deviations each.
pub fn truthfulness_search(
    config: &SearchConfig,
    mechanism: Mechanism,
    instances: usize,
    deviations_per_instance: usize,
    seed: u64,
) -> Result<DeviationReport, AnalysisError> {
    let mut report = DeviationReport::default();
    if deviations_per_instance == 0 {
        return Ok(report);
    }
    for i in 0..instances {
        let instance_seed = derive_seed(seed, i as u64);
        let inst = build_instance(config, instance_seed)?;
        report.instances_tested += 1;
        let pairs: Vec<(TaskId, DeviceId)> = inst
            .quality_sets
            .values()
            .flat_map(|s| s.members.iter().map(move |&d| (s.task, d)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let mut rng = rng_from_seed(derive_seed(instance_seed, 2));
        for _ in 0..deviations_per_instance {
            let (task, device) = pairs[rng.random_range(0..pairs.len())];
            let set = &inst.quality_sets[&task];
            let budget = inst.scenario.tasks()[task.0].budget;
            let value = inst.scenario.truthful_bids().get(device, task).expect("interest pair");
            let candidates = candidate_bids(mechanism, set, budget, device, value);
            let new_bid = candidates[rng.random_range(0..candidates.len())];
            let gain = deviation_gain(mechanism, set, budget, device, value, new_bid)?;
            report.deviations_tested += 1;
            if gain > PROFIT_TOLERANCE {
                report.profitable_found.push(DeviationRecord {
                    instance_seed,
                    device,
                    task,
                    original_bid: value,
                    deviated_bid: new_bid,
                    gain,
                });
            }
        }
    }
    Ok(report)
}

/// Rebuilds the instance behind `record` and recomputes the gain.
pub fn replay_deviation(config: &SearchConfig, mechanism: Mechanism, record: &DeviationRecord) -> Result<Money, AnalysisError> {
    let inst = build_instance(config, record.instance_seed)?;
    let set = inst
        .quality_sets
        .get(&record.task)
        .ok_or(AnalysisError::InvalidConfig("task has no quality set"))?;
    let value = inst
        .scenario
        .truthful_bids()
        .get(record.device, record.task)
        .ok_or(AnalysisError::InvalidConfig("not an interest pair"))?;
    let budget = inst.scenario.tasks()[record.task.0].budget;
    deviation_gain(mechanism, set, budget, record.device, value, record.deviated_bid)
}
