//! Allocation and payment rules and the per-slot pipeline that drives them.
//!
//! TUBE-TAP sorts a task's quality devices by bid and accepts the `i`-th
//! cheapest while its bid is at most `B / i`. All `k` winners are paid the
//! same amount, `min(B / k, b_{k+1})`, which keeps the total within `B`.
//!
//! The benchmark mechanism pays each winner the next bid in the ordering plus
//! a constant `epsilon`, drawing payments from a depleting budget. It is not
//! truthful and serves as the comparison baseline.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::conflict::SlotAssignment;
use crate::grading::{quality_determination, GradingError, GradingParams, QualitySet};
use crate::market::{BidProfile, DeviceId, Money, Scenario, TaskId};
use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("quality set is empty")]
    EmptyQualitySet,
    #[error("payment requires at least one winner")]
    NoWinners,
    #[error("budget must be positive and finite, got {0}")]
    InvalidBudget(Money),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Winners and payments for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task: TaskId,
    /// Winners in bid order.
    pub winners: Vec<DeviceId>,
    pub payments: BTreeMap<DeviceId, Money>,
}

impl TaskOutcome {
    pub fn empty(task: TaskId) -> Self {
        Self { task, winners: Vec::new(), payments: BTreeMap::new() }
    }

    pub fn winner_count(&self) -> usize {
        self.winners.len()
    }

    pub fn is_winner(&self, device: DeviceId) -> bool {
        self.payments.contains_key(&device)
    }

    pub fn payment(&self, device: DeviceId) -> Option<Money> {
        self.payments.get(&device).copied()
    }

    /// Sum of payments, accumulated in winner order.
    pub fn payment_total(&self) -> Money {
        self.winners.iter().fold(0.0, |acc, d| acc + self.payments[d])
    }
}

/// Result of the TUBE-TAP allocation scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub winners: Vec<DeviceId>,
    /// Bid of the first rejected device, if any device was rejected.
    pub first_losing_bid: Option<Money>,
}

impl Allocation {
    pub fn k(&self) -> usize {
        self.winners.len()
    }
}

fn check_budget(budget: Money) -> Result<(), MechanismError> {
    if budget > 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(MechanismError::InvalidBudget(budget))
    }
}

/// Entries sorted by ascending bid, ties by lower device id.
fn sorted_by_bid(entries: impl IntoIterator<Item = (DeviceId, Money)>) -> Vec<(DeviceId, Money)> {
    let mut v: Vec<_> = entries.into_iter().collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v
}

fn repeated_sum(share: Money, k: usize) -> Money {
    (0..k).fold(0.0, |acc, _| acc + share)
}

/// `budget / k`, stepped down to the largest double whose `k`-fold sum does
/// not exceed `budget`.
///
/// Identical to the exact quotient whenever that is representable (e.g.
/// `50 / 2`), and otherwise at most a few ulps below it.
pub fn fair_share(budget: Money, k: usize) -> Money {
    debug_assert!(k >= 1);
    let mut share = budget / k as f64;
    while repeated_sum(share, k) > budget {
        share = share.next_down();
    }
    share
}

/// Proportional-share allocation over a quality set.
pub fn tubetap_allocate(quality: &QualitySet, budget: Money) -> Result<Allocation, MechanismError> {
    check_budget(budget)?;
    if quality.is_empty() {
        return Err(MechanismError::EmptyQualitySet);
    }
    let sorted = sorted_by_bid(quality.entries());
    let k = sorted
        .iter()
        .enumerate()
        .take_while(|(i, (_, bid))| *bid <= fair_share(budget, i + 1))
        .count();
    Ok(Allocation {
        winners: sorted[..k].iter().map(|(d, _)| *d).collect(),
        first_losing_bid: sorted.get(k).map(|(_, b)| *b),
    })
}

/// Uniform per-winner payment `min(B / k, b_{k+1})`, or `B / k` when every
/// quality device won.
pub fn tubetap_payments(k: usize, budget: Money, first_losing_bid: Option<Money>) -> Result<Money, MechanismError> {
    check_budget(budget)?;
    if k == 0 {
        return Err(MechanismError::NoWinners);
    }
    let share = fair_share(budget, k);
    Ok(first_losing_bid.map_or(share, |b| share.min(b)))
}

/// Allocation and payment for one task under TUBE-TAP.
pub fn tubetap(quality: &QualitySet, budget: Money) -> Result<TaskOutcome, MechanismError> {
    let alloc = tubetap_allocate(quality, budget)?;
    if alloc.k() == 0 {
        return Ok(TaskOutcome::empty(quality.task));
    }
    let pay = tubetap_payments(alloc.k(), budget, alloc.first_losing_bid)?;
    let payments = alloc.winners.iter().map(|&d| (d, pay)).collect();
    Ok(TaskOutcome { task: quality.task, winners: alloc.winners, payments })
}

/// Benchmark auction: in bid order, device `i` wins and is paid
/// `b_{i+1} + epsilon` if that still fits in the remaining budget. The last
/// device in the ordering has no successor and never wins.
pub fn benchmark_mechanism(
    task: TaskId,
    entries: &[(DeviceId, Money)],
    budget: Money,
    epsilon: Money,
) -> TaskOutcome {
    let sorted = sorted_by_bid(entries.iter().copied());
    let mut out = TaskOutcome::empty(task);
    let mut spent = 0.0;
    for pair in sorted.windows(2) {
        let (device, _) = pair[0];
        let payment = pair[1].1 + epsilon;
        if spent + payment <= budget {
            spent += payment;
            out.winners.push(device);
            out.payments.insert(device, payment);
        }
    }
    out
}

/// Largest `k` such that the `k` smallest bids sum to at most `budget`.
///
/// This is the maximum number of devices any budget-feasible allocation that
/// pays at least each bid can hire.
pub fn optimal_winner_count(bids: &[Money], budget: Money) -> usize {
    let mut sorted = bids.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    sorted
        .iter()
        .take_while(|&&b| {
            total += b;
            total <= budget
        })
        .count()
}

/// Which allocation and payment rule to run on each quality set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    TubeTap,
    Benchmark { epsilon: Money },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::TubeTap => "tubetap",
            Mechanism::Benchmark { .. } => "benchmark",
        }
    }

    pub fn run(&self, quality: &QualitySet, budget: Money) -> Result<TaskOutcome, MechanismError> {
        match *self {
            Mechanism::TubeTap => tubetap(quality, budget),
            Mechanism::Benchmark { epsilon } => {
                check_budget(budget)?;
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(MechanismError::InvalidParameter("epsilon must be finite and >= 0"));
                }
                let entries: Vec<_> = quality.entries().collect();
                Ok(benchmark_mechanism(quality.task, &entries, budget, epsilon))
            }
        }
    }
}

/// A task skipped by the pipeline together with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskWarning {
    pub task: TaskId,
    pub reason: GradingError,
}

/// Allocation and payments for every task of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome {
    /// Indexed by task id.
    pub per_task: Vec<TaskOutcome>,
    pub quality_sets: BTreeMap<TaskId, QualitySet>,
    pub slot_assignment: SlotAssignment,
    pub warnings: Vec<TaskWarning>,
}

impl MechanismOutcome {
    pub fn task(&self, task: TaskId) -> Option<&TaskOutcome> {
        self.per_task.get(task.0)
    }

    pub fn total_payment(&self) -> Money {
        self.per_task.iter().map(TaskOutcome::payment_total).sum()
    }

    /// Tasks won by `device`, with the payment received.
    pub fn wins_of(&self, device: DeviceId) -> impl Iterator<Item = (TaskId, Money)> + '_ {
        self.per_task
            .iter()
            .filter_map(move |o| o.payment(device).map(|p| (o.task, p)))
    }
}

/// Quality sets of all tasks, plus the tasks that could not be graded.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityStage {
    pub quality_sets: BTreeMap<TaskId, QualitySet>,
    pub warnings: Vec<TaskWarning>,
}

/// Runs peer grading for every task, slot by slot. Task `t` is graded with
/// the stream `derive_seed(seed, t)`, so the result only depends on the seed
/// and the task, never on the bids' values.
pub fn determine_quality_sets(
    scenario: &Scenario,
    bids: &BidProfile,
    slots: &SlotAssignment,
    grading: &GradingParams,
    seed: u64,
) -> Result<QualityStage, MechanismError> {
    if slots.len() != scenario.num_tasks() {
        return Err(MechanismError::InvalidScenario(alloc::format!(
            "slot assignment covers {} of {} tasks",
            slots.len(),
            scenario.num_tasks()
        )));
    }
    let mut stage = QualityStage { quality_sets: BTreeMap::new(), warnings: Vec::new() };
    for task in slots.processing_order() {
        let interested = scenario
            .interest_set(task)
            .map_err(|e| MechanismError::InvalidScenario(alloc::format!("{e}")))?;
        let result = quality_determination(
            task,
            interested,
            bids,
            |d| scenario.quality(d),
            grading,
            derive_seed(seed, task.0 as u64),
        );
        match result {
            Ok(set) => {
                stage.quality_sets.insert(task, set);
            }
            Err(reason @ (GradingError::NoGradersAvailable { .. } | GradingError::NoInterestedDevices(_))) => {
                stage.warnings.push(TaskWarning { task, reason });
            }
            Err(GradingError::InvalidParameter(p)) => return Err(MechanismError::InvalidParameter(p)),
            Err(e) => return Err(MechanismError::InvalidScenario(alloc::format!("{e}"))),
        }
    }
    Ok(stage)
}

/// Runs `mechanism` on precomputed quality sets.
pub fn allocate_all(
    scenario: &Scenario,
    stage: &QualityStage,
    slots: &SlotAssignment,
    mechanism: Mechanism,
) -> Result<MechanismOutcome, MechanismError> {
    let per_task = scenario
        .tasks()
        .iter()
        .map(|t| match stage.quality_sets.get(&t.id) {
            Some(set) if !set.is_empty() => mechanism.run(set, t.budget),
            _ => Ok(TaskOutcome::empty(t.id)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MechanismOutcome {
        per_task,
        quality_sets: stage.quality_sets.clone(),
        slot_assignment: slots.clone(),
        warnings: stage.warnings.clone(),
    })
}

/// Grading followed by `mechanism` for every task, visiting slots in order.
pub fn run_pipeline(
    scenario: &Scenario,
    bids: &BidProfile,
    slots: &SlotAssignment,
    grading: &GradingParams,
    mechanism: Mechanism,
    seed: u64,
) -> Result<MechanismOutcome, MechanismError> {
    let stage = determine_quality_sets(scenario, bids, slots, grading, seed)?;
    allocate_all(scenario, &stage, slots, mechanism)
}

/// The full TUBE-TAP pipeline.
pub fn run_main_routine(
    scenario: &Scenario,
    bids: &BidProfile,
    slots: &SlotAssignment,
    grading: &GradingParams,
    seed: u64,
) -> Result<MechanismOutcome, MechanismError> {
    run_pipeline(scenario, bids, slots, grading, Mechanism::TubeTap, seed)
}

/// Sum over won tasks of payment minus true valuation.
pub fn device_utility(outcome: &MechanismOutcome, device: DeviceId, true_valuations: &BidProfile) -> Money {
    outcome
        .wins_of(device)
        .map(|(task, pay)| pay - true_valuations.get(device, task).unwrap_or(0.0))
        .sum()
}
