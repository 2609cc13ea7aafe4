use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::market::{DeviceId, Money, Scenario};
use crate::mechanism::MechanismOutcome;

/// Budget utilization and device utility of one mechanism run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Payments over budget, per task id.
    pub task_utilization: Vec<f64>,
    /// All payments over all budgets.
    pub aggregate_utilization: f64,
    pub total_payment: Money,
    pub total_budget: Money,
    /// Sum over devices of payment minus true valuation on won tasks.
    pub total_device_utility: Money,
    pub winner_counts: Vec<usize>,
}

/// Utilities are measured against the scenario's true valuations, whatever
/// bids produced `outcome`.
pub fn compute_metrics(outcome: &MechanismOutcome, scenario: &Scenario) -> Metrics {
    let truth = scenario.truthful_bids();
    let mut task_utilization = Vec::with_capacity(scenario.num_tasks());
    let mut winner_counts = Vec::with_capacity(scenario.num_tasks());
    let mut total_payment = 0.0;
    let mut total_device_utility = 0.0;
    for task in scenario.tasks() {
        let out = &outcome.per_task[task.id.0];
        let paid = out.payment_total();
        task_utilization.push(paid / task.budget);
        winner_counts.push(out.winner_count());
        total_payment += paid;
        for (&device, &pay) in &out.payments {
            total_device_utility += pay - truth.get(device, task.id).unwrap_or(0.0);
        }
    }
    let total_budget = scenario.total_budget();
    Metrics {
        task_utilization,
        aggregate_utilization: total_payment / total_budget,
        total_payment,
        total_budget,
        total_device_utility,
        winner_counts,
    }
}

/// Per device: wins across all outcomes divided by `k_i * rounds`, where
/// `k_i` is the size of its interest set. Devices without interests map to 0.
pub fn empirical_win_probability(outcomes: &[MechanismOutcome], scenario: &Scenario) -> BTreeMap<DeviceId, f64> {
    let mut wins = alloc::vec![0usize; scenario.num_devices()];
    for outcome in outcomes {
        for task in &outcome.per_task {
            for d in &task.winners {
                wins[d.0] += 1;
            }
        }
    }
    scenario
        .devices()
        .iter()
        .map(|d| {
            let trials = d.valuations.len() * outcomes.len();
            let p = if trials == 0 { 0.0 } else { wins[d.id.0] as f64 / trials as f64 };
            (d.id, p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict::{allocate_time_slots, build_conflict_graph, SlotAssignment};
    use crate::fixtures;
    use crate::market::TaskId;
    use crate::mechanism::{run_main_routine, TaskOutcome};
    use alloc::vec;

    fn single_task_outcome(payments: &[(usize, Money)]) -> MechanismOutcome {
        let winners = payments.iter().map(|&(d, _)| DeviceId(d)).collect();
        let payments = payments.iter().map(|&(d, p)| (DeviceId(d), p)).collect();
        MechanismOutcome {
            per_task: vec![TaskOutcome { task: TaskId(0), winners, payments }],
            quality_sets: BTreeMap::new(),
            slot_assignment: SlotAssignment::from_slots(vec![1], 1),
            warnings: vec![],
        }
    }

    fn one_task_market() -> Scenario {
        // Budget 50, true costs 10, 20, 30 and 100.
        let mut s = fixtures::bm_counterexample();
        let mut tasks = s.tasks().to_vec();
        tasks[0].budget = 50.0;
        s = Scenario::new(tasks, s.devices().to_vec(), 0, None).unwrap();
        s
    }

    #[test]
    fn full_budget_use() {
        let s = one_task_market();
        let m = compute_metrics(&single_task_outcome(&[(0, 25.0), (1, 25.0)]), &s);
        assert_eq!(m.task_utilization, vec![1.0]);
        assert_eq!(m.aggregate_utilization, 1.0);
        assert_eq!(m.total_device_utility, 15.0 + 5.0);
    }

    #[test]
    fn first_loser_payment_use() {
        let s = one_task_market();
        let m = compute_metrics(&single_task_outcome(&[(0, 21.0), (1, 21.0)]), &s);
        assert_eq!(m.task_utilization, vec![0.84]);
    }

    #[test]
    fn no_winners_means_zero() {
        let s = one_task_market();
        let m = compute_metrics(&single_task_outcome(&[]), &s);
        assert_eq!(m.aggregate_utilization, 0.0);
        assert_eq!(m.total_device_utility, 0.0);
        assert_eq!(m.winner_counts, vec![0]);
    }

    #[test]
    fn win_probability_extremes() {
        let s = one_task_market();
        let o = single_task_outcome(&[(0, 25.0)]);
        let p = empirical_win_probability(&[o.clone(), o], &s);
        assert_eq!(p[&DeviceId(0)], 1.0);
        assert_eq!(p[&DeviceId(2)], 0.0);
    }

    #[test]
    fn win_probability_on_example() {
        let f = fixtures::fixture("example3").unwrap();
        let s = &f.scenario;
        let slots = allocate_time_slots(&build_conflict_graph(s), 4).unwrap();
        let out = run_main_routine(s, s.truthful_bids(), &slots, &f.grading, f.grading_seed(0)).unwrap();
        let p = empirical_win_probability(&[out], s);
        // E4 and E6 only bid on T1.
        assert_eq!(p[&DeviceId(3)], 1.0);
        assert_eq!(p[&DeviceId(5)], 0.0);
    }
}
