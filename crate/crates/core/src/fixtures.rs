//! Small hand-built markets used by examples, tests and the CLI.
//!
//! `example1`/`example2`/`example3` share one five-task, twenty-device market.
//! `T1` and `T3` are the only tasks without a common device. On `T1` the
//! quality devices `E4`, `E3` and `E6` bid 10, 20 and 30 against a budget of
//! 50. `fig5` lowers `E6`'s bid to 21 so the first-loser bid caps the payment.
//! `bm-counterexample` is a single task where the benchmark mechanism rewards
//! an overbid.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::grading::{GraderModel, GradingParams};
use crate::market::{Device, DeviceId, Money, Scenario, Task, TaskId};
use crate::seed::RoundSeeds;

pub const FIXTURE_NAMES: [&str; 5] = ["example1", "example2", "example3", "fig5", "bm-counterexample"];

/// Master seed whose round-0 grading stream puts `E3`, `E4` and `E6` in
/// different batches of `T1`.
pub const EXAMPLE_MARKET_SEED: u64 = 0;

/// A bundled market with the settings it is meant to be run with.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub scenario: Scenario,
    pub grading: GradingParams,
    pub seed: u64,
    pub kappa: Option<usize>,
    pub epsilon: Money,
}

impl Fixture {
    /// Grading seed of round `round` under the fixture's master seed.
    pub fn grading_seed(&self, round: u64) -> u64 {
        RoundSeeds::new(self.seed, round).grading
    }
}

const BUDGETS: [Money; 5] = [50.0, 25.0, 30.0, 60.0, 15.0];

// (device number, quality, [(task number, bid)])
#[rustfmt::skip]
const EXAMPLE_DEVICES: [(usize, f64, &[(usize, Money)]); 20] = [
    (1, 0.30, &[(1, 35.0), (2, 8.0)]),
    (2, 0.60, &[(2, 12.0), (4, 18.0)]),
    (3, 0.95, &[(1, 20.0)]),
    (4, 0.90, &[(1, 10.0)]),
    (5, 0.55, &[(2, 6.0), (5, 4.0)]),
    (6, 0.85, &[(1, 30.0)]),
    (7, 0.35, &[(1, 40.0), (4, 22.0)]),
    (8, 0.50, &[(2, 9.0)]),
    (9, 0.40, &[(1, 28.0)]),
    (10, 0.25, &[(1, 45.0), (5, 6.0)]),
    (11, 0.65, &[(2, 14.0)]),
    (12, 0.70, &[(3, 9.0), (4, 15.0)]),
    (13, 0.20, &[(1, 15.0)]),
    (14, 0.42, &[(4, 25.0), (5, 5.0)]),
    (15, 0.45, &[(1, 22.0)]),
    (16, 0.33, &[(3, 12.0), (5, 7.0)]),
    (17, 0.52, &[(4, 12.0)]),
    (18, 0.61, &[(5, 3.0)]),
    (19, 0.58, &[(2, 11.0), (3, 7.0)]),
    (20, 0.47, &[(5, 8.0)]),
];

fn example_market_with(e6_bid_on_t1: Money) -> Scenario {
    let tasks = BUDGETS
        .iter()
        .enumerate()
        .map(|(i, &budget)| Task { id: TaskId(i), budget })
        .collect();
    let devices = EXAMPLE_DEVICES
        .iter()
        .map(|&(n, quality, bids)| {
            let valuations: BTreeMap<TaskId, Money> = bids
                .iter()
                .map(|&(t, b)| {
                    let b = if n == 6 && t == 1 { e6_bid_on_t1 } else { b };
                    (TaskId(t - 1), b)
                })
                .collect();
            Device { id: DeviceId(n - 1), valuations, latent_quality: quality }
        })
        .collect();
    Scenario::new(tasks, devices, EXAMPLE_MARKET_SEED, None).expect("fixture is valid")
}

/// The five-task, twenty-device market.
pub fn example_market() -> Scenario {
    example_market_with(30.0)
}

/// Batch schedule for `T1` that grades `{E3, E9, E15}` first.
pub fn example2_batches() -> Vec<Vec<DeviceId>> {
    [[3, 9, 15], [1, 4, 10], [6, 7, 13]]
        .iter()
        .map(|b| b.iter().map(|&n| DeviceId(n - 1)).collect())
        .collect()
}

/// One task with budget 100 and bids 10, 20, 30, 100.
pub fn bm_counterexample() -> Scenario {
    let tasks = alloc::vec![Task { id: TaskId(0), budget: 100.0 }];
    let devices = [10.0, 20.0, 30.0, 100.0]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut valuations = BTreeMap::new();
            valuations.insert(TaskId(0), v);
            Device { id: DeviceId(i), valuations, latent_quality: 0.5 }
        })
        .collect();
    Scenario::new(tasks, devices, 0, None).expect("fixture is valid")
}

fn example_grading() -> GradingParams {
    GradingParams {
        batch_size: 3,
        graders_per_batch: Some(6),
        model: GraderModel::Truthful,
    }
}

pub fn fixture(name: &str) -> Option<Fixture> {
    let bundled = |name, scenario| Fixture {
        name,
        scenario,
        grading: example_grading(),
        seed: EXAMPLE_MARKET_SEED,
        kappa: Some(4),
        epsilon: 10.0,
    };
    match name {
        "example1" => Some(bundled("example1", example_market())),
        "example2" => Some(bundled("example2", example_market())),
        "example3" => Some(bundled("example3", example_market())),
        "fig5" => Some(bundled("fig5", example_market_with(21.0))),
        "bm-counterexample" => Some(Fixture {
            name: "bm-counterexample",
            scenario: bm_counterexample(),
            // Singleton batches keep every device in the quality set.
            grading: GradingParams { batch_size: 1, ..example_grading() },
            seed: 0,
            kappa: Some(1),
            epsilon: 10.0,
        }),
        _ => None,
    }
}
