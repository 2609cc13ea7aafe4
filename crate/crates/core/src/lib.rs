//! Budget-feasible, truthful task assignment for crowdsourcing markets.
//!
//! Task requesters publish one task each with a public budget. Devices report
//! private per-task costs. The pipeline places conflicting tasks into distinct
//! time slots, filters each task's interested devices down to a quality set by
//! peer grading, and then runs a proportional-share reverse auction over the
//! quality set so the total payment never exceeds the task budget.
//!
//! A non-truthful benchmark auction and an analysis layer (metrics, deviation
//! search, Monte-Carlo win statistics) are included for comparison studies.
//!
//! The crate is `no_std` and only needs `alloc`. All randomness flows through
//! explicit 64-bit seeds, so every operation is reproducible.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod conflict;
pub mod fixtures;
pub mod grading;
pub mod market;
pub mod mechanism;
pub mod seed;

pub use conflict::{
    allocate_time_slots, build_conflict_graph, verify_assignment, ConflictGraph, GraphError,
    SlotAssignment,
};
pub use grading::{
    plurality_winner, quality_determination, simulate_rankings, GraderModel, GradingError,
    GradingParams, QualitySet, RankedList,
};
pub use market::{
    apply_deviation, apply_mass_inflation, generate_scenario, BidDistribution, BidProfile, Device,
    DeviceId, DistributionSpec, MarketError, Money, Scenario, ScenarioConfig, Task, TaskId,
};
pub use mechanism::{
    benchmark_mechanism, device_utility, optimal_winner_count, run_main_routine, run_pipeline,
    tubetap_allocate, tubetap_payments, Mechanism, MechanismError, MechanismOutcome, TaskOutcome,
};
