//! Named property suites with pass/fail reports.
//!
//! Every suite is deterministic in its seed. Sizes default to the documented
//! values below; `instances` overrides the main count of a suite.

use std::fmt;

use anyhow::Result;
use budget_auction_core::analysis::{
    bernoulli_win_stats, deviation_gain, mean_wins_band, probability_band, longest_rejection_growth, replay_deviation,
    truthfulness_search, SearchConfig, PROFIT_TOLERANCE,
};
use budget_auction_core::fixtures;
use budget_auction_core::mechanism::tubetap;
use budget_auction_core::seed::{derive_path, derive_seed, rng_from_seed, RoundSeeds};
use budget_auction_core::{
    allocate_time_slots, build_conflict_graph, generate_scenario, optimal_winner_count, run_pipeline, verify_assignment,
    ConflictGraph, DeviceId, DistributionSpec, GradingParams, Mechanism, Money, QualitySet, ScenarioConfig, TaskId,
};
use rand::Rng;

pub const TRUTHFULNESS_INSTANCES: usize = 1_000;
pub const DEVIATIONS_PER_INSTANCE: usize = 50;
pub const BUDGET_INSTANCES: usize = 10_000;
pub const PIPELINE_RUNS: usize = 200;
pub const COLORING_GRAPHS: usize = 1_000;
pub const LEMMA_TRIALS: usize = 100_000;
pub const LEMMA_PROBABILITIES: [f64; 3] = [0.25, 0.5, 0.693];
pub const LEMMA_TASK_COUNTS: [usize; 3] = [5, 10, 20];

/// Counterexamples kept per check.
const MAX_COUNTEREXAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Truthfulness,
    Budget,
    Approx,
    Coloring,
    Lemmas,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Truthfulness, Suite::Budget, Suite::Approx, Suite::Coloring, Suite::Lemmas];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Truthfulness => "truthfulness",
            Suite::Budget => "budget",
            Suite::Approx => "approx",
            Suite::Coloring => "coloring",
            Suite::Lemmas => "lemmas",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub counterexamples: Vec<String>,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into(), counterexamples: Vec::new() }
    }

    fn with_counterexamples(mut self, c: Vec<String>) -> Self {
        self.counterexamples = c;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            for x in &c.counterexamples {
                writeln!(f, "    counterexample: {x}")?;
            }
        }
        write!(f, "suite {}: {}", self.suite.name(), if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Mechanism under test for the truthfulness suite.
    pub mechanism: Mechanism,
    pub instances: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, mechanism: Mechanism::TubeTap, instances: None }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Truthfulness => truthfulness_checks(opts)?,
        Suite::Budget => budget_checks(opts)?,
        Suite::Approx => approx_checks(opts)?,
        Suite::Coloring => coloring_checks(opts)?,
        Suite::Lemmas => lemma_checks(opts)?,
    };
    Ok(SuiteReport { suite, checks })
}

/// One task with `n <= 10` quality devices, bids U[80, 150] and budget
/// U[400, 600].
pub fn random_single_task(seed: u64) -> (QualitySet, Money) {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(1..=10usize);
    let bids = (0..n).map(|_| rng.random_range(80.0..=150.0)).collect();
    let budget = rng.random_range(400.0..=600.0);
    (QualitySet::new(TaskId(0), (0..n).map(DeviceId).collect(), bids), budget)
}

fn instance_seeds(opts: &VerifyOptions, default: usize, stream: u64) -> impl Iterator<Item = u64> {
    let base = derive_seed(opts.seed, stream);
    (0..opts.instances.unwrap_or(default) as u64).map(move |i| derive_seed(base, i))
}

fn describe(set: &QualitySet, budget: Money) -> String {
    let bids: Vec<String> = set.member_bids.iter().map(|b| format!("{b:.4}")).collect();
    format!("budget {budget:.4}, bids [{}]", bids.join(", "))
}

fn truthfulness_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let config = SearchConfig::default();
    let instances = opts.instances.unwrap_or(TRUTHFULNESS_INSTANCES);
    let report = truthfulness_search(&config, opts.mechanism, instances, DEVIATIONS_PER_INSTANCE, opts.seed)?;
    let replay_ok = report
        .profitable_found
        .iter()
        .take(MAX_COUNTEREXAMPLES)
        .all(|r| replay_deviation(&config, opts.mechanism, r).map(|g| g == r.gain).unwrap_or(false));
    let examples: Vec<String> = report
        .profitable_found
        .iter()
        .take(MAX_COUNTEREXAMPLES)
        .map(|r| {
            format!(
                "instance seed {}: {} on {} bids {:.4} instead of {:.4}, gain {:.4}",
                r.instance_seed, r.device, r.task, r.deviated_bid, r.original_bid, r.gain
            )
        })
        .collect();
    let detail = format!(
        "{} instances, {} deviations, {} profitable",
        report.instances_tested,
        report.deviations_tested,
        report.profitable_found.len()
    );
    let mut checks = Vec::new();
    match opts.mechanism {
        Mechanism::TubeTap => {
            checks.push(
                Check::new("no profitable deviation against tubetap", report.profitable_found.is_empty(), detail)
                    .with_counterexamples(examples),
            );
        }
        Mechanism::Benchmark { epsilon } => {
            let s = fixtures::bm_counterexample();
            let set = QualitySet::new(TaskId(0), (0..4).map(DeviceId).collect(), vec![10.0, 20.0, 30.0, 100.0]);
            let stored = deviation_gain(opts.mechanism, &set, s.tasks()[0].budget, DeviceId(0), 10.0, 25.0)?;
            checks.push(
                Check::new(
                    "random search finds a profitable deviation against benchmark",
                    !report.profitable_found.is_empty(),
                    detail,
                )
                .with_counterexamples(examples),
            );
            checks.push(Check::new(
                "stored counterexample is profitable",
                stored > PROFIT_TOLERANCE,
                format!("bids 10/20/30/100, budget 100, epsilon {epsilon}: E1 bidding 25 gains {stored:.2}"),
            ));
        }
    }
    checks.push(Check::new("recorded deviations replay", replay_ok, "replayed up to 10 records from their seeds"));
    Ok(checks)
}

fn budget_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for mechanism in [Mechanism::TubeTap, Mechanism::Benchmark { epsilon: 10.0 }] {
        let (mut violations, mut ir_violations, mut tested) = (Vec::new(), Vec::new(), 0usize);
        for seed in instance_seeds(opts, BUDGET_INSTANCES, 1) {
            let (set, budget) = random_single_task(seed);
            let out = mechanism.run(&set, budget)?;
            tested += 1;
            if out.payment_total() > budget {
                violations.push(format!("{}: paid {:.6}", describe(&set, budget), out.payment_total()));
            }
            for (&d, &pay) in &out.payments {
                if pay < set.bid_of(d).unwrap_or(f64::INFINITY) {
                    ir_violations.push(format!("{}: {d} paid {pay:.6}", describe(&set, budget)));
                }
            }
        }
        checks.push(
            Check::new(
                format!("{} payments within task budget", mechanism.name()),
                violations.is_empty(),
                format!("{tested} single-task instances, {} violations", violations.len()),
            )
            .with_counterexamples(violations.into_iter().take(MAX_COUNTEREXAMPLES).collect()),
        );
        checks.push(
            Check::new(
                format!("{} winners paid at least their bid", mechanism.name()),
                ir_violations.is_empty(),
                format!("{tested} single-task instances, {} violations", ir_violations.len()),
            )
            .with_counterexamples(ir_violations.into_iter().take(MAX_COUNTEREXAMPLES).collect()),
        );
    }
    checks.extend(pipeline_checks(opts)?);
    Ok(checks)
}

/// Truthful-bid pipeline runs on generated markets: per-task and global
/// budget feasibility and non-negative device utility.
fn pipeline_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let cfg = ScenarioConfig::new(10, 100, DistributionSpec::uniform());
    let grading = GradingParams::default();
    let runs = PIPELINE_RUNS;
    let (mut budget_bad, mut utility_bad) = (Vec::new(), Vec::new());
    let base = derive_seed(opts.seed, 2);
    for r in 0..runs as u64 {
        let seeds = RoundSeeds::new(base, r);
        let s = generate_scenario(&cfg, seeds.scenario)?;
        let g = build_conflict_graph(&s);
        let slots = allocate_time_slots(&g, g.default_kappa())?;
        for mechanism in [Mechanism::TubeTap, Mechanism::Benchmark { epsilon: 10.0 }] {
            let out = run_pipeline(&s, s.truthful_bids(), &slots, &grading, mechanism, seeds.grading)?;
            for t in &out.per_task {
                let budget = s.tasks()[t.task.0].budget;
                if t.payment_total() > budget {
                    budget_bad.push(format!("round {r} {} {}: {:.6} > {budget:.6}", mechanism.name(), t.task, t.payment_total()));
                }
            }
            if out.total_payment() > s.total_budget() {
                budget_bad.push(format!("round {r} {}: global total over budget", mechanism.name()));
            }
            for d in s.devices() {
                let u = budget_auction_core::device_utility(&out, d.id, s.truthful_bids());
                if u < 0.0 {
                    utility_bad.push(format!("round {r} {} {}: utility {u:.6}", mechanism.name(), d.id));
                }
            }
        }
    }
    Ok(vec![
        Check::new(
            "pipeline payments within every budget and in total",
            budget_bad.is_empty(),
            format!("{runs} markets of 10 tasks and 100 devices, both mechanisms"),
        )
        .with_counterexamples(budget_bad.into_iter().take(MAX_COUNTEREXAMPLES).collect()),
        Check::new(
            "truthful devices never lose utility",
            utility_bad.is_empty(),
            format!("{runs} markets, every device, both mechanisms"),
        )
        .with_counterexamples(utility_bad.into_iter().take(MAX_COUNTEREXAMPLES).collect()),
    ])
}

/// Every bid list of length 1 to 4 over 1..=10, against budgets 1..=20.
pub fn exhaustive_lists() -> Vec<Vec<Money>> {
    let mut out: Vec<Vec<Money>> = Vec::new();
    let mut frontier: Vec<Vec<Money>> = vec![Vec::new()];
    for _ in 0..4 {
        frontier = frontier
            .iter()
            .flat_map(|l| (1..=10).map(move |b| [l.as_slice(), &[b as Money]].concat()))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn approx_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut instances: Vec<(Vec<Money>, Money)> = instance_seeds(opts, BUDGET_INSTANCES, 1)
        .map(|seed| {
            let (set, budget) = random_single_task(seed);
            (set.member_bids, budget)
        })
        .collect();
    let random = instances.len();
    for bids in exhaustive_lists() {
        instances.extend((1..=20).map(|budget| (bids.clone(), budget as Money)));
    }
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for (bids, budget) in &instances {
        let set = QualitySet::new(TaskId(0), (0..bids.len()).map(DeviceId).collect(), bids.clone());
        let om = tubetap(&set, *budget)?.winner_count();
        let opt = optimal_winner_count(bids, *budget);
        if om > 0 {
            worst = worst.max(opt as f64 / om as f64);
        }
        if opt > 2 * om {
            bad.push(format!("{}: opt {opt}, tubetap {om}", describe(&set, *budget)));
        }
    }
    Ok(vec![Check::new(
        "optimal winner count at most twice tubetap's",
        bad.is_empty(),
        format!(
            "{random} random and {} exhaustive instances, max ratio {worst:.4}",
            instances.len() - random
        ),
    )
    .with_counterexamples(bad.into_iter().take(MAX_COUNTEREXAMPLES).collect())])
}

/// `G(n, 0.2)` with `n` uniform in `1..=50`.
pub fn random_graph(seed: u64) -> ConflictGraph {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(1..=50usize);
    let mut g = ConflictGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.2) {
                g.add_edge(i, j).expect("indices in range");
            }
        }
    }
    g
}

fn coloring_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut bad = Vec::new();
    let mut tested = 0;
    for seed in instance_seeds(opts, COLORING_GRAPHS, 3) {
        let g = random_graph(seed);
        let kappa = g.default_kappa();
        tested += 1;
        match allocate_time_slots(&g, kappa) {
            Ok(a) if verify_assignment(&g, &a) && a.max_slot() <= kappa => {}
            Ok(_) => bad.push(format!("graph seed {seed}: improper assignment")),
            Err(e) => bad.push(format!("graph seed {seed}: {e}")),
        }
    }
    Ok(vec![Check::new(
        "max-degree-plus-one slots always suffice",
        bad.is_empty(),
        format!("{tested} random graphs, {} violations", bad.len()),
    )
    .with_counterexamples(bad.into_iter().take(MAX_COUNTEREXAMPLES).collect())])
}

fn lemma_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let trials = opts.instances.unwrap_or(LEMMA_TRIALS);
    let mut checks = Vec::new();
    for (pi, &p) in LEMMA_PROBABILITIES.iter().enumerate() {
        for (ki, &k) in LEMMA_TASK_COUNTS.iter().enumerate() {
            let s = bernoulli_win_stats(p, k, trials, derive_path(opts.seed, &[4, pi as u64, ki as u64]))?;
            let mean_band = mean_wins_band(p, k, trials);
            let expected = p * k as f64;
            checks.push(Check::new(
                format!("mean wins p={p} k={k}"),
                (s.mean_wins - expected).abs() <= mean_band,
                format!("{:.4} vs {expected:.4} (band {mean_band:.4})", s.mean_wins),
            ));
            let band = probability_band(trials);
            let bound = 1.0 - (-p * k as f64).exp();
            let exact = 1.0 - (1.0 - p).powi(k as i32);
            checks.push(Check::new(
                format!("at least one win p={p} k={k}"),
                s.p_at_least_one >= bound - band && (s.p_at_least_one - exact).abs() <= band,
                format!("{:.5} vs bound {bound:.5}, exact {exact:.5} (band {band:.5})", s.p_at_least_one),
            ));
        }
    }
    let ratio = longest_rejection_growth(0.5, 64, trials.min(20_000), derive_seed(opts.seed, 7))?;
    checks.push(Check::new(
        "longest rejection streak grows sublinearly",
        ratio > 1.0 && ratio < 1.5,
        format!("mean streak ratio {ratio:.4} when doubling 64 tasks"),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_list_count() {
        assert_eq!(exhaustive_lists().len(), 10 + 100 + 1000 + 10_000);
    }

    #[test]
    fn random_instances_are_in_range() {
        for i in 0..200 {
            let (set, budget) = random_single_task(i);
            assert!((1..=10).contains(&set.len()));
            assert!((400.0..=600.0).contains(&budget));
            assert!(set.member_bids.iter().all(|b| (80.0..=150.0).contains(b)));
        }
    }

    #[test]
    fn small_suites_pass() {
        let opts = VerifyOptions { instances: Some(50), ..VerifyOptions::default() };
        for suite in [Suite::Budget, Suite::Approx, Suite::Coloring] {
            let r = run_suite(suite, &opts).unwrap();
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn benchmark_truthfulness_suite_passes_by_finding_deviations() {
        let opts = VerifyOptions { instances: Some(30), mechanism: Mechanism::Benchmark { epsilon: 10.0 }, seed: 0 };
        let r = run_suite(Suite::Truthfulness, &opts).unwrap();
        assert!(r.passed(), "{r}");
        assert!(!r.checks[0].counterexamples.is_empty());
    }
}
