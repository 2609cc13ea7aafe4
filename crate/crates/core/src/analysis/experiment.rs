//! Repeated-round market experiments with paired seeds.
//!
//! Round `r` of an experiment seeded with `s` uses `derive_seed(s, r)` for
//! its scenario, grading and choice of misreporting devices. Every
//! mechanism and variation evaluated on the same round therefore sees the
//! same market and the same quality sets.

use alloc::vec::Vec;

use super::metrics::{compute_metrics, Metrics};
use super::AnalysisError;
use crate::conflict::{allocate_time_slots, build_conflict_graph, SlotAssignment};
use crate::grading::GradingParams;
use crate::market::{apply_mass_inflation, generate_scenario, Scenario, ScenarioConfig};
use crate::mechanism::{allocate_all, determine_quality_sets, Mechanism, MechanismOutcome, QualityStage};
use crate::seed::{derive_seed, RoundSeeds};

/// Share of devices that overbid, all by 35% of their true cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variation {
    None,
    Small,
    Medium,
    Large,
}

impl Variation {
    pub const ALL: [Variation; 4] = [Variation::None, Variation::Small, Variation::Medium, Variation::Large];

    /// `(fraction of devices, relative inflation)`.
    pub fn fraction_inflation(self) -> (f64, f64) {
        match self {
            Variation::None => (0.0, 0.0),
            Variation::Small => (0.15, 0.35),
            Variation::Medium => (0.30, 0.35),
            Variation::Large => (0.40, 0.35),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variation::None => "none",
            Variation::Small => "small",
            Variation::Medium => "medium",
            Variation::Large => "large",
        }
    }

    /// Suffix used in series labels such as `BM-S-var`.
    pub fn short(self) -> Option<char> {
        match self {
            Variation::None => None,
            Variation::Small => Some('S'),
            Variation::Medium => Some('M'),
            Variation::Large => Some('L'),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub grading: GradingParams,
    /// `None` uses `max_degree + 1`.
    pub kappa: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self { scenario, grading: GradingParams::default(), kappa: None }
    }
}

/// One curve of a comparison plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Series {
    pub mechanism: Mechanism,
    pub variation: Variation,
}

impl Series {
    pub fn label(&self) -> alloc::string::String {
        let base = match self.mechanism {
            Mechanism::TubeTap => "TUBE-TAP",
            Mechanism::Benchmark { .. } => "BM",
        };
        match self.variation.short() {
            None => alloc::string::String::from(base),
            Some(c) => alloc::format!("{base}-{c}-var"),
        }
    }
}

/// Grades `scenario` once under truthful bids, then runs every series on the
/// same quality sets with its own (possibly inflated) bids.
pub fn evaluate_series(
    scenario: &Scenario,
    slots: &SlotAssignment,
    grading: &GradingParams,
    series: &[Series],
    seeds: &RoundSeeds,
) -> Result<Vec<MechanismOutcome>, AnalysisError> {
    let stage = determine_quality_sets(scenario, scenario.truthful_bids(), slots, grading, seeds.grading)?;
    series
        .iter()
        .map(|s| {
            let (fraction, inflation) = s.variation.fraction_inflation();
            let bids = apply_mass_inflation(scenario, fraction, inflation, seeds.inflation);
            let rebid = QualityStage {
                quality_sets: stage
                    .quality_sets
                    .iter()
                    .map(|(&t, set)| set.rebid(&bids).map(|s| (t, s)))
                    .collect::<Result<_, _>>()?,
                warnings: stage.warnings.clone(),
            };
            Ok(allocate_all(scenario, &rebid, slots, s.mechanism)?)
        })
        .collect()
}

/// Evaluates every series on one generated round.
pub fn run_round(config: &ExperimentConfig, series: &[Series], round_seed: u64) -> Result<Vec<Metrics>, AnalysisError> {
    let seeds = RoundSeeds::from_round_seed(round_seed);
    let scenario = generate_scenario(&config.scenario, seeds.scenario)?;
    let graph = build_conflict_graph(&scenario);
    let slots = allocate_time_slots(&graph, config.kappa.unwrap_or_else(|| graph.default_kappa()))?;
    let outcomes = evaluate_series(&scenario, &slots, &config.grading, series, &seeds)?;
    Ok(outcomes.iter().map(|o| compute_metrics(o, &scenario)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single sample.
    pub std: f64,
}

impl MeanStd {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() < 2 {
            0.0
        } else {
            libm::sqrt(samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
        };
        Self { mean, std }
    }
}

/// Metrics averaged over rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedMetrics {
    pub rounds: usize,
    pub budget_utilization: MeanStd,
    pub device_utility: MeanStd,
    pub winners: MeanStd,
}

pub fn summarize(rounds: &[Metrics]) -> AveragedMetrics {
    let col = |f: fn(&Metrics) -> f64| MeanStd::of(&rounds.iter().map(f).collect::<Vec<_>>());
    AveragedMetrics {
        rounds: rounds.len(),
        budget_utilization: col(|m| m.aggregate_utilization),
        device_utility: col(|m| m.total_device_utility),
        winners: col(|m| m.winner_counts.iter().sum::<usize>() as f64),
    }
}

/// Runs `mechanism` under `variation` for `rounds` paired rounds.
pub fn manipulation_experiment(
    config: &ExperimentConfig,
    mechanism: Mechanism,
    variation: Variation,
    rounds: usize,
    seed: u64,
) -> Result<AveragedMetrics, AnalysisError> {
    if rounds == 0 {
        return Err(AnalysisError::InvalidConfig("rounds must be at least 1"));
    }
    let series = [Series { mechanism, variation }];
    let per_round = (0..rounds)
        .map(|r| run_round(config, &series, derive_seed(seed, r as u64)).map(|mut v| v.remove(0)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&per_round))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::DistributionSpec;
    use crate::mechanism::run_pipeline;

    fn small() -> ExperimentConfig {
        ExperimentConfig::new(ScenarioConfig::new(10, 100, DistributionSpec::uniform()))
    }

    #[test]
    fn variation_none_matches_plain_pipeline() {
        let cfg = small();
        let seed = derive_seed(4, 0);
        let via_round = run_round(&cfg, &[Series { mechanism: Mechanism::TubeTap, variation: Variation::None }], seed)
            .unwrap()
            .remove(0);
        let scenario = generate_scenario(&cfg.scenario, derive_seed(seed, 0)).unwrap();
        let g = build_conflict_graph(&scenario);
        let slots = allocate_time_slots(&g, g.default_kappa()).unwrap();
        let out = run_pipeline(&scenario, scenario.truthful_bids(), &slots, &cfg.grading, Mechanism::TubeTap, derive_seed(seed, 1))
            .unwrap();
        assert_eq!(via_round, compute_metrics(&out, &scenario));
    }

    #[test]
    fn inflated_round_matches_pipeline_on_inflated_bids() {
        let cfg = small();
        let seed = 77;
        let mech = Mechanism::Benchmark { epsilon: 10.0 };
        let via_round = run_round(&cfg, &[Series { mechanism: mech, variation: Variation::Large }], seed)
            .unwrap()
            .remove(0);
        let scenario = generate_scenario(&cfg.scenario, derive_seed(seed, 0)).unwrap();
        let bids = apply_mass_inflation(&scenario, 0.4, 0.35, derive_seed(seed, 2));
        let g = build_conflict_graph(&scenario);
        let slots = allocate_time_slots(&g, g.default_kappa()).unwrap();
        let out = run_pipeline(&scenario, &bids, &slots, &cfg.grading, mech, derive_seed(seed, 1)).unwrap();
        assert_eq!(via_round, compute_metrics(&out, &scenario));
    }

    #[test]
    fn averaged_metrics_are_deterministic() {
        let cfg = small();
        let a = manipulation_experiment(&cfg, Mechanism::TubeTap, Variation::Small, 3, 5).unwrap();
        let b = manipulation_experiment(&cfg, Mechanism::TubeTap, Variation::Small, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rounds, 3);
        assert!(a.budget_utilization.mean <= 1.0);
        assert!(manipulation_experiment(&cfg, Mechanism::TubeTap, Variation::None, 0, 5).is_err());
    }

    #[test]
    fn labels() {
        let bm = Mechanism::Benchmark { epsilon: 10.0 };
        assert_eq!(Series { mechanism: bm, variation: Variation::Medium }.label(), "BM-M-var");
        assert_eq!(Series { mechanism: Mechanism::TubeTap, variation: Variation::None }.label(), "TUBE-TAP");
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
        assert_eq!(MeanStd::of(&[4.0]).std, 0.0);
    }
}
