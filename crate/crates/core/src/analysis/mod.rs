//! Metrics, deviation search, manipulation experiments and win statistics.

mod experiment;
mod metrics;
mod stats;
mod truthfulness;

pub use experiment::{
    evaluate_series, manipulation_experiment, run_round, summarize, AveragedMetrics, ExperimentConfig, MeanStd, Series,
    Variation,
};
pub use metrics::{compute_metrics, empirical_win_probability, Metrics};
pub use stats::{
    bernoulli_win_stats, mean_wins_band, probability_band, longest_rejection_growth, StatsError, WinStats,
};
pub use truthfulness::{
    candidate_bids, deviation_gain, replay_deviation, truthfulness_search, DeviationRecord,
    DeviationReport, SearchConfig, PROFIT_TOLERANCE,
};

use thiserror::Error;

use crate::conflict::GraphError;
use crate::grading::GradingError;
use crate::market::MarketError;
use crate::mechanism::MechanismError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Grading(#[from] GradingError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
