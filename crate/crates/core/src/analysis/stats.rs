//! Monte-Carlo checks of the win-count statistics.
//!
//! A device interested in `k` tasks is modelled as winning each one
//! independently with probability `p`. Then `E[wins] = p k`,
//! `P[wins >= 1] = 1 - (1 - p)^k >= 1 - e^{-p k}`, and the longest run of
//! consecutive losses grows logarithmically in `k`.

use rand::Rng;
use thiserror::Error;

use crate::seed::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("probability must lie strictly between 0 and 1, got {0}")]
    InvalidProbability(f64),
    #[error("{0} must be at least 1")]
    InvalidCount(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinStats {
    pub p: f64,
    pub k_i: usize,
    pub trials: usize,
    pub mean_wins: f64,
    pub p_at_least_one: f64,
    pub mean_longest_rejection: f64,
}

fn check(p: f64, k_i: usize, trials: usize) -> Result<(), StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidProbability(p));
    }
    if k_i == 0 {
        return Err(StatsError::InvalidCount("k_i"));
    }
    if trials == 0 {
        return Err(StatsError::InvalidCount("trials"));
    }
    Ok(())
}

pub fn bernoulli_win_stats(p: f64, k_i: usize, trials: usize, seed: u64) -> Result<WinStats, StatsError> {
    check(p, k_i, trials)?;
    let mut rng = rng_from_seed(seed);
    let mut wins_total = 0u64;
    let mut any_win = 0u64;
    let mut longest_total = 0u64;
    for _ in 0..trials {
        let (mut wins, mut run, mut longest) = (0u64, 0u64, 0u64);
        for _ in 0..k_i {
            if rng.random_bool(p) {
                wins += 1;
                run = 0;
            } else {
                run += 1;
                longest = longest.max(run);
            }
        }
        wins_total += wins;
        any_win += u64::from(wins > 0);
        longest_total += longest;
    }
    let n = trials as f64;
    Ok(WinStats {
        p,
        k_i,
        trials,
        mean_wins: wins_total as f64 / n,
        p_at_least_one: any_win as f64 / n,
        mean_longest_rejection: longest_total as f64 / n,
    })
}

/// Ratio of the mean longest rejection streak at `2 k` tasks to that at `k`.
/// Linear growth gives 2; logarithmic growth gives a ratio tending to 1.
pub fn longest_rejection_growth(p: f64, k_i: usize, trials: usize, seed: u64) -> Result<f64, StatsError> {
    let base = bernoulli_win_stats(p, k_i, trials, seed)?;
    let doubled = bernoulli_win_stats(p, 2 * k_i, trials, seed ^ 0x5eed)?;
    Ok(doubled.mean_longest_rejection / base.mean_longest_rejection)
}

/// Three standard errors of the mean win count.
pub fn mean_wins_band(p: f64, k_i: usize, trials: usize) -> f64 {
    3.0 * libm::sqrt(k_i as f64 * p * (1.0 - p) / trials as f64)
}

/// Three worst-case standard errors of an empirical probability.
pub fn probability_band(trials: usize) -> f64 {
    3.0 * libm::sqrt(0.25 / trials as f64)
}
