//! Mechanism comparison sweeps over market sizes.
//!
//! A cell is one `(config, distribution)` pair. Each cell has its own master
//! seed derived from the sweep seed and the cell's parameters, so selecting a
//! subset of configurations reproduces those cells exactly. All series in a
//! cell share every round's market and quality sets.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use budget_auction_core::analysis::{run_round, summarize, AveragedMetrics, ExperimentConfig, Metrics, Series, Variation};
use budget_auction_core::seed::{derive_path, derive_seed};
use budget_auction_core::{BidDistribution, DistributionSpec, GradingParams, Mechanism, Money, ScenarioConfig};
use rayon::prelude::*;

/// Default `(requesters, executers)` market sizes.
pub const DEFAULT_CONFIGS: [(usize, usize); 6] =
    [(50, 500), (100, 1000), (150, 1500), (200, 2000), (250, 2500), (300, 3000)];

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub configs: Vec<(usize, usize)>,
    pub distributions: Vec<DistributionSpec>,
    pub rounds: usize,
    pub epsilon: Money,
    pub grading: GradingParams,
    pub kappa: Option<usize>,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            configs: DEFAULT_CONFIGS.to_vec(),
            distributions: vec![DistributionSpec::uniform(), DistributionSpec::normal()],
            rounds: 50,
            epsilon: 10.0,
            grading: GradingParams::default(),
            kappa: None,
            seed,
        }
    }

    /// TUBE-TAP and the benchmark, each under every variation.
    pub fn series(&self) -> Vec<Series> {
        [Mechanism::TubeTap, Mechanism::Benchmark { epsilon: self.epsilon }]
            .into_iter()
            .flat_map(|mechanism| Variation::ALL.into_iter().map(move |variation| Series { mechanism, variation }))
            .collect()
    }
}

/// Parses `50x500`.
pub fn parse_config(s: &str) -> Result<(usize, usize)> {
    let (n, m) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("expected <requesters>x<executers>, got {s:?}"))?;
    let n = n.trim().parse().with_context(|| format!("bad requester count in {s:?}"))?;
    let m = m.trim().parse().with_context(|| format!("bad executer count in {s:?}"))?;
    Ok((n, m))
}

pub fn distribution_name(d: &DistributionSpec) -> &'static str {
    match d.kind {
        BidDistribution::Uniform => "uniform",
        BidDistribution::Normal => "normal",
    }
}

fn cell_seed(master: u64, n: usize, m: usize, d: &DistributionSpec) -> u64 {
    let tag = match d.kind {
        BidDistribution::Uniform => 0,
        BidDistribution::Normal => 1,
    };
    derive_path(master, &[n as u64, m as u64, tag])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub requesters: usize,
    pub executers: usize,
    pub distribution: &'static str,
    pub series: Series,
    pub averaged: AveragedMetrics,
}

/// Runs every cell; rows come out sorted by config, distribution and series.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CellResult>> {
    let series = spec.series();
    let mut jobs = Vec::new();
    for (ci, &(n, m)) in spec.configs.iter().enumerate() {
        for (di, dist) in spec.distributions.iter().enumerate() {
            let cell = cell_seed(spec.seed, n, m, dist);
            jobs.extend((0..spec.rounds).map(|r| (ci, di, r, derive_seed(cell, r as u64))));
        }
    }
    let per_round: Vec<((usize, usize, usize), Vec<Metrics>)> = jobs
        .par_iter()
        .map(|&(ci, di, r, seed)| {
            let (n, m) = spec.configs[ci];
            let config = ExperimentConfig {
                scenario: ScenarioConfig::new(n, m, spec.distributions[di]),
                grading: spec.grading,
                kappa: spec.kappa,
            };
            let metrics = run_round(&config, &series, seed)
                .with_context(|| format!("{n}x{m} {} round {r}", distribution_name(&spec.distributions[di])))?;
            Ok(((ci, di, r), metrics))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (ci, &(n, m)) in spec.configs.iter().enumerate() {
        for (di, dist) in spec.distributions.iter().enumerate() {
            let rows: Vec<&Vec<Metrics>> = per_round
                .iter()
                .filter(|((c, d, _), _)| *c == ci && *d == di)
                .map(|(_, v)| v)
                .collect();
            for (si, s) in series.iter().enumerate() {
                let column: Vec<Metrics> = rows.iter().map(|v| v[si].clone()).collect();
                out.push(CellResult {
                    requesters: n,
                    executers: m,
                    distribution: distribution_name(dist),
                    series: *s,
                    averaged: summarize(&column),
                });
            }
        }
    }
    Ok(out)
}

fn write_table(path: &Path, rows: &[CellResult], value: impl Fn(&AveragedMetrics) -> (f64, f64), decimals: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["requesters", "executers", "distribution", "series", "mechanism", "variation", "rounds", "mean", "std"])?;
    for r in rows {
        let (mean, std) = value(&r.averaged);
        w.write_record([
            r.requesters.to_string(),
            r.executers.to_string(),
            r.distribution.to_string(),
            r.series.label(),
            r.series.mechanism.name().to_string(),
            r.series.variation.name().to_string(),
            r.averaged.rounds.to_string(),
            format!("{mean:.decimals$}"),
            format!("{std:.decimals$}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `budget_utilization.csv` and `device_utility.csv` into `dir`.
pub fn write_sweep(dir: &Path, rows: &[CellResult]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_table(&dir.join("budget_utilization.csv"), rows, |a| (a.budget_utilization.mean, a.budget_utilization.std), 4)?;
    write_table(&dir.join("device_utility.csv"), rows, |a| (a.device_utility.mean, a.device_utility.std), 2)?;
    Ok(())
}
