use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use budget_auction_core::analysis::Variation;
use budget_auction_core::fixtures::{self, FIXTURE_NAMES};
use budget_auction_core::{
    allocate_time_slots, build_conflict_graph, generate_scenario, BidDistribution, DistributionSpec, GraderModel,
    GradingParams, Mechanism, Money, Scenario, ScenarioConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::format::{scenario_from_json, scenario_to_json, write_edge_list};
use crate::run::{self, RunSpec, ScenarioSource};
use crate::sweep::{self, SweepSpec};
use crate::verify::{self, Suite, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "budget-auction", version, about = "Budget-feasible truthful task auction simulator")]
pub struct Cli {
    /// Master seed. Falls back to BUDGET_AUCTION_SEED, then to the scenario's own seed or 0.
    #[arg(long, global = true, env = "BUDGET_AUCTION_SEED")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random market and write it as JSON.
    Generate(GenerateArgs),
    /// Run the full pipeline for one or more rounds.
    Run(RunArgs),
    /// Run the mechanism comparison over the default market sizes.
    Sweep(SweepArgs),
    /// Run a property suite and report violations.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistributionArg {
    Uniform,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepDistributionArg {
    Uniform,
    Normal,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Tubetap,
    Benchmark,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariationArg {
    None,
    Small,
    Medium,
    Large,
}

impl From<VariationArg> for Variation {
    fn from(v: VariationArg) -> Self {
        match v {
            VariationArg::None => Variation::None,
            VariationArg::Small => Variation::Small,
            VariationArg::Medium => Variation::Medium,
            VariationArg::Large => Variation::Large,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Truthfulness,
    Budget,
    Approx,
    Coloring,
    Lemmas,
    All,
}

/// Bid and budget distribution flags.
#[derive(Debug, Clone, Args)]
pub struct DistributionFlags {
    #[arg(long, default_value_t = 80.0)]
    pub bid_lo: Money,
    #[arg(long, default_value_t = 150.0)]
    pub bid_hi: Money,
    #[arg(long, default_value_t = 110.0)]
    pub bid_mean: Money,
    #[arg(long, default_value_t = 15.0)]
    pub bid_std: Money,
    #[arg(long, default_value_t = 400.0)]
    pub budget_lo: Money,
    #[arg(long, default_value_t = 600.0)]
    pub budget_hi: Money,
    /// Smallest interest set per device.
    #[arg(long, default_value_t = 1)]
    pub interest_lo: usize,
    /// Largest interest set per device, capped at the number of tasks.
    #[arg(long, default_value_t = 5)]
    pub interest_hi: usize,
}

impl DistributionFlags {
    fn spec(&self, kind: BidDistribution) -> DistributionSpec {
        DistributionSpec {
            kind,
            uniform_lo: self.bid_lo,
            uniform_hi: self.bid_hi,
            normal_mean: self.bid_mean,
            normal_std: self.bid_std,
            budget_lo: self.budget_lo,
            budget_hi: self.budget_hi,
        }
    }

    fn scenario_config(&self, requesters: usize, executers: usize, kind: BidDistribution) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(requesters, executers, self.spec(kind));
        cfg.interest_lo = self.interest_lo;
        cfg.interest_hi = self.interest_hi.min(requesters.max(1));
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct MarketFlags {
    #[arg(long, default_value_t = 50)]
    pub requesters: usize,
    #[arg(long, default_value_t = 500)]
    pub executers: usize,
    #[arg(long, value_enum, default_value_t = DistributionArg::Uniform)]
    pub distribution: DistributionArg,
    #[command(flatten)]
    pub dist: DistributionFlags,
}

impl MarketFlags {
    fn config(&self) -> Result<ScenarioConfig> {
        let kind = match self.distribution {
            DistributionArg::Uniform => BidDistribution::Uniform,
            DistributionArg::Normal => BidDistribution::Normal,
        };
        let cfg = self.dist.scenario_config(self.requesters, self.executers, kind);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Peer-grading and mechanism flags shared by `run` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct MechanismFlags {
    /// Benchmark payment increment.
    #[arg(long)]
    pub epsilon: Option<Money>,
    /// Devices per grading batch.
    #[arg(long = "r")]
    pub r: Option<usize>,
    /// Graders per batch; all other interested devices when omitted.
    #[arg(long = "r-prime")]
    pub r_prime: Option<usize>,
    /// Standard deviation of grader noise; 0 makes graders exact.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of time slots; max degree + 1 when omitted.
    #[arg(long)]
    pub kappa: Option<usize>,
}

impl MechanismFlags {
    fn grading(&self, base: GradingParams) -> Result<GradingParams> {
        let mut g = base;
        if let Some(r) = self.r {
            g.batch_size = r;
        }
        if self.r_prime.is_some() {
            g.graders_per_batch = self.r_prime;
        }
        if let Some(noise) = self.noise {
            g.model = if noise == 0.0 { GraderModel::Truthful } else { GraderModel::Noisy { noise_std: noise } };
        }
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub market: MarketFlags,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Bundled market to run instead of a generated one.
    #[arg(long, conflicts_with = "scenario", value_parser = clap::builder::PossibleValuesParser::new(FIXTURE_NAMES))]
    pub fixture: Option<String>,
    /// Scenario JSON file to run instead of a generated one.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub market: MarketFlags,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, value_enum, default_value_t = MechanismArg::Tubetap)]
    pub mechanism: MechanismArg,
    #[arg(long, value_enum, default_value_t = VariationArg::None)]
    pub variation: VariationArg,
    #[command(flatten)]
    pub flags: MechanismFlags,
    /// Directory for results.csv and summary.json; CSV to standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also write the first round's conflict graph as an edge list.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Comma-separated `<requesters>x<executers>` list; all six default sizes when omitted.
    #[arg(long, value_delimiter = ',')]
    pub configs: Vec<String>,
    #[arg(long, value_enum, default_value_t = SweepDistributionArg::Both)]
    pub distribution: SweepDistributionArg,
    #[command(flatten)]
    pub dist: DistributionFlags,
    #[arg(long, default_value_t = 50)]
    pub rounds: usize,
    #[command(flatten)]
    pub flags: MechanismFlags,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: SuiteArg,
    /// Mechanism for the truthfulness suite. The benchmark passes only if a profitable deviation is found.
    #[arg(long, value_enum, default_value_t = MechanismArg::Tubetap)]
    pub mechanism: MechanismArg,
    #[arg(long)]
    pub epsilon: Option<Money>,
    /// Override the suite's main sample count.
    #[arg(long)]
    pub instances: Option<usize>,
}

const DEFAULT_EPSILON: Money = 10.0;

fn mechanisms(arg: MechanismArg, epsilon: Money) -> Vec<Mechanism> {
    let bm = Mechanism::Benchmark { epsilon };
    match arg {
        MechanismArg::Tubetap => vec![Mechanism::TubeTap],
        MechanismArg::Benchmark => vec![bm],
        MechanismArg::Both => vec![Mechanism::TubeTap, bm],
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Runs a parsed command. `Ok(false)` means a verification suite failed.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(args) => generate(cli.seed, &args).map(|_| true),
        Command::Run(args) => run_cmd(cli.seed, &args).map(|_| true),
        Command::Sweep(args) => sweep_cmd(cli.seed, &args).map(|_| true),
        Command::Verify(args) => verify_cmd(cli.seed, &args),
    }
}

fn generate(seed: Option<u64>, args: &GenerateArgs) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let scenario = generate_scenario(&args.market.config()?, seed)?;
    for w in scenario.warnings() {
        log::warn!("{w}");
    }
    let json = scenario_to_json(&scenario);
    match &args.out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            println!("wrote {} (seed {seed})", path.display());
        }
        None => {
            io::stdout().write_all(json.as_bytes())?;
            eprintln!("seed {seed}");
        }
    }
    Ok(())
}

fn run_cmd(seed: Option<u64>, args: &RunArgs) -> Result<()> {
    if args.rounds == 0 {
        bail!("--rounds must be at least 1");
    }
    let (source, base_grading, default_seed, default_kappa, default_epsilon) = if let Some(name) = &args.fixture {
        let f = fixtures::fixture(name).with_context(|| format!("unknown fixture {name}"))?;
        (ScenarioSource::Fixed(Box::new(f.scenario)), f.grading, f.seed, f.kappa, f.epsilon)
    } else if let Some(path) = &args.scenario {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let s: Scenario = scenario_from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        let seed = s.seed();
        (ScenarioSource::Fixed(Box::new(s)), GradingParams::default(), seed, None, DEFAULT_EPSILON)
    } else {
        (ScenarioSource::Generate(args.market.config()?), GradingParams::default(), 0, None, DEFAULT_EPSILON)
    };
    let spec = RunSpec {
        source,
        rounds: args.rounds,
        mechanisms: mechanisms(args.mechanism, args.flags.epsilon.unwrap_or(default_epsilon)),
        variation: args.variation.into(),
        grading: args.flags.grading(base_grading)?,
        kappa: args.flags.kappa.or(default_kappa),
        seed: seed.unwrap_or(default_seed),
    };
    if let Some(path) = &args.graph {
        let scenario = match &spec.source {
            ScenarioSource::Fixed(s) => (**s).clone(),
            ScenarioSource::Generate(cfg) => {
                generate_scenario(cfg, budget_auction_core::seed::RoundSeeds::new(spec.seed, 0).scenario)?
            }
        };
        let g = build_conflict_graph(&scenario);
        let kappa = spec.kappa.unwrap_or_else(|| g.default_kappa());
        let mut buf = Vec::new();
        write_edge_list(&g, kappa, &mut buf)?;
        write_file(path, &buf)?;
        // Surface an unusable kappa before the run does.
        allocate_time_slots(&g, kappa)?;
    }
    log::info!("running {} round(s) with seed {}", spec.rounds, spec.seed);
    let results = run::execute(&spec)?;
    match &args.out {
        Some(dir) => {
            let mut csv = Vec::new();
            run::write_csv(&results, &mut csv)?;
            write_file(&dir.join("results.csv"), &csv)?;
            write_file(&dir.join("summary.json"), run::summary_json(&spec, &results).as_bytes())?;
            for m in &spec.mechanisms {
                let rows: Vec<_> = results.rounds.iter().filter(|r| r.mechanism == m.name()).collect();
                let util = rows.iter().map(|r| r.aggregate_utilization).sum::<f64>() / rows.len() as f64;
                let utility = rows.iter().map(|r| r.total_device_utility).sum::<f64>() / rows.len() as f64;
                println!("{}: mean budget utilization {util:.4}, mean device utility {utility:.2}", m.name());
            }
            println!("wrote {}", dir.display());
        }
        None => run::write_csv(&results, io::stdout().lock())?,
    }
    Ok(())
}

fn sweep_cmd(seed: Option<u64>, args: &SweepArgs) -> Result<()> {
    let mut spec = SweepSpec::new(seed.unwrap_or(0));
    if !args.configs.is_empty() {
        spec.configs = args.configs.iter().map(|c| sweep::parse_config(c)).collect::<Result<_>>()?;
    }
    let kinds = match args.distribution {
        SweepDistributionArg::Uniform => vec![BidDistribution::Uniform],
        SweepDistributionArg::Normal => vec![BidDistribution::Normal],
        SweepDistributionArg::Both => vec![BidDistribution::Uniform, BidDistribution::Normal],
    };
    spec.distributions = kinds.into_iter().map(|k| args.dist.spec(k)).collect();
    for &(n, m) in &spec.configs {
        for d in &spec.distributions {
            args.dist.scenario_config(n, m, d.kind).validate()?;
        }
    }
    if args.rounds == 0 {
        bail!("--rounds must be at least 1");
    }
    spec.rounds = args.rounds;
    spec.epsilon = args.flags.epsilon.unwrap_or(DEFAULT_EPSILON);
    spec.grading = args.flags.grading(GradingParams::default())?;
    spec.kappa = args.flags.kappa;
    log::info!(
        "sweeping {} configuration(s) x {} distribution(s) x {} rounds",
        spec.configs.len(),
        spec.distributions.len(),
        spec.rounds
    );
    let rows = sweep::run_sweep(&spec)?;
    sweep::write_sweep(&args.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn verify_cmd(seed: Option<u64>, args: &VerifyArgs) -> Result<bool> {
    let suites: Vec<Suite> = match args.suite {
        SuiteArg::Truthfulness => vec![Suite::Truthfulness],
        SuiteArg::Budget => vec![Suite::Budget],
        SuiteArg::Approx => vec![Suite::Approx],
        SuiteArg::Coloring => vec![Suite::Coloring],
        SuiteArg::Lemmas => vec![Suite::Lemmas],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mechanism = match args.mechanism {
        MechanismArg::Tubetap => Mechanism::TubeTap,
        MechanismArg::Benchmark => Mechanism::Benchmark { epsilon: args.epsilon.unwrap_or(DEFAULT_EPSILON) },
        MechanismArg::Both => bail!("verify takes a single mechanism"),
    };
    let opts = VerifyOptions { seed: seed.unwrap_or(0), mechanism, instances: args.instances };
    let mut ok = true;
    for suite in suites {
        let report = verify::run_suite(suite, &opts)?;
        println!("{report}");
        ok &= report.passed();
    }
    Ok(ok)
}
