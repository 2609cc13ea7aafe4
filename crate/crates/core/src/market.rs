//! Market entities and reproducible scenario generation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed};

/// Currency units. Comparisons are made on the exact binary value.
pub type Money = f64;

/// Index of a task (and of the requester that owns it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub usize);

/// Index of a device (task executer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId(pub usize);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0 + 1)
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0 + 1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{device} is not interested in {task}")]
    UnknownPair { device: DeviceId, task: TaskId },
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("bid must be a positive finite amount, got {0}")]
    InvalidBid(Money),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn invalid_config(msg: &str) -> MarketError {
    MarketError::InvalidConfig(String::from(msg))
}

fn invalid_scenario(msg: String) -> MarketError {
    MarketError::InvalidScenario(msg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub budget: Money,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: DeviceId,
    /// True cost per interested task. The key set is the interest set.
    pub valuations: BTreeMap<TaskId, Money>,
    /// Hidden quality in `[0, 1]` that simulated graders observe.
    pub latent_quality: f64,
}

impl Device {
    pub fn interests(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.valuations.keys().copied()
    }

    pub fn is_interested(&self, task: TaskId) -> bool {
        self.valuations.contains_key(&task)
    }

    pub fn valuation(&self, task: TaskId) -> Option<Money> {
        self.valuations.get(&task).copied()
    }
}

/// Reported bids keyed by `(device, task)` interest pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BidProfile {
    bids: BTreeMap<(DeviceId, TaskId), Money>,
}

impl BidProfile {
    pub fn get(&self, device: DeviceId, task: TaskId) -> Option<Money> {
        self.bids.get(&(device, task)).copied()
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((DeviceId, TaskId), Money)> + '_ {
        self.bids.iter().map(|(&k, &v)| (k, v))
    }

    pub(crate) fn insert(&mut self, device: DeviceId, task: TaskId, bid: Money) {
        self.bids.insert((device, task), bid);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidDistribution {
    Uniform,
    Normal,
}

/// Valuation and budget distributions used by [`generate_scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub kind: BidDistribution,
    pub uniform_lo: Money,
    pub uniform_hi: Money,
    pub normal_mean: Money,
    pub normal_std: Money,
    pub budget_lo: Money,
    pub budget_hi: Money,
}

impl DistributionSpec {
    /// Bids uniform in [80, 150], budgets uniform in [400, 600].
    pub const fn uniform() -> Self {
        Self {
            kind: BidDistribution::Uniform,
            uniform_lo: 80.0,
            uniform_hi: 150.0,
            normal_mean: 110.0,
            normal_std: 15.0,
            budget_lo: 400.0,
            budget_hi: 600.0,
        }
    }

    /// Bids normal with mean 110 and std 15, budgets uniform in [400, 600].
    pub const fn normal() -> Self {
        Self {
            kind: BidDistribution::Normal,
            ..Self::uniform()
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let finite = [
            self.uniform_lo,
            self.uniform_hi,
            self.normal_mean,
            self.normal_std,
            self.budget_lo,
            self.budget_hi,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(invalid_config("distribution parameters must be finite"));
        }
        if self.budget_lo <= 0.0 || self.budget_lo >= self.budget_hi {
            return Err(invalid_config("budget range must satisfy 0 < lo < hi"));
        }
        match self.kind {
            BidDistribution::Uniform => {
                if self.uniform_lo <= 0.0 || self.uniform_lo >= self.uniform_hi {
                    return Err(invalid_config("bid range must satisfy 0 < lo < hi"));
                }
            }
            BidDistribution::Normal => {
                if self.normal_std <= 0.0 {
                    return Err(invalid_config("normal std must be positive"));
                }
            }
        }
        Ok(())
    }
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Everything [`generate_scenario`] needs besides the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub requesters: usize,
    pub executers: usize,
    pub distribution: DistributionSpec,
    pub interest_lo: usize,
    pub interest_hi: usize,
}

impl ScenarioConfig {
    /// Interest sets default to 1 to 5 tasks, capped at `requesters`.
    pub const fn new(requesters: usize, executers: usize, distribution: DistributionSpec) -> Self {
        Self {
            requesters,
            executers,
            distribution,
            interest_lo: 1,
            interest_hi: if requesters < 5 { requesters } else { 5 },
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.requesters == 0 {
            return Err(invalid_config("at least one task requester is required"));
        }
        if self.executers == 0 {
            return Err(invalid_config("at least one task executer is required"));
        }
        if self.interest_lo == 0 || self.interest_lo > self.interest_hi {
            return Err(invalid_config("interest range must satisfy 1 <= lo <= hi"));
        }
        if self.interest_hi > self.requesters {
            return Err(invalid_config("interest range upper bound exceeds task count"));
        }
        self.distribution.validate()
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::new(50, 500, DistributionSpec::uniform())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioWarning {
    /// The model assumes many more devices than tasks.
    FewerDevicesThanTasks { tasks: usize, devices: usize },
    /// No device is interested in this task.
    DegenerateTask(TaskId),
}

impl fmt::Display for ScenarioWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioWarning::FewerDevicesThanTasks { tasks, devices } => {
                write!(f, "only {devices} devices for {tasks} tasks")
            }
            ScenarioWarning::DegenerateTask(t) => write!(f, "{t} has no interested devices"),
        }
    }
}

/// A full market instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    tasks: Vec<Task>,
    devices: Vec<Device>,
    truthful_bids: BidProfile,
    seed: u64,
    distribution: Option<DistributionSpec>,
    interested: Vec<Vec<DeviceId>>,
}

impl Scenario {
    /// Validates and indexes a scenario. Ids must equal their position.
    pub fn new(
        tasks: Vec<Task>,
        devices: Vec<Device>,
        seed: u64,
        distribution: Option<DistributionSpec>,
    ) -> Result<Self, MarketError> {
        for (i, t) in tasks.iter().enumerate() {
            if t.id != TaskId(i) {
                return Err(invalid_scenario(alloc::format!("task at position {i} has id {}", t.id.0)));
            }
            if !(t.budget > 0.0 && t.budget.is_finite()) {
                return Err(invalid_scenario(alloc::format!("{} has non-positive budget", t.id)));
            }
        }
        let mut interested = alloc::vec![Vec::new(); tasks.len()];
        let mut truthful_bids = BidProfile::default();
        for (i, d) in devices.iter().enumerate() {
            if d.id != DeviceId(i) {
                return Err(invalid_scenario(alloc::format!("device at position {i} has id {}", d.id.0)));
            }
            if !(0.0..=1.0).contains(&d.latent_quality) {
                return Err(invalid_scenario(alloc::format!("{} has quality outside [0, 1]", d.id)));
            }
            for (&task, &v) in &d.valuations {
                if task.0 >= tasks.len() {
                    return Err(invalid_scenario(alloc::format!("{} references unknown task {}", d.id, task.0)));
                }
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid_scenario(alloc::format!("{} has non-positive valuation on {task}", d.id)));
                }
                interested[task.0].push(d.id);
                truthful_bids.insert(d.id, task, v);
            }
        }
        Ok(Self {
            tasks,
            devices,
            truthful_bids,
            seed,
            distribution,
            interested,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.get(id.0)
    }

    pub fn device(&self, id: DeviceId) -> Option<&Device> {
        self.devices.get(id.0)
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn truthful_bids(&self) -> &BidProfile {
        &self.truthful_bids
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `None` for scenarios that were loaded rather than generated.
    pub fn distribution(&self) -> Option<&DistributionSpec> {
        self.distribution.as_ref()
    }

    /// Devices interested in `task`, ascending by id.
    pub fn interest_set(&self, task: TaskId) -> Result<&[DeviceId], MarketError> {
        self.interested
            .get(task.0)
            .map(Vec::as_slice)
            .ok_or(MarketError::UnknownTask(task))
    }

    pub fn quality(&self, device: DeviceId) -> f64 {
        self.devices[device.0].latent_quality
    }

    pub fn total_budget(&self) -> Money {
        self.tasks.iter().map(|t| t.budget).sum()
    }

    pub fn degenerate_tasks(&self) -> Vec<TaskId> {
        self.interested
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(i, _)| TaskId(i))
            .collect()
    }

    pub fn warnings(&self) -> Vec<ScenarioWarning> {
        let mut out = Vec::new();
        if self.devices.len() < self.tasks.len() {
            out.push(ScenarioWarning::FewerDevicesThanTasks {
                tasks: self.tasks.len(),
                devices: self.devices.len(),
            });
        }
        out.extend(self.degenerate_tasks().into_iter().map(ScenarioWarning::DegenerateTask));
        out
    }
}

fn draw_valuation<R: Rng>(rng: &mut R, dist: &DistributionSpec, normal: Option<&Normal<f64>>) -> Money {
    match normal {
        None => rng.random_range(dist.uniform_lo..=dist.uniform_hi),
        Some(normal) => loop {
            let v = normal.sample(rng);
            if v >= 1.0 {
                break v;
            }
        },
    }
}

/// Draws a random scenario. Equal `(config, seed)` give equal scenarios.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario, MarketError> {
    config.validate()?;
    let dist = &config.distribution;
    let normal = match dist.kind {
        BidDistribution::Uniform => None,
        BidDistribution::Normal => Some(
            Normal::new(dist.normal_mean, dist.normal_std)
                .map_err(|_| invalid_config("normal std must be positive"))?,
        ),
    };
    let mut rng = rng_from_seed(seed);
    let tasks = (0..config.requesters)
        .map(|i| Task {
            id: TaskId(i),
            budget: rng.random_range(dist.budget_lo..=dist.budget_hi),
        })
        .collect();
    let devices = (0..config.executers)
        .map(|i| {
            let size = rng.random_range(config.interest_lo..=config.interest_hi);
            let mut picked = index::sample(&mut rng, config.requesters, size).into_vec();
            picked.sort_unstable();
            let valuations = picked
                .into_iter()
                .map(|t| (TaskId(t), draw_valuation(&mut rng, dist, normal.as_ref())))
                .collect();
            Device {
                id: DeviceId(i),
                valuations,
                latent_quality: rng.random_range(0.0..=1.0),
            }
        })
        .collect();
    Scenario::new(tasks, devices, seed, Some(*dist))
}

/// Returns a copy of `bids` with the single entry `(device, task)` replaced.
pub fn apply_deviation(
    bids: &BidProfile,
    device: DeviceId,
    task: TaskId,
    new_bid: Money,
) -> Result<BidProfile, MarketError> {
    if !bids.bids.contains_key(&(device, task)) {
        return Err(MarketError::UnknownPair { device, task });
    }
    if !(new_bid > 0.0 && new_bid.is_finite()) {
        return Err(MarketError::InvalidBid(new_bid));
    }
    let mut out = bids.clone();
    out.insert(device, task, new_bid);
    Ok(out)
}

/// Devices selected to misreport: the first `ceil(fraction * m)` entries of
/// a seeded permutation, so larger fractions extend smaller ones.
pub fn inflating_devices(scenario: &Scenario, fraction: f64, seed: u64) -> Vec<DeviceId> {
    let m = scenario.num_devices();
    let fraction = fraction.clamp(0.0, 1.0);
    // The epsilon keeps 0.15 * 500 at 75 instead of rounding up to 76.
    let count = (libm::ceil(fraction * m as f64 - 1e-9) as usize).min(m);
    let mut order: Vec<DeviceId> = (0..m).map(DeviceId).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 0x1f1a));
    order.shuffle(&mut rng);
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Truthful bids except that a seeded `fraction` of devices report
/// `v * (1 + inflation)` on every interest pair.
pub fn apply_mass_inflation(scenario: &Scenario, fraction: f64, inflation: f64, seed: u64) -> BidProfile {
    let factor = 1.0 + inflation.max(0.0);
    let mut bids = scenario.truthful_bids.clone();
    for device in inflating_devices(scenario, fraction, seed) {
        for (task, v) in &scenario.devices[device.0].valuations {
            bids.insert(device, *task, v * factor);
        }
    }
    bids
}
