//! Quality determination by peer grading.
//!
//! A task's interested devices are graded in batches of `r`. Each batch is
//! shown to up to `r'` other interested devices, every grader ranks the batch,
//! and the device ranked first by the most graders joins the task's quality
//! set. Batches are drawn without replacement until every device was graded.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::market::{BidProfile, DeviceId, Money, TaskId};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradingError {
    #[error("batch to grade is empty")]
    EmptyBatch,
    #[error("grader {0} is part of the batch it grades")]
    GraderInBatch(DeviceId),
    #[error("no rankings to aggregate")]
    NoRankings,
    #[error("{task}: only {interested} interested devices, no peer left outside a batch to grade it")]
    NoGradersAvailable { task: TaskId, interested: usize },
    #[error("{0} has no interested devices")]
    NoInterestedDevices(TaskId),
    #[error("no bid from {device} on {task}")]
    MissingBid { device: DeviceId, task: TaskId },
    #[error("invalid grading parameter: {0}")]
    InvalidParameter(&'static str),
}

/// How a simulated grader perceives the quality of the work it ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraderModel {
    /// Ranks by latent quality.
    Truthful,
    /// Ranks by latent quality plus independent `N(0, noise_std^2)` noise.
    Noisy { noise_std: f64 },
}

impl Default for GraderModel {
    fn default() -> Self {
        GraderModel::Noisy { noise_std: 0.1 }
    }
}

/// One grader's ranking of a batch, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub grader: DeviceId,
    pub ranking: Vec<DeviceId>,
}

/// Quality devices selected for one task, in selection order, with their bids.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySet {
    pub task: TaskId,
    pub members: Vec<DeviceId>,
    pub member_bids: Vec<Money>,
}

impl QualitySet {
    pub fn new(task: TaskId, members: Vec<DeviceId>, member_bids: Vec<Money>) -> Self {
        debug_assert_eq!(members.len(), member_bids.len());
        Self { task, members, member_bids }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, device: DeviceId) -> bool {
        self.members.contains(&device)
    }

    pub fn bid_of(&self, device: DeviceId) -> Option<Money> {
        self.members
            .iter()
            .position(|&d| d == device)
            .map(|i| self.member_bids[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (DeviceId, Money)> + '_ {
        self.members.iter().copied().zip(self.member_bids.iter().copied())
    }

    /// Same members, one member's bid replaced.
    pub fn with_bid(&self, device: DeviceId, bid: Money) -> Option<QualitySet> {
        let i = self.members.iter().position(|&d| d == device)?;
        let mut out = self.clone();
        out.member_bids[i] = bid;
        Some(out)
    }

    /// Same members, bids re-read from `bids`.
    pub fn rebid(&self, bids: &BidProfile) -> Result<QualitySet, GradingError> {
        let member_bids = self
            .members
            .iter()
            .map(|&d| {
                bids.get(d, self.task)
                    .ok_or(GradingError::MissingBid { device: d, task: self.task })
            })
            .collect::<Result<_, _>>()?;
        Ok(QualitySet { task: self.task, members: self.members.clone(), member_bids })
    }
}

/// Batch size `r`, graders per batch `r'` (`None` = every device outside the
/// batch) and the grader behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradingParams {
    pub batch_size: usize,
    pub graders_per_batch: Option<usize>,
    pub model: GraderModel,
}

impl GradingParams {
    pub fn validate(&self) -> Result<(), GradingError> {
        if self.batch_size == 0 {
            return Err(GradingError::InvalidParameter("batch size r must be at least 1"));
        }
        if self.graders_per_batch == Some(0) {
            return Err(GradingError::InvalidParameter("graders per batch r' must be at least 1"));
        }
        if let GraderModel::Noisy { noise_std } = self.model {
            if !(noise_std >= 0.0 && noise_std.is_finite()) {
                return Err(GradingError::InvalidParameter("noise std must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

impl Default for GradingParams {
    fn default() -> Self {
        Self {
            batch_size: 3,
            graders_per_batch: None,
            model: GraderModel::default(),
        }
    }
}

/// One ranking of `batch` per grader. Grader `g` draws its noise from a
/// stream derived from `(seed, g)`.
pub fn simulate_rankings<Q>(
    batch: &[DeviceId],
    graders: &[DeviceId],
    quality: Q,
    model: GraderModel,
    seed: u64,
) -> Result<Vec<RankedList>, GradingError>
where
    Q: Fn(DeviceId) -> f64,
{
    if batch.is_empty() {
        return Err(GradingError::EmptyBatch);
    }
    if let Some(&g) = graders.iter().find(|g| batch.contains(g)) {
        return Err(GradingError::GraderInBatch(g));
    }
    let noise = match model {
        GraderModel::Noisy { noise_std } if noise_std > 0.0 => Some(
            Normal::new(0.0, noise_std)
                .map_err(|_| GradingError::InvalidParameter("noise std must be finite and >= 0"))?,
        ),
        _ => None,
    };
    let rankings = graders
        .iter()
        .map(|&grader| {
            let mut rng = rng_from_seed(derive_seed(seed, grader.0 as u64));
            let mut scored: Vec<(f64, DeviceId)> = batch
                .iter()
                .map(|&d| {
                    let perturbation = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                    (quality(d) + perturbation, d)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            RankedList {
                grader,
                ranking: scored.into_iter().map(|(_, d)| d).collect(),
            }
        })
        .collect();
    Ok(rankings)
}

/// Device ranked first most often; ties go to the lower id.
pub fn plurality_winner(rankings: &[RankedList]) -> Result<DeviceId, GradingError> {
    let mut firsts: BTreeMap<DeviceId, usize> = BTreeMap::new();
    for r in rankings {
        if let Some(&top) = r.ranking.first() {
            *firsts.entry(top).or_default() += 1;
        }
    }
    let mut best: Option<(DeviceId, usize)> = None;
    for (device, count) in firsts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((device, count));
        }
    }
    best.map(|(d, _)| d).ok_or(GradingError::NoRankings)
}

fn grade_batch<Q>(
    batch: &[DeviceId],
    interested: &[DeviceId],
    quality: &Q,
    params: &GradingParams,
    seed: u64,
) -> Result<DeviceId, GradingError>
where
    Q: Fn(DeviceId) -> f64,
{
    let mut candidates: Vec<DeviceId> = interested
        .iter()
        .copied()
        .filter(|d| !batch.contains(d))
        .collect();
    if candidates.is_empty() {
        return Err(GradingError::NoRankings);
    }
    let wanted = params
        .graders_per_batch
        .unwrap_or(candidates.len())
        .min(candidates.len());
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let (picked, _) = candidates.partial_shuffle(&mut rng, wanted);
    let mut graders = picked.to_vec();
    graders.sort_unstable();
    let rankings = simulate_rankings(batch, &graders, quality, params.model, derive_seed(seed, 1))?;
    plurality_winner(&rankings)
}

fn check_interested(task: TaskId, interested: &[DeviceId], params: &GradingParams) -> Result<(), GradingError> {
    params.validate()?;
    if interested.is_empty() {
        return Err(GradingError::NoInterestedDevices(task));
    }
    if interested.len() <= params.batch_size {
        return Err(GradingError::NoGradersAvailable { task, interested: interested.len() });
    }
    Ok(())
}

fn push_winner(
    set: &mut QualitySet,
    winner: DeviceId,
    bids: &BidProfile,
) -> Result<(), GradingError> {
    let bid = bids
        .get(winner, set.task)
        .ok_or(GradingError::MissingBid { device: winner, task: set.task })?;
    set.members.push(winner);
    set.member_bids.push(bid);
    Ok(())
}

/// Peer-grades `interested` in seeded random batches of `r` devices.
///
/// The final batch may be shorter than `r`. Every batch is graded by up to
/// `r'` devices drawn from all interested devices outside the batch, so the
/// result has `ceil(k / r)` members for `k > r` interested devices.
pub fn quality_determination<Q>(
    task: TaskId,
    interested: &[DeviceId],
    bids: &BidProfile,
    quality: Q,
    params: &GradingParams,
    seed: u64,
) -> Result<QualitySet, GradingError>
where
    Q: Fn(DeviceId) -> f64,
{
    check_interested(task, interested, params)?;
    let mut pool = interested.to_vec();
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let mut set = QualitySet::new(task, Vec::new(), Vec::new());
    let mut iteration = 1u64;
    while !pool.is_empty() {
        let amount = params.batch_size.min(pool.len());
        let (chosen, rest) = pool.partial_shuffle(&mut rng, amount);
        let mut batch = chosen.to_vec();
        batch.sort_unstable();
        let mut rest = rest.to_vec();
        rest.sort_unstable();
        let winner = grade_batch(&batch, interested, &quality, params, derive_seed(seed, iteration))?;
        push_winner(&mut set, winner, bids)?;
        pool = rest;
        iteration += 1;
    }
    Ok(set)
}

/// Like [`quality_determination`] but with a caller-supplied batch schedule.
///
/// `batches` must partition `interested`.
pub fn grade_batches<Q>(
    task: TaskId,
    batches: &[Vec<DeviceId>],
    interested: &[DeviceId],
    bids: &BidProfile,
    quality: Q,
    params: &GradingParams,
    seed: u64,
) -> Result<QualitySet, GradingError>
where
    Q: Fn(DeviceId) -> f64,
{
    check_interested(task, interested, params)?;
    let mut set = QualitySet::new(task, Vec::new(), Vec::new());
    for (i, batch) in batches.iter().enumerate() {
        if batch.is_empty() {
            return Err(GradingError::EmptyBatch);
        }
        let winner = grade_batch(batch, interested, &quality, params, derive_seed(seed, i as u64 + 1))?;
        push_winner(&mut set, winner, bids)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::market::{Device, Scenario, Task};
    use alloc::vec;

    fn e(n: usize) -> DeviceId {
        DeviceId(n - 1)
    }

    fn quality_of(table: &[(usize, f64)]) -> impl Fn(DeviceId) -> f64 + '_ {
        move |d| table.iter().find(|(n, _)| e(*n) == d).map_or(0.0, |(_, q)| *q)
    }

    #[test]
    fn truthful_graders_rank_best_first() {
        let q = [(3, 0.9), (9, 0.4), (15, 0.2)];
        let graders = [e(1), e(4), e(6), e(7), e(10), e(13)];
        let rankings =
            simulate_rankings(&[e(3), e(9), e(15)], &graders, quality_of(&q), GraderModel::Truthful, 5).unwrap();
        assert_eq!(rankings.len(), 6);
        assert!(rankings.iter().all(|r| r.ranking == vec![e(3), e(9), e(15)]));
    }

    #[test]
    fn singleton_batch_and_zero_noise() {
        let q = [(3, 0.9), (9, 0.4), (15, 0.2)];
        let r = simulate_rankings(&[e(9)], &[e(1), e(2)], quality_of(&q), GraderModel::default(), 1).unwrap();
        assert!(r.iter().all(|r| r.ranking == vec![e(9)]));
        let batch = [e(3), e(9), e(15)];
        let a = simulate_rankings(&batch, &[e(1)], quality_of(&q), GraderModel::Truthful, 3).unwrap();
        let b = simulate_rankings(&batch, &[e(1)], quality_of(&q), GraderModel::Noisy { noise_std: 0.0 }, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ranking_errors() {
        assert_eq!(
            simulate_rankings(&[], &[e(1)], |_| 0.0, GraderModel::Truthful, 0),
            Err(GradingError::EmptyBatch)
        );
        assert_eq!(
            simulate_rankings(&[e(1)], &[e(1)], |_| 0.0, GraderModel::Truthful, 0),
            Err(GradingError::GraderInBatch(e(1)))
        );
        assert_eq!(plurality_winner(&[]), Err(GradingError::NoRankings));
    }

    #[test]
    fn equal_quality_breaks_toward_lower_id() {
        let r = simulate_rankings(&[e(5), e(2)], &[e(9)], |_| 0.5, GraderModel::Truthful, 0).unwrap();
        assert_eq!(r[0].ranking, vec![e(2), e(5)]);
    }

    fn list(grader: usize, top: usize) -> RankedList {
        RankedList { grader: e(grader), ranking: vec![e(top)] }
    }

    #[test]
    fn plurality_majority_and_ties() {
        let six = [list(1, 3), list(2, 9), list(4, 3), list(5, 15), list(6, 3), list(7, 3)];
        assert_eq!(plurality_winner(&six), Ok(e(3)));
        assert_eq!(plurality_winner(&[list(1, 9)]), Ok(e(9)));
        let tie = [list(1, 9), list(2, 4), list(3, 4), list(5, 9)];
        assert_eq!(plurality_winner(&tie), Ok(e(4)));
    }

    #[test]
    fn example_batches_select_expected_quality_set() {
        let s = fixtures::example_market();
        let interested = s.interest_set(TaskId(0)).unwrap();
        let params = GradingParams { batch_size: 3, graders_per_batch: Some(6), model: GraderModel::Truthful };
        let set = grade_batches(
            TaskId(0),
            &fixtures::example2_batches(),
            interested,
            s.truthful_bids(),
            |d| s.quality(d),
            &params,
            0,
        )
        .unwrap();
        assert_eq!(set.members, vec![e(3), e(4), e(6)]);
        assert_eq!(set.member_bids, vec![20.0, 10.0, 30.0]);
    }

    fn uniform_task(k: usize) -> Scenario {
        let devices = (0..k)
            .map(|i| {
                let mut v = BTreeMap::new();
                v.insert(TaskId(0), 10.0 + i as f64);
                Device { id: DeviceId(i), valuations: v, latent_quality: (i as f64) / (k as f64) }
            })
            .collect();
        Scenario::new(vec![Task { id: TaskId(0), budget: 100.0 }], devices, 0, None).unwrap()
    }

    #[test]
    fn four_devices_make_two_batches() {
        let s = uniform_task(4);
        let interested = s.interest_set(TaskId(0)).unwrap();
        let set = quality_determination(
            TaskId(0),
            interested,
            s.truthful_bids(),
            |d| s.quality(d),
            &GradingParams::default(),
            17,
        )
        .unwrap();
        assert_eq!(set.len(), 2);
        assert_ne!(set.members[0], set.members[1]);
    }

    #[test]
    fn batch_covering_everyone_has_no_graders() {
        let s = uniform_task(3);
        let err = quality_determination(
            TaskId(0),
            s.interest_set(TaskId(0)).unwrap(),
            s.truthful_bids(),
            |d| s.quality(d),
            &GradingParams::default(),
            1,
        )
        .unwrap_err();
        assert_eq!(err, GradingError::NoGradersAvailable { task: TaskId(0), interested: 3 });
        let err = quality_determination(TaskId(0), &[], s.truthful_bids(), |_| 0.0, &GradingParams::default(), 1)
            .unwrap_err();
        assert_eq!(err, GradingError::NoInterestedDevices(TaskId(0)));
    }

    #[test]
    fn rejects_zero_parameters() {
        let s = uniform_task(5);
        let mut p = GradingParams::default();
        p.batch_size = 0;
        let interested = s.interest_set(TaskId(0)).unwrap();
        assert!(matches!(
            quality_determination(TaskId(0), interested, s.truthful_bids(), |_| 0.0, &p, 0),
            Err(GradingError::InvalidParameter(_))
        ));
        p.batch_size = 1;
        p.graders_per_batch = Some(0);
        assert!(quality_determination(TaskId(0), interested, s.truthful_bids(), |_| 0.0, &p, 0).is_err());
    }

    #[test]
    fn rebid_and_with_bid() {
        let set = QualitySet::new(TaskId(0), vec![e(1), e(2)], vec![3.0, 4.0]);
        let dev = set.with_bid(e(2), 9.0).unwrap();
        assert_eq!(dev.bid_of(e(2)), Some(9.0));
        assert_eq!(set.bid_of(e(2)), Some(4.0));
        assert!(set.with_bid(e(7), 1.0).is_none());
        assert!(matches!(set.rebid(&BidProfile::default()), Err(GradingError::MissingBid { .. })));
    }
}
