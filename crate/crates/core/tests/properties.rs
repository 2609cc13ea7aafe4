use std::collections::BTreeSet;

use budget_auction_core::grading::grade_batches;
use budget_auction_core::market::inflating_devices;
use budget_auction_core::mechanism::{fair_share, tubetap};
use budget_auction_core::*;
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = ConflictGraph> {
    (1..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        proptest::collection::vec(proptest::bool::weighted(0.2), pairs).prop_map(move |mask| {
            let mut g = ConflictGraph::new(n);
            let mut idx = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if mask[idx] {
                        g.add_edge(i, j).unwrap();
                    }
                    idx += 1;
                }
            }
            g
        })
    })
}

fn quality_set(bids: &[f64]) -> QualitySet {
    QualitySet::new(TaskId(0), (0..bids.len()).map(DeviceId).collect(), bids.to_vec())
}

/// Maximum number of bids a budget can cover, by enumerating subsets.
fn brute_force_opt(bids: &[f64], budget: f64) -> usize {
    (0u32..1 << bids.len())
        .filter(|mask| {
            let total: f64 = (0..bids.len()).filter(|i| mask & (1 << i) != 0).map(|i| bids[i]).sum();
            total <= budget
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

fn bids_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(80.0..150.0f64, 1..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn default_kappa_always_colors(g in graph_strategy(50)) {
        let kappa = g.default_kappa();
        let a = allocate_time_slots(&g, kappa).unwrap();
        prop_assert!(verify_assignment(&g, &a));
        prop_assert!(a.max_slot() <= kappa);
        for (x, y) in g.edges() {
            prop_assert_ne!(a.slot(x), a.slot(y));
        }
    }

    #[test]
    fn degeneracy_plus_one_always_colors(g in graph_strategy(40)) {
        let kappa = g.degeneracy() + 1;
        let a = allocate_time_slots(&g, kappa).unwrap();
        prop_assert!(verify_assignment(&g, &a));
        prop_assert!(a.max_slot() <= kappa);
        if kappa > 1 {
            match allocate_time_slots(&g, kappa - 1) {
                Err(GraphError::GraphNotReducible { suggested_kappa, .. }) => prop_assert_eq!(suggested_kappa, kappa),
                other => prop_assert!(false, "expected an error, got {:?}", other),
            }
        }
    }

    #[test]
    fn slots_never_share_a_device(seed in any::<u64>()) {
        let s = generate_scenario(&ScenarioConfig::new(12, 60, DistributionSpec::uniform()), seed).unwrap();
        let g = build_conflict_graph(&s);
        let a = allocate_time_slots(&g, g.default_kappa()).unwrap();
        for d in s.devices() {
            let slots: Vec<_> = d.interests().map(|t| a.slot(t).unwrap()).collect();
            let distinct: BTreeSet<_> = slots.iter().collect();
            prop_assert_eq!(distinct.len(), slots.len());
        }
        for (x, y) in g.edges() {
            let shared = s.interest_set(x).unwrap().iter().any(|d| s.interest_set(y).unwrap().contains(d));
            prop_assert!(shared);
        }
    }

    #[test]
    fn tubetap_is_budget_feasible_and_rational(bids in bids_strategy(), budget in 400.0..600.0f64) {
        let out = tubetap(&quality_set(&bids), budget).unwrap();
        prop_assert!(out.payment_total() <= budget);
        for (&d, &pay) in &out.payments {
            prop_assert!(pay >= bids[d.0]);
        }
        let pays: BTreeSet<u64> = out.payments.values().map(|p| p.to_bits()).collect();
        prop_assert!(pays.len() <= 1);
        prop_assert!(optimal_winner_count(&bids, budget) <= 2 * out.winner_count());
    }

    #[test]
    fn tubetap_winners_are_the_cheapest(bids in bids_strategy(), budget in 1.0..1000.0f64) {
        let out = tubetap(&quality_set(&bids), budget).unwrap();
        let max_win = out.winners.iter().map(|d| bids[d.0]).fold(f64::MIN, f64::max);
        for (i, &b) in bids.iter().enumerate() {
            if !out.is_winner(DeviceId(i)) {
                prop_assert!(b >= max_win);
            }
        }
    }

    #[test]
    fn tubetap_has_no_profitable_deviation(
        bids in bids_strategy(),
        budget in 100.0..600.0f64,
        who in any::<prop::sample::Index>(),
        report in 1.0..700.0f64,
    ) {
        let set = quality_set(&bids);
        let d = who.index(bids.len());
        let utility = |s: &QualitySet| tubetap(s, budget).unwrap().payment(DeviceId(d)).map_or(0.0, |p| p - bids[d]);
        let truthful = utility(&set);
        let deviated = utility(&set.with_bid(DeviceId(d), report).unwrap());
        prop_assert!(deviated <= truthful + 1e-9, "gain {}", deviated - truthful);
    }

    #[test]
    fn lowering_a_winning_bid_keeps_it_winning(
        bids in bids_strategy(),
        budget in 100.0..600.0f64,
        who in any::<prop::sample::Index>(),
        factor in 0.01..1.0f64,
    ) {
        let set = quality_set(&bids);
        let d = DeviceId(who.index(bids.len()));
        if tubetap(&set, budget).unwrap().is_winner(d) {
            let lower = set.with_bid(d, bids[d.0] * factor).unwrap();
            prop_assert!(tubetap(&lower, budget).unwrap().is_winner(d));
        }
    }

    #[test]
    fn benchmark_is_budget_feasible_and_rational(bids in bids_strategy(), budget in 1.0..600.0f64, eps in 0.0..20.0f64) {
        let out = Mechanism::Benchmark { epsilon: eps }.run(&quality_set(&bids), budget).unwrap();
        prop_assert!(out.payment_total() <= budget);
        for (&d, &pay) in &out.payments {
            prop_assert!(pay >= bids[d.0]);
        }
    }

    #[test]
    fn optimal_count_matches_subset_enumeration(
        bids in proptest::collection::vec(1.0..50.0f64, 0..=10),
        budget in 1.0..200.0f64,
    ) {
        prop_assert_eq!(optimal_winner_count(&bids, budget), brute_force_opt(&bids, budget));
    }

    #[test]
    fn fair_share_is_the_largest_feasible_share(budget in 1e-3..1e6f64, k in 1usize..500) {
        let share = fair_share(budget, k);
        let sum = |s: f64| (0..k).fold(0.0, |acc, _| acc + s);
        prop_assert!(sum(share) <= budget);
        prop_assert!(sum(share.next_up()) > budget || share.next_up() > budget / k as f64);
    }

    #[test]
    fn quality_sets_take_one_device_per_batch(
        n in 4usize..30,
        r in 1usize..5,
        seed in any::<u64>(),
        noisy in any::<bool>(),
    ) {
        prop_assume!(n > r);
        let s = generate_scenario(&ScenarioConfig::new(1, n, DistributionSpec::uniform()), seed).unwrap();
        let interested = s.interest_set(TaskId(0)).unwrap();
        prop_assume!(interested.len() > r);
        let model = if noisy { GraderModel::Noisy { noise_std: 0.1 } } else { GraderModel::Truthful };
        let params = GradingParams { batch_size: r, graders_per_batch: Some(3), model };
        let q = quality_determination(TaskId(0), interested, s.truthful_bids(), |d| s.quality(d), &params, seed).unwrap();
        prop_assert_eq!(q.len(), interested.len().div_ceil(r));
        let distinct: BTreeSet<_> = q.members.iter().collect();
        prop_assert_eq!(distinct.len(), q.len());
        for (d, bid) in q.entries() {
            prop_assert!(interested.contains(&d));
            prop_assert_eq!(Some(bid), s.truthful_bids().get(d, TaskId(0)));
        }
        let again = quality_determination(TaskId(0), interested, s.truthful_bids(), |d| s.quality(d), &params, seed).unwrap();
        prop_assert_eq!(q, again);
    }

    #[test]
    fn truthful_graders_pick_each_batch_maximum(
        qualities in proptest::collection::vec(0.0..1.0f64, 9),
        bids in proptest::collection::vec(1.0..100.0f64, 9),
    ) {
        let devices = (0..9)
            .map(|i| Device {
                id: DeviceId(i),
                valuations: [(TaskId(0), bids[i])].into_iter().collect(),
                latent_quality: qualities[i],
            })
            .collect();
        let s = Scenario::new(vec![Task { id: TaskId(0), budget: 50.0 }], devices, 0, None).unwrap();
        let interested = s.interest_set(TaskId(0)).unwrap();
        let batches: Vec<Vec<DeviceId>> = interested.chunks(3).map(|c| c.to_vec()).collect();
        let params = GradingParams { batch_size: 3, graders_per_batch: None, model: GraderModel::Truthful };
        let q = grade_batches(TaskId(0), &batches, interested, s.truthful_bids(), |d| s.quality(d), &params, 0).unwrap();
        for (batch, member) in batches.iter().zip(&q.members) {
            let best = batch.iter().copied().max_by(|a, b| qualities[a.0].total_cmp(&qualities[b.0]).then(b.cmp(a))).unwrap();
            prop_assert_eq!(*member, best);
            prop_assert_eq!(q.bid_of(*member), Some(bids[member.0]));
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let cfg = ScenarioConfig::new(5, 40, DistributionSpec::normal());
        let a = generate_scenario(&cfg, seed).unwrap();
        prop_assert_eq!(&a, &generate_scenario(&cfg, seed).unwrap());
        for ((_, _), v) in a.truthful_bids().iter() {
            prop_assert!(v >= 1.0);
        }
        for t in a.tasks() {
            prop_assert!((400.0..=600.0).contains(&t.budget));
        }
        for d in a.devices() {
            let k = d.valuations.len();
            prop_assert!((1..=5).contains(&k));
        }
    }

    #[test]
    fn inflation_subsets_are_nested(seed in any::<u64>(), f in 0.0..1.0f64, g in 0.0..1.0f64) {
        let s = generate_scenario(&ScenarioConfig::new(5, 50, DistributionSpec::uniform()), seed).unwrap();
        let (lo, hi) = if f <= g { (f, g) } else { (g, f) };
        let small: BTreeSet<_> = inflating_devices(&s, lo, seed).into_iter().collect();
        let large: BTreeSet<_> = inflating_devices(&s, hi, seed).into_iter().collect();
        prop_assert!(small.is_subset(&large));
        let bids = apply_mass_inflation(&s, hi, 0.35, seed);
        for ((d, t), b) in bids.iter() {
            let v = s.truthful_bids().get(d, t).unwrap();
            if large.contains(&d) {
                prop_assert_eq!(b, v * 1.35);
            } else {
                prop_assert_eq!(b, v);
            }
        }
    }
}

#[test]
fn two_approximation_holds_exhaustively_on_small_lists() {
    let mut lists: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..4 {
        let next: Vec<Vec<f64>> = lists
            .iter()
            .filter(|l| l.len() == lists.last().unwrap().len())
            .flat_map(|l| (1..=10).map(move |b| [l.as_slice(), &[b as f64]].concat()))
            .collect();
        lists.extend(next);
    }
    let mut checked = 0;
    for bids in lists.iter().filter(|l| !l.is_empty()) {
        for budget in 1..=20 {
            let budget = budget as f64;
            let om = tubetap(&quality_set(bids), budget).unwrap().winner_count();
            let opt = brute_force_opt(bids, budget);
            assert_eq!(opt, optimal_winner_count(bids, budget));
            assert!(opt <= 2 * om, "bids {bids:?} budget {budget}: opt {opt}, om {om}");
            checked += 1;
        }
    }
    assert_eq!(checked, 20 * (10 + 100 + 1000 + 10_000));
}
