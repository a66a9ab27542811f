//! Jump-chain behavior: state evaluation, move structure, rates, simulation,
//! and the closed-form stationary law.

use std::collections::{BTreeSet, HashSet, VecDeque};

use approx::assert_relative_eq;
use proptest::prelude::*;
use vmshare_core::markov::{
    all_neighbors, evaluate_state, logsumexp_bound_check, neighbors, occupancy_on_support, simulate,
    simulate_with_memoization, stationary_distribution, time_average_revenue, trace_statistics, transition_rate,
    Evaluator, StopRule,
};
use vmshare_core::model::{
    enumerate_placements, generate_scenario, BaseStation, Placement, Scenario, ScenarioParams, User,
};
use vmshare_core::{CoreError, Real};

fn station(id: u32, users: &[(u32, f64)]) -> BaseStation<Real> {
    BaseStation {
        id,
        users: users
            .iter()
            .enumerate()
            .map(|(i, &(demand_r, valuation_u))| User { id: i as u32, demand_r, valuation_u })
            .collect(),
    }
}

fn scenario(stations: Vec<BaseStation<Real>>, total_vms: u32) -> Scenario<Real> {
    Scenario { stations, total_vms, rng_seed: 0 }
}

/// Two states: parking the VM at the user-less station earns 0, at the other
/// station exactly 1. Enumeration order is [(0,1), (1,0)], revenues [1, 0].
fn two_state_scenario() -> Scenario<Real> {
    scenario(vec![station(0, &[]), station(1, &[(1, 1.0)])], 1)
}

fn small_random_scenario(seed: u64) -> Scenario<Real> {
    generate_scenario(&ScenarioParams {
        users_per_station: vec![2, 1, 2],
        total_vms: 4,
        demand_range: (1, 2),
        valuation_range: (0.1, 1.0),
        seed,
    })
    .unwrap()
}

#[test]
fn worthless_users_make_every_state_worthless() {
    let sc = scenario(vec![station(0, &[(1, 0.0), (2, 0.0)]), station(1, &[(1, 0.0)])], 3);
    let state = evaluate_state(&sc, &Placement::new(vec![2, 1]), &Evaluator::TruthfulOpa).unwrap();
    assert_eq!(state.revenue_phi, 0.0);
}

#[test]
fn single_station_state_is_its_auction_revenue() {
    let sc = scenario(vec![station(0, &[(1, 0.8), (1, 0.5), (1, 0.3)])], 7);
    let state = evaluate_state(&sc, &Placement::new(vec![7]), &Evaluator::TruthfulOpa).unwrap();
    // Candidates: 0.8×1, 0.5×2, 0.3×3 — price 0.5 wins.
    assert_eq!(state.revenue_phi, 1.0);
    assert_eq!(state.prices.prices, vec![0.5]);
}

#[test]
fn state_revenue_is_additive_across_stations() {
    let sc = scenario(vec![station(0, &[(1, 0.8), (1, 0.5)]), station(1, &[(2, 0.9)])], 4);
    let state = evaluate_state(&sc, &Placement::new(vec![2, 2]), &Evaluator::TruthfulOpa).unwrap();
    assert_eq!(state.revenue_phi, 1.0 + 1.8);
    state.prices.validate().unwrap();
}

#[test]
fn puff_evaluation_is_reproducible_per_placement() {
    let sc = small_random_scenario(5);
    let placement = Placement::new(vec![2, 1, 1]);
    let eval = Evaluator::Puff { seed: 77 };
    let a = evaluate_state(&sc, &placement, &eval).unwrap();
    let b = evaluate_state(&sc, &placement, &eval).unwrap();
    assert_eq!(a, b);
    a.prices.validate().unwrap();
    // A different evaluator seed may partition differently.
    let other = evaluate_state(&sc, &placement, &Evaluator::Puff { seed: 78 }).unwrap();
    assert_eq!(other.placement, a.placement);
}

#[test]
fn neighbor_examples() {
    let moves = neighbors(&Placement::new(vec![2, 0]), 0);
    assert_eq!(moves, vec![Placement::new(vec![1, 1])]);
    let moves = neighbors(&Placement::new(vec![1, 1]), 0);
    assert_eq!(moves, vec![Placement::new(vec![0, 2]), Placement::new(vec![2, 0])]);
    assert!(neighbors(&Placement::new(vec![0, 0]), 0).is_empty());
    assert!(all_neighbors(&Placement::new(vec![0, 0, 0])).is_empty());
}

#[test]
fn all_neighbors_is_the_union_over_stations() {
    let p = Placement::new(vec![2, 0, 1]);
    let combined: BTreeSet<Placement> = all_neighbors(&p).into_iter().collect();
    let mut union = BTreeSet::new();
    for k in 0..3 {
        union.extend(neighbors(&p, k));
    }
    assert_eq!(combined, union);
    assert_eq!(all_neighbors(&p).len(), combined.len());
}

#[test]
fn one_vm_moves_connect_the_whole_space() {
    for (k, v) in [(2usize, 3u32), (3, 4), (4, 3)] {
        let sc = scenario((0..k).map(|i| station(i as u32, &[])).collect(), v);
        let all = enumerate_placements(&sc).unwrap();
        let mut seen: HashSet<Placement> = HashSet::new();
        let mut queue = VecDeque::from([all[0].clone()]);
        seen.insert(all[0].clone());
        while let Some(p) = queue.pop_front() {
            for n in all_neighbors(&p) {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        assert_eq!(seen.len(), all.len(), "K={k} V={v}");
    }
}

#[test]
fn rate_examples() {
    assert_eq!(transition_rate(0.3, 0.3, 10.0), 1.0);
    assert_relative_eq!(transition_rate(0.0, 0.2, 10.0), 1.0_f64.exp(), max_relative = 1e-12);
    assert_relative_eq!(transition_rate(0.2, 0.0, 10.0), (-1.0_f64).exp(), max_relative = 1e-12);
}

#[test]
fn opposite_rates_are_reciprocal() {
    let q_up = transition_rate(0.17, 0.93, 7.0);
    let q_down = transition_rate(0.93, 0.17, 7.0);
    assert_relative_eq!(q_up * q_down, 1.0, max_relative = 1e-12);
}

#[test]
fn zero_budget_stops_produce_empty_traces() {
    let sc = two_state_scenario();
    let initial = Placement::new(vec![0, 1]);
    let trace = simulate(&sc, 1.0, &Evaluator::TruthfulOpa, &initial, StopRule::MaxJumps(0), 1).unwrap();
    assert!(trace.records.is_empty());
    let trace = simulate(&sc, 1.0, &Evaluator::TruthfulOpa, &initial, StopRule::MaxSimTime(0.0), 1).unwrap();
    assert!(trace.records.is_empty());
}

#[test]
fn a_chain_without_moves_is_absorbing() {
    let sc = scenario(vec![station(0, &[(1, 0.5)]), station(1, &[])], 0);
    let initial = Placement::new(vec![0, 0]);
    let trace = simulate(&sc, 2.0, &Evaluator::TruthfulOpa, &initial, StopRule::MaxJumps(100), 3).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].placement, initial);
    assert!(trace.records[0].holding_time > 0.0);

    let single = scenario(vec![station(0, &[(1, 0.5)])], 2);
    let trace =
        simulate(&single, 2.0, &Evaluator::TruthfulOpa, &Placement::new(vec![2]), StopRule::MaxSimTime(5.0), 3)
            .unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].holding_time, 5.0);
}

#[test]
fn jump_budgets_are_honored_exactly() {
    let sc = small_random_scenario(9);
    let initial = Placement::balanced(3, 4);
    let trace = simulate(&sc, 2.0, &Evaluator::TruthfulOpa, &initial, StopRule::MaxJumps(250), 4).unwrap();
    assert_eq!(trace.records.len(), 250);
    assert!(trace.records.iter().all(|r| r.holding_time > 0.0));
    assert_eq!(trace.records[0].placement, initial);
}

#[test]
fn time_budgets_truncate_the_last_visit() {
    let sc = small_random_scenario(9);
    let initial = Placement::balanced(3, 4);
    let trace = simulate(&sc, 2.0, &Evaluator::TruthfulOpa, &initial, StopRule::MaxSimTime(7.5), 4).unwrap();
    let total: f64 = trace.records.iter().map(|r| r.holding_time).sum();
    assert_relative_eq!(total, 7.5, max_relative = 1e-12);
    assert!(trace.records.iter().all(|r| r.holding_time > 0.0));
}

#[test]
fn simulation_is_deterministic_in_the_seed() {
    let sc = small_random_scenario(13);
    let initial = Placement::balanced(3, 4);
    for evaluator in [Evaluator::TruthfulOpa, Evaluator::Puff { seed: 5 }] {
        let a = simulate(&sc, 3.0, &evaluator, &initial, StopRule::MaxJumps(300), 21).unwrap();
        let b = simulate(&sc, 3.0, &evaluator, &initial, StopRule::MaxJumps(300), 21).unwrap();
        assert_eq!(a, b);
        let c = simulate(&sc, 3.0, &evaluator, &initial, StopRule::MaxJumps(300), 22).unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn memoization_never_changes_a_trace() {
    let sc = small_random_scenario(31);
    let initial = Placement::balanced(3, 4);
    for evaluator in [Evaluator::TruthfulOpa, Evaluator::Puff { seed: 40 }] {
        let cached =
            simulate_with_memoization(&sc, 2.5, &evaluator, &initial, StopRule::MaxJumps(200), 8, true).unwrap();
        let uncached =
            simulate_with_memoization(&sc, 2.5, &evaluator, &initial, StopRule::MaxJumps(200), 8, false).unwrap();
        assert_eq!(cached, uncached);
    }
}

#[test]
fn simulate_validates_its_inputs() {
    let sc = two_state_scenario();
    let initial = Placement::new(vec![0, 1]);
    assert!(matches!(
        simulate(&sc, 0.0, &Evaluator::TruthfulOpa, &initial, StopRule::MaxJumps(1), 0),
        Err(CoreError::InvalidParameter { .. })
    ));
    assert!(simulate(&sc, 1.0, &Evaluator::TruthfulOpa, &Placement::new(vec![1, 1]), StopRule::MaxJumps(1), 0)
        .is_err());
}

#[test]
fn two_state_stationary_law_matches_the_closed_form() {
    let sc = two_state_scenario();
    let dist = stationary_distribution(&sc, 1.0, &Evaluator::TruthfulOpa).unwrap();
    assert_eq!(dist.support, vec![Placement::new(vec![0, 1]), Placement::new(vec![1, 0])]);
    assert_eq!(dist.revenue_phis, vec![1.0, 0.0]);
    // softmax of (1, 0) at β = 1.
    assert_relative_eq!(dist.probabilities[0], 0.7310585786300049, max_relative = 1e-12);
    assert_relative_eq!(dist.probabilities[1], 0.2689414213699951, max_relative = 1e-12);
    let sum: f64 = dist.probabilities.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn large_beta_concentrates_on_the_optimum() {
    let sc = two_state_scenario();
    // Mass at least 0.99 once β clears ln(99·#states)/gap; gap is 1 here.
    let beta = (99.0_f64 * 2.0).ln();
    let dist = stationary_distribution(&sc, beta, &Evaluator::TruthfulOpa).unwrap();
    assert!(dist.probabilities[0] >= 0.99);
}

#[test]
fn long_run_occupancy_approaches_the_stationary_law() {
    let sc = two_state_scenario();
    let dist = stationary_distribution(&sc, 1.0, &Evaluator::TruthfulOpa).unwrap();
    let trace =
        simulate(&sc, 1.0, &Evaluator::TruthfulOpa, &Placement::new(vec![0, 1]), StopRule::MaxJumps(40_000), 17)
            .unwrap();
    let occupancy = occupancy_on_support(&trace, &dist.support);
    let tv: f64 =
        occupancy.iter().zip(&dist.probabilities).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.02, "tv = {tv}");
}

#[test]
fn detailed_balance_holds_to_machine_precision() {
    let sc = small_random_scenario(55);
    let beta = 4.0;
    let dist = stationary_distribution(&sc, beta, &Evaluator::TruthfulOpa).unwrap();
    let index: std::collections::HashMap<&Placement, usize> =
        dist.support.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut checked = 0usize;
    for (i, p) in dist.support.iter().enumerate() {
        for n in all_neighbors(p) {
            let j = index[&n];
            let flow_out = dist.probabilities[i] * transition_rate(dist.revenue_phis[i], dist.revenue_phis[j], beta);
            let flow_back = dist.probabilities[j] * transition_rate(dist.revenue_phis[j], dist.revenue_phis[i], beta);
            let rel = (flow_out - flow_back).abs() / flow_out.max(flow_back);
            assert!(rel < 1e-12, "{} <-> {}: rel {rel}", p.label(), n.label());
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn logsumexp_examples() {
    let check = logsumexp_bound_check(&[1.0, 2.0], 1.0).unwrap();
    assert_relative_eq!(check.approx, 2.3132616875182228, max_relative = 1e-12);
    assert_eq!(check.lower, 2.0);
    assert_relative_eq!(check.upper, 2.0 + 2.0_f64.ln(), max_relative = 1e-12);
    assert!(check.holds());

    // One state: the proxy is the revenue itself.
    let single = logsumexp_bound_check(&[0.7], 1.0).unwrap();
    assert_eq!(single.approx, 0.7);
    assert!(single.holds());

    // All-equal revenues: the upper end is attained.
    let flat = logsumexp_bound_check(&[0.4, 0.4, 0.4, 0.4], 2.0).unwrap();
    assert_relative_eq!(flat.approx, flat.upper, max_relative = 1e-12);
    assert!(flat.holds());

    assert!(logsumexp_bound_check::<Real>(&[], 1.0).is_err());
    assert!(logsumexp_bound_check(&[0.5], 0.0).is_err());
}

#[test]
fn trace_statistics_on_a_hand_built_trace() {
    use vmshare_core::markov::{ChainTrace, TraceRecord};
    let p1 = Placement::new(vec![1, 0]);
    let p2 = Placement::new(vec![0, 1]);
    let trace = ChainTrace {
        records: vec![
            TraceRecord { placement: p1.clone(), holding_time: 0.5, revenue_phi: 0.2 },
            TraceRecord { placement: p2.clone(), holding_time: 1.5, revenue_phi: 0.6 },
        ],
        beta: 1.0,
        seed: 0,
    };
    let stats = trace_statistics(&trace, 1).unwrap();
    assert_eq!(stats.running_avg, vec![0.2, 0.6]);
    let stats = trace_statistics(&trace, 2).unwrap();
    assert_eq!(stats.running_avg, vec![0.2, 0.4]);
    assert_eq!(stats.occupancy, vec![(p2, 0.75), (p1, 0.25)]);
    assert!(trace_statistics(&trace, 0).is_err());

    assert_eq!(time_average_revenue(&trace, 0), (0.2 * 0.5 + 0.6 * 1.5) / 2.0);
    assert_eq!(time_average_revenue(&trace, 1), 0.6);
    assert_eq!(time_average_revenue(&trace, 2), 0.0);
}

proptest! {
    #[test]
    fn neighbor_moves_are_symmetric_and_budget_preserving(
        counts in proptest::collection::vec(0u32..=5, 2..5),
        k_pick in 0usize..4,
    ) {
        let p = Placement::new(counts);
        let k = k_pick % p.counts.len();
        for n in neighbors(&p, k) {
            prop_assert_eq!(n.total(), p.total());
            prop_assert!(neighbors(&n, k).contains(&p));
            let diff: u32 = p.counts.iter().zip(&n.counts).map(|(a, b)| a.abs_diff(*b)).sum();
            prop_assert_eq!(diff, 2);
        }
    }

    #[test]
    fn logsumexp_bounds_always_hold(
        phis in proptest::collection::vec(0.0f64..=3.0, 1..40),
        beta in 0.01f64..=60.0,
    ) {
        let check = logsumexp_bound_check(&phis, beta).unwrap();
        prop_assert!(check.holds(), "approx {} lower {} upper {}", check.approx, check.lower, check.upper);
    }
}
