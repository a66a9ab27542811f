//! Prior-free single-station auctions.
//!
//! Three mechanisms sell one station's VMs to its users:
//!
//! * [`opa`] — the revenue-optimal single posted price, computable only with
//!   the valuations in hand; it anchors per-placement revenue and serves as
//!   the benchmark the other mechanisms are measured against.
//! * [`icat`] — target-revenue profit extraction: posts `R / min(demand,
//!   supply)` to the active set, drops everyone priced out, and repeats.
//!   Extracts exactly `R` whenever the optimal posted price could, else
//!   collapses to zero. Truthful: no acceptance strategy beats answering
//!   according to one's valuation.
//! * [`puff`] — splits users in half at random, estimates each half's optimal
//!   revenue, and extracts each estimate from the *other* half, so nobody's
//!   bid influences the target they face.
//!
//! [`deviation_search`] replays a mechanism against every acceptance
//! threshold a single user could adopt and reports the best payoff gain over
//! truthful play; truthfulness means the result is never positive.

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::error::CoreError;
use crate::model::{User, UserId};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// A submitted (demand, price) pair; equals the user's true demand and
/// valuation under truthful play.
#[derive(Debug, Clone, PartialEq)]
pub struct Bid<S> {
    pub user_id: UserId,
    pub demand_r: u32,
    pub bid_b: S,
}

impl<S: Scalar> Bid<S> {
    /// The truthful bid of one user.
    pub fn from_user(user: &User<S>) -> Self {
        Bid { user_id: user.id, demand_r: user.demand_r, bid_b: user.valuation_u.clone() }
    }

    /// Truthful bids for a whole user set.
    pub fn from_users(users: &[User<S>]) -> Vec<Bid<S>> {
        users.iter().map(Bid::from_user).collect()
    }
}

/// One posted-price round: the price, how many users were still active when
/// it was posted, and who walked away.
#[derive(Debug, Clone, PartialEq)]
pub struct Round<S> {
    pub posted_price: S,
    pub num_active: u32,
    pub rejected: Vec<UserId>,
}

/// Result of one single-station auction.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome<S> {
    pub clearing_price: S,
    pub revenue: S,
    /// `(user, units served)`; the marginal winner may get only part of its
    /// demand.
    pub winners: Vec<(UserId, S)>,
    /// Posted-price negotiation rounds; empty for the one-shot [`opa`].
    pub rounds: Vec<Round<S>>,
}

impl<S: Scalar> AuctionOutcome<S> {
    fn zero() -> Self {
        AuctionOutcome { clearing_price: S::zero(), revenue: S::zero(), winners: Vec::new(), rounds: Vec::new() }
    }

    /// Units served to `user_id`, zero if it won nothing.
    pub fn units_for(&self, user_id: UserId) -> S {
        self.winners.iter().find(|(id, _)| *id == user_id).map(|(_, units)| units.clone()).unwrap_or_else(S::zero)
    }
}

/// Revenue target handed to the profit extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRevenue<S> {
    pub value: S,
}

impl<S: Scalar> TargetRevenue<S> {
    /// Validating constructor: targets are non-negative.
    pub fn new(value: S) -> Result<Self> {
        if value < S::zero() {
            return Err(CoreError::invalid("target_revenue", format!("{value} is negative")));
        }
        Ok(TargetRevenue { value })
    }
}

/// Optimal posted-price auction. The revenue-maximizing single price always
/// lies in the bid set, so every distinct bid is evaluated as a candidate
/// price; among revenue maximizers the highest price wins (same revenue,
/// fewer units committed). Winners are filled greedily by descending bid
/// (ascending id among equal bids), the marginal winner partially.
pub fn opa<S: Scalar>(bids: &[Bid<S>], vm_count: u32) -> AuctionOutcome<S> {
    if bids.is_empty() || vm_count == 0 {
        return AuctionOutcome::zero();
    }
    let mut order: Vec<&Bid<S>> = bids.iter().collect();
    order.sort_by(|a, b| b.bid_b.partial_cmp(&a.bid_b).expect("bids are ordered").then(a.user_id.cmp(&b.user_id)));

    // Descending scan: at the last bid of each tie run, everyone seen so far
    // clears the price. Strict improvement keeps the highest maximizer.
    let supply = u64::from(vm_count);
    let mut best: Option<(S, S)> = None;
    let mut prefix_demand: u64 = 0;
    for (i, bid) in order.iter().enumerate() {
        prefix_demand += u64::from(bid.demand_r);
        if i + 1 < order.len() && order[i + 1].bid_b == bid.bid_b {
            continue;
        }
        let revenue = bid.bid_b.clone() * S::from_count(prefix_demand.min(supply));
        let improves = match &best {
            Some((_, r)) => revenue > *r,
            None => true,
        };
        if improves {
            best = Some((bid.bid_b.clone(), revenue));
        }
    }
    let (price, revenue) = best.expect("at least one candidate price");

    let mut winners = Vec::new();
    let mut remaining = supply;
    for bid in &order {
        if bid.bid_b < price || remaining == 0 {
            break;
        }
        let take = u64::from(bid.demand_r).min(remaining);
        winners.push((bid.user_id, S::from_count(take)));
        remaining -= take;
    }
    AuctionOutcome { clearing_price: price, revenue, winners, rounds: Vec::new() }
}

/// Best single-price revenue among prices cleared by at least `min_buyers`
/// users, zero if no price qualifies. The partition mechanism's guarantee is
/// stated against this restricted benchmark with `min_buyers = 2`: revenue
/// concentrated on one user is impossible to extract without knowing that
/// user's valuation.
pub fn opt_revenue_min_buyers<S: Scalar>(bids: &[Bid<S>], vm_count: u32, min_buyers: usize) -> S {
    if bids.is_empty() || vm_count == 0 {
        return S::zero();
    }
    let mut order: Vec<&Bid<S>> = bids.iter().collect();
    order.sort_by(|a, b| b.bid_b.partial_cmp(&a.bid_b).expect("bids are ordered").then(a.user_id.cmp(&b.user_id)));
    let supply = u64::from(vm_count);
    let mut best = S::zero();
    let mut prefix_demand: u64 = 0;
    for (i, bid) in order.iter().enumerate() {
        prefix_demand += u64::from(bid.demand_r);
        if i + 1 < order.len() && order[i + 1].bid_b == bid.bid_b {
            continue;
        }
        if i + 1 < min_buyers {
            continue;
        }
        let revenue = bid.bid_b.clone() * S::from_count(prefix_demand.min(supply));
        if revenue > best {
            best = revenue;
        }
    }
    best
}

/// How a user answers a posted price. Truthful play is
/// `Threshold(valuation)`.
#[derive(Debug, Clone)]
enum Acceptance<S> {
    Never,
    Threshold(S),
    Always,
}

impl<S: Scalar> Acceptance<S> {
    fn accepts(&self, price: &S) -> bool {
        match self {
            Acceptance::Never => false,
            Acceptance::Threshold(t) => *price <= *t,
            Acceptance::Always => true,
        }
    }
}

/// The extraction loop, parameterized by each user's acceptance behavior so
/// the deviation harness can override one user.
fn icat_core<S: Scalar>(
    users: &[User<S>],
    vm_count: u32,
    target: &TargetRevenue<S>,
    accepts: impl Fn(&User<S>, &S) -> bool,
) -> AuctionOutcome<S> {
    if users.is_empty() || vm_count == 0 {
        return AuctionOutcome::zero();
    }
    let supply = u64::from(vm_count);
    let mut rounds = Vec::new();
    let mut active: Vec<&User<S>> = users.iter().collect();
    loop {
        let demand: u64 = active.iter().map(|u| u64::from(u.demand_r)).sum();
        let units = demand.min(supply);
        let price = target.value.clone() / S::from_count(units);
        let (stay, leave): (Vec<&User<S>>, Vec<&User<S>>) = active.iter().partition(|u| accepts(u, &price));
        rounds.push(Round {
            posted_price: price.clone(),
            num_active: active.len() as u32,
            rejected: leave.iter().map(|u| u.id).collect(),
        });
        if leave.is_empty() {
            // Everyone still in accepts: extraction succeeds. Units go out
            // greedily by ascending id; the posted price never looked at a
            // valuation, so any allocation among acceptors is incentive-free.
            let mut survivors = stay;
            survivors.sort_by_key(|u| u.id);
            let mut winners = Vec::new();
            let mut remaining = units;
            for user in survivors {
                if remaining == 0 {
                    break;
                }
                let take = u64::from(user.demand_r).min(remaining);
                winners.push((user.id, S::from_count(take)));
                remaining -= take;
            }
            return AuctionOutcome { clearing_price: price, revenue: target.value.clone(), winners, rounds };
        }
        active = stay;
        if active.is_empty() {
            return AuctionOutcome { clearing_price: S::zero(), revenue: S::zero(), winners: Vec::new(), rounds };
        }
    }
}

/// Target-revenue profit extraction. Posts `target / min(active demand,
/// supply)`, removes every user whose valuation is below the price, and
/// repeats until a round loses nobody (success: revenue is exactly the
/// target) or nobody is left (failure: revenue zero). The final all-accept
/// round is recorded like any other. With no users or no VMs the outcome is
/// the zero outcome, not an error.
pub fn icat<S: Scalar>(users: &[User<S>], vm_count: u32, target: &TargetRevenue<S>) -> AuctionOutcome<S> {
    icat_core(users, vm_count, target, |user, price| user.valuation_u >= *price)
}

/// The two halves of one partition-mechanism run.
#[derive(Debug, Clone, PartialEq)]
pub struct PuffOutcome<S> {
    pub first: AuctionOutcome<S>,
    pub second: AuctionOutcome<S>,
    /// User ids in each half.
    pub partition: (Vec<UserId>, Vec<UserId>),
    /// Estimated optimal revenue of each half `(R1, R2)`; each half's
    /// extractor is fed the other half's estimate.
    pub targets: (S, S),
    /// VMs offered to each half: `(⌊v/2⌋, ⌈v/2⌉)` when total demand exceeds
    /// supply, `(v, v)` when supply is slack.
    pub vm_split: (u32, u32),
}

impl<S: Scalar> PuffOutcome<S> {
    /// Revenue of both halves together, always at least `min(R1, R2)`: the
    /// half facing the smaller estimate as its target has an optimal revenue
    /// at least that large (its own estimate is the bigger one), so its
    /// extraction succeeds.
    pub fn combined_revenue(&self) -> S {
        self.first.revenue.clone() + self.second.revenue.clone()
    }
}

/// Random balanced index split: `⌊n/2⌋` ids in the first half, the rest in
/// the second, both sorted ascending.
pub fn sample_partition(n: usize, seed: u64) -> (Vec<UserId>, Vec<UserId>) {
    let mut first: Vec<UserId> = (0..n as u32).collect();
    first.shuffle(&mut rng_from_seed(seed));
    let mut second = first.split_off(n / 2);
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Partition mechanism: split users in half uniformly at random, estimate
/// each half's optimal single-price revenue from its truthful demands and
/// valuations, and run profit extraction on each half with the *other*
/// half's estimate as target. Cross-feeding keeps the mechanism truthful —
/// no user's report touches the target it faces. When total demand exceeds
/// supply the halves get `⌊v/2⌋` and `⌈v/2⌉` VMs; otherwise supply is slack
/// and both halves see all `v`.
pub fn puff<S: Scalar>(users: &[User<S>], vm_count: u32, seed: u64) -> PuffOutcome<S> {
    puff_with_partition(users, vm_count, &sample_partition(users.len(), seed))
}

/// Deterministic core of [`puff`]; also the hook for forcing a partition in
/// tests. Fewer than two users leaves one half empty, so the mechanism
/// degenerates to zero revenue by design rather than erroring.
pub fn puff_with_partition<S: Scalar>(
    users: &[User<S>],
    vm_count: u32,
    partition: &(Vec<UserId>, Vec<UserId>),
) -> PuffOutcome<S> {
    let half = |ids: &[UserId]| -> Vec<User<S>> {
        users.iter().filter(|u| ids.contains(&u.id)).cloned().collect()
    };
    let s1 = half(&partition.0);
    let s2 = half(&partition.1);
    let total_demand: u64 = users.iter().map(|u| u64::from(u.demand_r)).sum();
    let (vm1, vm2) = if total_demand > u64::from(vm_count) {
        (vm_count / 2, vm_count - vm_count / 2)
    } else {
        (vm_count, vm_count)
    };
    let r1 = opa(&Bid::from_users(&s1), vm1).revenue;
    let r2 = opa(&Bid::from_users(&s2), vm2).revenue;
    let first = icat(&s1, vm1, &TargetRevenue { value: r2.clone() });
    let second = icat(&s2, vm2, &TargetRevenue { value: r1.clone() });
    PuffOutcome { first, second, partition: partition.clone(), targets: (r1, r2), vm_split: (vm1, vm2) }
}

/// Which mechanism the deviation harness probes.
#[derive(Debug, Clone)]
pub enum Mechanism<S> {
    /// Profit extraction at a fixed target.
    Icat { target: TargetRevenue<S> },
    /// Partition mechanism with a fixed partition seed.
    Puff { seed: u64 },
}

/// Exhaustive single-user deviation harness over acceptance thresholds.
///
/// For every user in turn, replays the mechanism with that user following
/// each acceptance threshold in a set that provably covers all behaviors:
/// the mechanism only ever posts prices from a finite set (`target /
/// min(d, supply)` over achievable demands `d`), and a threshold strategy is
/// determined by which of those prices it accepts, so reject-all, accept-all,
/// and one threshold per candidate price exhaust the strategy space.
/// Misreporting demand or the estimation bid is not modeled: in these
/// mechanisms they never change the prices the deviating user faces. Returns
/// the best payoff gain over truthful play across all users and thresholds —
/// never positive for a truthful mechanism, and exactly zero whenever the
/// truthful threshold itself is re-enumerated.
pub fn deviation_search<S: Scalar>(users: &[User<S>], vm_count: u32, mechanism: &Mechanism<S>) -> S {
    let mut best_gain: Option<S> = None;
    for user in users {
        let (truthful, deviated): (AuctionOutcome<S>, Vec<AuctionOutcome<S>>) = match mechanism {
            Mechanism::Icat { target } => {
                let truthful = icat(users, vm_count, target);
                let outcomes = threshold_set(users, vm_count, &target.value)
                    .into_iter()
                    .map(|policy| {
                        icat_core(users, vm_count, target, |u, price| {
                            if u.id == user.id {
                                policy.accepts(price)
                            } else {
                                u.valuation_u >= *price
                            }
                        })
                    })
                    .collect();
                (truthful, outcomes)
            }
            Mechanism::Puff { seed } => {
                let partition = sample_partition(users.len(), *seed);
                let in_first = partition.0.contains(&user.id);
                let (own_ids, other_ids) =
                    if in_first { (&partition.0, &partition.1) } else { (&partition.1, &partition.0) };
                let own: Vec<User<S>> = users.iter().filter(|u| own_ids.contains(&u.id)).cloned().collect();
                let other: Vec<User<S>> = users.iter().filter(|u| other_ids.contains(&u.id)).cloned().collect();
                let total_demand: u64 = users.iter().map(|u| u64::from(u.demand_r)).sum();
                let (vm_own, vm_other) = if total_demand > u64::from(vm_count) {
                    let (vm1, vm2) = (vm_count / 2, vm_count - vm_count / 2);
                    if in_first { (vm1, vm2) } else { (vm2, vm1) }
                } else {
                    (vm_count, vm_count)
                };
                // Only the deviating user's half pays the user, and that half
                // is extracted toward the other half's estimate, which no
                // behavior of this user can move.
                let target = TargetRevenue { value: opa(&Bid::from_users(&other), vm_other).revenue };
                let truthful = icat(&own, vm_own, &target);
                let outcomes = threshold_set(&own, vm_own, &target.value)
                    .into_iter()
                    .map(|policy| {
                        icat_core(&own, vm_own, &target, |u, price| {
                            if u.id == user.id {
                                policy.accepts(price)
                            } else {
                                u.valuation_u >= *price
                            }
                        })
                    })
                    .collect();
                (truthful, outcomes)
            }
        };
        let truthful_payoff = payoff(&truthful, user);
        for outcome in deviated {
            let gain = payoff(&outcome, user) - truthful_payoff.clone();
            if best_gain.as_ref().map_or(true, |b| gain > *b) {
                best_gain = Some(gain);
            }
        }
    }
    best_gain.unwrap_or_else(S::zero)
}

/// Every acceptance policy that can behave distinctly against the finite set
/// of prices the extractor can post, plus both constant policies.
fn threshold_set<S: Scalar>(users: &[User<S>], vm_count: u32, target: &S) -> Vec<Acceptance<S>> {
    let total_demand: u64 = users.iter().map(|u| u64::from(u.demand_r)).sum();
    let supply = u64::from(vm_count);
    let mut set = vec![Acceptance::Never, Acceptance::Always];
    if supply > 0 {
        for d in 1..=total_demand {
            set.push(Acceptance::Threshold(target.clone() / S::from_count(d.min(supply))));
        }
    }
    for user in users {
        set.push(Acceptance::Threshold(user.valuation_u.clone()));
    }
    set
}

/// Utility of `user` under an outcome: `(valuation − price) × units won`.
fn payoff<S: Scalar>(outcome: &AuctionOutcome<S>, user: &User<S>) -> S {
    (user.valuation_u.clone() - outcome.clearing_price.clone()) * outcome.units_for(user.id)
}
