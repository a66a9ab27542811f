//! The placement jump chain.
//!
//! States are placements; the chain moves by relocating one VM at a time.
//! With per-state revenue Φ(v) and inverse temperature β, the rate of the
//! move v → v' is `exp(½β(Φ(v') − Φ(v)))`, which satisfies detailed balance
//! with the softmax law `π(v) ∝ exp(βΦ(v))` — so the long-run fraction of
//! time spent in a placement grows exponentially with its revenue, and the
//! time-average revenue lands within `ln(#states)/β` of the optimum.
//!
//! In a deployment each station re-samples its own countdown whenever the
//! configuration changes, picking the next move uniformly among stations;
//! that uniform pick scales every move's rate by the same `2/K` (each move
//! touches exactly two stations), which rescales time but not the stationary
//! law. The simulator therefore draws directly from the aggregate process:
//! one exponential holding time at the total outgoing rate, then a jump
//! proportional to the per-move rates.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::auctions::{opa, puff, Bid};
use crate::error::{CoreError, Result};
use crate::model::{Placement, PriceVector, Scenario};
use crate::numeric::{logsumexp, max_of, softmax};
use crate::rng::{derived_seed, rng_from_seed};
use crate::scalar::{RealScalar, Scalar};

/// How per-placement revenue Φ is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    /// Each station runs the optimal posted-price auction on truthful bids.
    TruthfulOpa,
    /// Each station runs the partition mechanism. The partition seed is
    /// derived from `(seed, station, placement)`, so re-evaluating a
    /// placement always reproduces the same partitions and revenue.
    Puff { seed: u64 },
}

/// A placement with its evaluated revenue and the per-station prices that
/// achieved it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<S> {
    pub placement: Placement,
    pub revenue_phi: S,
    pub prices: PriceVector<S>,
}

/// Runs the evaluator's auction at every station and sums the revenue.
/// For the partition mechanism the reported per-station price is the
/// clearing price of the half that extracted more (zero if both failed).
pub fn evaluate_state<S: Scalar>(
    scenario: &Scenario<S>,
    placement: &Placement,
    evaluator: &Evaluator,
) -> Result<ChainState<S>> {
    scenario.validate_placement(placement)?;
    let mut total = S::zero();
    let mut prices = Vec::with_capacity(scenario.station_count());
    for (k, station) in scenario.stations.iter().enumerate() {
        let vm_count = placement.counts[k];
        let (revenue, price) = match evaluator {
            Evaluator::TruthfulOpa => {
                let outcome = opa(&Bid::from_users(&station.users), vm_count);
                (outcome.revenue, outcome.clearing_price)
            }
            Evaluator::Puff { seed } => {
                let run_seed = derived_seed(*seed, k as u64, placement.counts.iter().map(|&c| u64::from(c)));
                let outcome = puff(&station.users, vm_count, run_seed);
                let price = if outcome.second.revenue > outcome.first.revenue {
                    outcome.second.clearing_price.clone()
                } else {
                    outcome.first.clearing_price.clone()
                };
                (outcome.combined_revenue(), price)
            }
        };
        total = total + revenue;
        prices.push(price);
    }
    Ok(ChainState { placement: placement.clone(), revenue_phi: total, prices: PriceVector { prices } })
}

/// Placements reachable from `placement` by moving one VM out of or into
/// station `k`: first the moves away from `k` (destinations in station
/// order), then the moves into `k` (sources in station order).
pub fn neighbors(placement: &Placement, k: usize) -> Vec<Placement> {
    let mut out = Vec::new();
    for j in 0..placement.counts.len() {
        if j != k && placement.counts[k] >= 1 {
            let mut counts = placement.counts.clone();
            counts[k] -= 1;
            counts[j] += 1;
            out.push(Placement { counts });
        }
    }
    for j in 0..placement.counts.len() {
        if j != k && placement.counts[j] >= 1 {
            let mut counts = placement.counts.clone();
            counts[j] -= 1;
            counts[k] += 1;
            out.push(Placement { counts });
        }
    }
    out
}

/// Every placement one VM move away, each ordered (source, destination) pair
/// visited once; distinct pairs give distinct placements.
pub fn all_neighbors(placement: &Placement) -> Vec<Placement> {
    let k = placement.counts.len();
    let mut out = Vec::new();
    for from in 0..k {
        if placement.counts[from] == 0 {
            continue;
        }
        for to in 0..k {
            if to == from {
                continue;
            }
            let mut counts = placement.counts.clone();
            counts[from] -= 1;
            counts[to] += 1;
            out.push(Placement { counts });
        }
    }
    out
}

/// Jump rate `exp(½β(Φ(to) − Φ(from)))`. Swapping the direction inverts the
/// rate, which is exactly detailed balance for the softmax law.
pub fn transition_rate<R: RealScalar>(phi_from: R, phi_to: R, beta: R) -> R {
    let half = R::from_f64(0.5).expect("0.5 fits in scalar");
    (half * beta * (phi_to - phi_from)).exp()
}

/// One simulated visit: the state, how long the chain held it, its revenue.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<R> {
    pub placement: Placement,
    pub holding_time: R,
    pub revenue_phi: R,
}

/// A simulated path of the placement chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<R> {
    pub records: Vec<TraceRecord<R>>,
    pub beta: R,
    pub seed: u64,
}

/// When a simulation ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Record exactly this many visits.
    MaxJumps(u64),
    /// Run until the simulated clock reaches this horizon; the final visit's
    /// holding time is truncated so recorded time sums to the horizon.
    MaxSimTime(f64),
}

/// Simulates the placement chain. See the module docs for the rate model;
/// per visit the holding time is drawn first (inverse-CDF exponential at the
/// total outgoing rate, rescaled by `2/K`), then the jump target
/// (proportional to per-move rates, max-shifted in log space). Φ values are
/// memoized per placement; the evaluator's per-placement seed derivation
/// makes the cache invisible in the output.
pub fn simulate<R: RealScalar>(
    scenario: &Scenario<R>,
    beta: R,
    evaluator: &Evaluator,
    initial: &Placement,
    stop: StopRule,
    seed: u64,
) -> Result<ChainTrace<R>> {
    simulate_with_memoization(scenario, beta, evaluator, initial, stop, seed, true)
}

/// [`simulate`] with the Φ cache switchable. `memoize: false` re-runs the
/// evaluator at every visit; traces must come out identical either way, and
/// the flag exists so that equivalence can be verified.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_memoization<R: RealScalar>(
    scenario: &Scenario<R>,
    beta: R,
    evaluator: &Evaluator,
    initial: &Placement,
    stop: StopRule,
    seed: u64,
    memoize: bool,
) -> Result<ChainTrace<R>> {
    scenario.validate_placement(initial)?;
    if !(beta > R::zero()) || !beta.is_finite() {
        return Err(CoreError::invalid("beta", format!("{beta} is not a positive finite number")));
    }
    let mut trace = ChainTrace { records: Vec::new(), beta, seed };
    match stop {
        StopRule::MaxJumps(0) => return Ok(trace),
        StopRule::MaxSimTime(t) if t <= 0.0 => return Ok(trace),
        _ => {}
    }

    let mut rng = rng_from_seed(seed);
    let mut cache: HashMap<Vec<u32>, R> = HashMap::new();
    let phi_of = |placement: &Placement, cache: &mut HashMap<Vec<u32>, R>| -> Result<R> {
        if memoize {
            if let Some(&phi) = cache.get(&placement.counts) {
                return Ok(phi);
            }
        }
        let phi = evaluate_state(scenario, placement, evaluator)?.revenue_phi;
        if memoize {
            cache.insert(placement.counts.clone(), phi);
        }
        Ok(phi)
    };

    let stations = scenario.station_count();
    let two_over_k = R::from_f64(2.0 / stations as f64).expect("ratio fits in scalar");
    let half = R::from_f64(0.5).expect("0.5 fits in scalar");
    let mut current = initial.clone();
    let mut phi_current = phi_of(&current, &mut cache)?;
    let mut elapsed = R::zero();
    loop {
        let moves = all_neighbors(&current);
        if moves.is_empty() {
            // Single station or zero VMs: the chain is absorbed. One record
            // stands for the whole run (unit dwell under a jump budget, the
            // full horizon under a time budget).
            let holding = match stop {
                StopRule::MaxJumps(_) => R::one(),
                StopRule::MaxSimTime(t) => R::from_f64(t).expect("horizon fits in scalar"),
            };
            trace.records.push(TraceRecord { placement: current, holding_time: holding, revenue_phi: phi_current });
            return Ok(trace);
        }

        let mut log_rates = Vec::with_capacity(moves.len());
        for target in &moves {
            let phi_target = phi_of(target, &mut cache)?;
            log_rates.push(half * beta * (phi_target - phi_current));
        }
        let shift = max_of(&log_rates);
        let weights: Vec<R> = log_rates.iter().map(|&l| (l - shift).exp()).collect();
        let weight_sum = weights.iter().copied().fold(R::zero(), |a, w| a + w);
        let total_rate = two_over_k * shift.exp() * weight_sum;

        let holding = loop {
            let u: f64 = rng.gen();
            let tau = -R::from_f64(1.0 - u).expect("draw fits in scalar").ln() / total_rate;
            if tau > R::zero() {
                break tau;
            }
        };

        match stop {
            StopRule::MaxJumps(budget) => {
                trace.records.push(TraceRecord {
                    placement: current.clone(),
                    holding_time: holding,
                    revenue_phi: phi_current,
                });
                if trace.records.len() as u64 == budget {
                    return Ok(trace);
                }
            }
            StopRule::MaxSimTime(t) => {
                let horizon = R::from_f64(t).expect("horizon fits in scalar");
                if elapsed + holding >= horizon {
                    trace.records.push(TraceRecord {
                        placement: current.clone(),
                        holding_time: horizon - elapsed,
                        revenue_phi: phi_current,
                    });
                    return Ok(trace);
                }
                elapsed = elapsed + holding;
                trace.records.push(TraceRecord {
                    placement: current.clone(),
                    holding_time: holding,
                    revenue_phi: phi_current,
                });
            }
        }

        let pick: f64 = rng.gen();
        let mut threshold = R::from_f64(pick).expect("draw fits in scalar") * weight_sum;
        let mut chosen = moves.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if threshold < *w {
                chosen = i;
                break;
            }
            threshold = threshold - *w;
        }
        current = moves[chosen].clone();
        phi_current = phi_of(&current, &mut cache)?;
    }
}

/// The chain's stationary law over the full placement space.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution<R> {
    /// Placements in ascending lexicographic order.
    pub support: Vec<Placement>,
    pub probabilities: Vec<R>,
    /// Φ of each placement, aligned with `support`.
    pub revenue_phis: Vec<R>,
}

/// Closed-form stationary law `π(v) ∝ exp(βΦ(v))`, computed in log space
/// over the enumerated placement space.
pub fn stationary_distribution<R: RealScalar>(
    scenario: &Scenario<R>,
    beta: R,
    evaluator: &Evaluator,
) -> Result<StationaryDistribution<R>> {
    if !(beta > R::zero()) || !beta.is_finite() {
        return Err(CoreError::invalid("beta", format!("{beta} is not a positive finite number")));
    }
    let support = crate::model::enumerate_placements(scenario)?;
    let mut revenue_phis = Vec::with_capacity(support.len());
    for placement in &support {
        revenue_phis.push(evaluate_state(scenario, placement, evaluator)?.revenue_phi);
    }
    let logits: Vec<R> = revenue_phis.iter().map(|&phi| beta * phi).collect();
    Ok(StationaryDistribution { support, probabilities: softmax(&logits), revenue_phis })
}

/// Sandwich check for the smooth proxy of the best revenue.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExpCheck<R> {
    /// `(1/β)·ln Σ exp(βΦ)`.
    pub approx: R,
    /// Lower end of the sandwich: `max Φ`.
    pub lower: R,
    /// Upper end: `max Φ + ln(#states)/β`.
    pub upper: R,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl<R> LogSumExpCheck<R> {
    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

/// Evaluates the smooth proxy `(1/β)·ln Σ exp(βΦ)` and verifies it sits
/// between `max Φ` and `max Φ + ln(n)/β`, up to relative slack 1e−12 (or a
/// few ulps for lower-precision scalars).
pub fn logsumexp_bound_check<R: RealScalar>(phis: &[R], beta: R) -> Result<LogSumExpCheck<R>> {
    if phis.is_empty() {
        return Err(CoreError::invalid("phis", "needs at least one state"));
    }
    if !(beta > R::zero()) || !beta.is_finite() {
        return Err(CoreError::invalid("beta", format!("{beta} is not a positive finite number")));
    }
    let logits: Vec<R> = phis.iter().map(|&p| beta * p).collect();
    let approx = logsumexp(&logits) / beta;
    let lower = max_of(phis);
    let n = R::from_usize(phis.len()).expect("state count fits in scalar");
    let upper = lower + n.ln() / beta;
    let slack = R::from_f64(1e-12).expect("slack fits in scalar").max(R::epsilon() + R::epsilon())
        * (R::one() + approx.abs());
    Ok(LogSumExpCheck { approx, lower, upper, lower_ok: approx >= lower - slack, upper_ok: approx <= upper + slack })
}

/// Derived views of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStats<R> {
    /// Mean revenue of the trailing `window` visits, one entry per visit.
    pub running_avg: Vec<R>,
    /// Holding-time-weighted fraction of simulated time per placement,
    /// sorted by placement.
    pub occupancy: Vec<(Placement, R)>,
}

/// Windowed running mean of revenue and the hold-weighted occupancy
/// histogram. The window counts visits, not simulated time, and must be
/// positive; shorter prefixes average what is available.
pub fn trace_statistics<R: RealScalar>(trace: &ChainTrace<R>, window: usize) -> Result<TraceStats<R>> {
    if window == 0 {
        return Err(CoreError::invalid("window", "must be at least 1"));
    }
    // Each window is summed afresh: a sliding add/subtract would be O(1) per
    // visit but accumulates floating-point drift across long traces.
    let mut running_avg = Vec::with_capacity(trace.records.len());
    for i in 0..trace.records.len() {
        let start = (i + 1).saturating_sub(window);
        let mut sum = R::zero();
        for record in &trace.records[start..=i] {
            sum = sum + record.revenue_phi;
        }
        let len = R::from_usize(i + 1 - start).expect("window fits in scalar");
        running_avg.push(sum / len);
    }

    let mut held: BTreeMap<&Placement, R> = BTreeMap::new();
    let mut total = R::zero();
    for record in &trace.records {
        let slot = held.entry(&record.placement).or_insert_with(R::zero);
        *slot = *slot + record.holding_time;
        total = total + record.holding_time;
    }
    let occupancy = held.into_iter().map(|(p, t)| (p.clone(), t / total)).collect();
    Ok(TraceStats { running_avg, occupancy })
}

/// Holding-time-weighted mean revenue after dropping the first `burn_in`
/// visits; zero on an empty tail.
pub fn time_average_revenue<R: RealScalar>(trace: &ChainTrace<R>, burn_in: usize) -> R {
    let tail = trace.records.get(burn_in..).unwrap_or(&[]);
    let mut weighted = R::zero();
    let mut total = R::zero();
    for record in tail {
        weighted = weighted + record.revenue_phi * record.holding_time;
        total = total + record.holding_time;
    }
    if total > R::zero() {
        weighted / total
    } else {
        R::zero()
    }
}

/// Hold-weighted occupancy expressed on an explicit support; placements
/// never visited get probability zero. The support must cover the trace.
pub fn occupancy_on_support<R: RealScalar>(trace: &ChainTrace<R>, support: &[Placement]) -> Vec<R> {
    let index: HashMap<&Placement, usize> = support.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut mass = vec![R::zero(); support.len()];
    let mut total = R::zero();
    for record in &trace.records {
        if let Some(&i) = index.get(&record.placement) {
            mass[i] = mass[i] + record.holding_time;
        }
        total = total + record.holding_time;
    }
    if total > R::zero() {
        for m in &mut mass {
            *m = *m / total;
        }
    }
    mass
}
