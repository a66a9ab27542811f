//! Problem instances: users, base stations, VM placements, and the
//! posted-price revenue they induce.
//!
//! A scenario fixes the network (stations and their users) and a VM budget;
//! a placement distributes that budget across stations. Revenue accounting
//! is exact up to the scalar: a user buys whenever its valuation is at least
//! the posted price (ties buy), and the marginal unit is divisible, so a
//! station sells exactly `min(cleared demand, its VMs)` units.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// Ordinal index of a user within its base station.
pub type UserId = u32;

/// Default ceiling on the enumerable placement-space size. Larger spaces are
/// refused rather than subsampled, so enumeration-based results are always
/// exact.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// One tenant: requests `demand_r` VM units and pays up to `valuation_u` per
/// unit.
#[derive(Debug, Clone, PartialEq)]
pub struct User<S> {
    pub id: UserId,
    pub demand_r: u32,
    pub valuation_u: S,
}

impl<S: Scalar> User<S> {
    /// Validating constructor: demand must be positive and the valuation must
    /// lie in [0, 1].
    pub fn new(id: UserId, demand_r: u32, valuation_u: S) -> Result<Self> {
        if demand_r == 0 {
            return Err(CoreError::invalid("demand_r", "must be at least 1"));
        }
        if valuation_u < S::zero() || valuation_u > S::one() {
            return Err(CoreError::invalid("valuation_u", format!("{valuation_u} is outside [0, 1]")));
        }
        Ok(User { id, demand_r, valuation_u })
    }
}

/// A base station and the users attached to it.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation<S> {
    pub id: u32,
    pub users: Vec<User<S>>,
}

impl<S: Scalar> BaseStation<S> {
    /// Total demand of the attached users, in VM units.
    pub fn total_demand(&self) -> u64 {
        self.users.iter().map(|u| u64::from(u.demand_r)).sum()
    }
}

/// Immutable problem instance: the stations, their users, and the VM budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<S> {
    pub stations: Vec<BaseStation<S>>,
    pub total_vms: u32,
    pub rng_seed: u64,
}

impl<S: Scalar> Scenario<S> {
    /// Number of stations K.
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    /// Total demand across all stations, in VM units.
    pub fn total_demand(&self) -> u64 {
        self.stations.iter().map(|s| s.total_demand()).sum()
    }

    /// Checks the structural invariants: at least one station, positive
    /// demands, valuations in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.stations.is_empty() {
            return Err(CoreError::invalid("stations", "scenario needs at least one station"));
        }
        for station in &self.stations {
            for user in &station.users {
                User::new(user.id, user.demand_r, user.valuation_u.clone())?;
            }
        }
        Ok(())
    }

    /// Checks that `placement` covers every station and spends exactly the
    /// VM budget.
    pub fn validate_placement(&self, placement: &Placement) -> Result<()> {
        if placement.counts.len() != self.station_count() {
            return Err(CoreError::DimensionMismatch { expected: self.station_count(), got: placement.counts.len() });
        }
        if placement.total() != self.total_vms {
            return Err(CoreError::VmBudgetMismatch { expected: self.total_vms, got: placement.total() });
        }
        Ok(())
    }

    /// Re-types valuations into another scalar through f64. Exact when the
    /// target scalar represents every f64 (rationals do); demands and ids are
    /// copied verbatim.
    pub fn cast<T: Scalar>(&self) -> Scenario<T> {
        Scenario {
            stations: self
                .stations
                .iter()
                .map(|s| BaseStation {
                    id: s.id,
                    users: s
                        .users
                        .iter()
                        .map(|u| User {
                            id: u.id,
                            demand_r: u.demand_r,
                            valuation_u: T::from_f64(u.valuation_u.to_f64().expect("valuation is finite"))
                                .expect("valuation fits in scalar"),
                        })
                        .collect(),
                })
                .collect(),
            total_vms: self.total_vms,
            rng_seed: self.rng_seed,
        }
    }
}

/// VM allocation across stations; one state of the placement chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    pub counts: Vec<u32>,
}

impl Placement {
    pub fn new(counts: Vec<u32>) -> Self {
        Placement { counts }
    }

    /// Total VMs the placement spends.
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Dash-joined counts, e.g. `2-0-4`; the state label used in CSV output.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.counts.iter().map(u32::to_string).collect();
        parts.join("-")
    }

    /// Even split of `total_vms` across `stations`, any remainder going to
    /// the lowest-indexed stations. The default initial chain state.
    pub fn balanced(stations: usize, total_vms: u32) -> Placement {
        let base = total_vms / stations as u32;
        let remainder = (total_vms % stations as u32) as usize;
        Placement { counts: (0..stations).map(|k| base + u32::from(k < remainder)).collect() }
    }
}

/// Per-station posted prices, each in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector<S> {
    pub prices: Vec<S>,
}

impl<S: Scalar> PriceVector<S> {
    /// The same price at every station.
    pub fn uniform(stations: usize, price: S) -> Self {
        PriceVector { prices: vec![price; stations] }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.prices {
            if *p < S::zero() || *p > S::one() {
                return Err(CoreError::invalid("price", format!("{p} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Revenue of one station posting `price` with `vm_count` VMs:
/// `price × min(demand cleared at price, vm_count)`. A user buys exactly when
/// its valuation is at least the price, and the marginal unit is divisible,
/// so supply binds as a plain minimum.
pub fn station_revenue<S: Scalar>(station: &BaseStation<S>, price: &S, vm_count: u32) -> S {
    let cleared: u64 =
        station.users.iter().filter(|u| u.valuation_u >= *price).map(|u| u64::from(u.demand_r)).sum();
    let units = cleared.min(u64::from(vm_count));
    price.clone() * S::from_count(units)
}

/// Network revenue of one placement under per-station prices.
pub fn network_revenue<S: Scalar>(scenario: &Scenario<S>, placement: &Placement, prices: &PriceVector<S>) -> Result<S> {
    scenario.validate_placement(placement)?;
    if prices.prices.len() != scenario.station_count() {
        return Err(CoreError::DimensionMismatch { expected: scenario.station_count(), got: prices.prices.len() });
    }
    let mut total = S::zero();
    for (k, station) in scenario.stations.iter().enumerate() {
        total = total + station_revenue(station, &prices.prices[k], placement.counts[k]);
    }
    Ok(total)
}

/// Everything scenario generation needs; generation is a pure function of
/// these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Users at each station; the length fixes the station count.
    pub users_per_station: Vec<u32>,
    pub total_vms: u32,
    /// Inclusive demand range, sampled uniformly per user.
    pub demand_range: (u32, u32),
    /// Valuations are `a + (b − a)·x` with `x` uniform on [0, 1); the window
    /// must sit inside [0, 1].
    pub valuation_range: (f64, f64),
    pub seed: u64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.users_per_station.is_empty() {
            return Err(CoreError::invalid("users_per_station", "needs at least one station"));
        }
        let (dlo, dhi) = self.demand_range;
        if dlo == 0 || dlo > dhi {
            return Err(CoreError::invalid("demand_range", format!("({dlo}, {dhi}) is not a positive range")));
        }
        let (a, b) = self.valuation_range;
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
            return Err(CoreError::invalid("valuation_range", format!("({a}, {b}) is not inside [0, 1]")));
        }
        Ok(())
    }
}

/// Samples a scenario. The draw order is fixed (stations in order, users in
/// order; demand before valuation), so a seed pins the instance bit-for-bit.
/// Valuation windows that share a seed also share the underlying unit draws,
/// which makes revenue comparisons across windows pointwise monotone.
pub fn generate_scenario<S: Scalar>(params: &ScenarioParams) -> Result<Scenario<S>> {
    params.validate()?;
    let mut rng = rng_from_seed(params.seed);
    let (dlo, dhi) = params.demand_range;
    let (a, b) = params.valuation_range;
    let stations = params
        .users_per_station
        .iter()
        .enumerate()
        .map(|(k, &n)| BaseStation {
            id: k as u32,
            users: (0..n)
                .map(|i| {
                    let demand_r = rng.gen_range(dlo..=dhi);
                    let x: f64 = rng.gen();
                    User {
                        id: i,
                        demand_r,
                        valuation_u: S::from_f64(a + (b - a) * x).expect("valuation fits in scalar"),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(Scenario { stations, total_vms: params.total_vms, rng_seed: params.seed })
}

/// Number of placements of `vms` VMs across `stations` stations:
/// `C(vms + stations − 1, stations − 1)`. Saturates at `u128::MAX` if the
/// count overflows, which still compares correctly against any cap.
pub fn placement_count(stations: usize, vms: u32) -> u128 {
    binomial_saturating(u128::from(vms) + stations as u128 - 1, stations as u128 - 1)
}

/// C(n, k) by the multiplicative formula; every intermediate division is
/// exact because each partial product is itself a binomial coefficient.
fn binomial_saturating(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        match acc.checked_mul(n - k + i) {
            Some(product) => acc = product / i,
            None => return u128::MAX,
        }
    }
    acc
}

/// All placements of the scenario's VM budget, in ascending lexicographic
/// order, refused beyond [`DEFAULT_ENUMERATION_CAP`] states.
pub fn enumerate_placements<S: Scalar>(scenario: &Scenario<S>) -> Result<Vec<Placement>> {
    enumerate_placements_capped(scenario.station_count(), scenario.total_vms, DEFAULT_ENUMERATION_CAP)
}

/// All placements of `vms` VMs across `stations` stations in ascending
/// lexicographic order, refused when the space exceeds `cap` states.
pub fn enumerate_placements_capped(stations: usize, vms: u32, cap: u128) -> Result<Vec<Placement>> {
    if stations == 0 {
        return Err(CoreError::invalid("stations", "needs at least one station"));
    }
    let states = placement_count(stations, vms);
    if states > cap {
        return Err(CoreError::EnumerationTooLarge { states, cap });
    }
    let mut out = Vec::with_capacity(states as usize);
    let mut scratch = vec![0u32; stations];
    fill_placements(&mut scratch, 0, vms, &mut out);
    Ok(out)
}

/// Recursive composition builder: position `k` takes 0..=remaining in order,
/// which yields ascending lexicographic output.
fn fill_placements(scratch: &mut Vec<u32>, k: usize, remaining: u32, out: &mut Vec<Placement>) {
    if k + 1 == scratch.len() {
        scratch[k] = remaining;
        out.push(Placement { counts: scratch.clone() });
        return;
    }
    for c in 0..=remaining {
        scratch[k] = c;
        fill_placements(scratch, k + 1, remaining - c, out);
    }
}

#[derive(Serialize, Deserialize)]
struct UserFile {
    r: u32,
    u: f64,
}

#[derive(Serialize, Deserialize)]
struct StationFile {
    users: Vec<UserFile>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    seed: u64,
    total_vms: u32,
    stations: Vec<StationFile>,
}

/// Serializes a scenario with a fixed key order (`seed`, `total_vms`,
/// `stations`), so identical scenarios produce byte-identical files.
/// Valuations are written as their shortest round-trip decimal form and read
/// back to the same f64.
pub fn scenario_to_json<S: Scalar>(scenario: &Scenario<S>) -> String {
    let file = ScenarioFile {
        seed: scenario.rng_seed,
        total_vms: scenario.total_vms,
        stations: scenario
            .stations
            .iter()
            .map(|s| StationFile {
                users: s
                    .users
                    .iter()
                    .map(|u| UserFile { r: u.demand_r, u: u.valuation_u.to_f64().expect("valuation is finite") })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("scenario serializes");
    text.push('\n');
    text
}

/// Parses and validates a scenario produced by [`scenario_to_json`].
pub fn scenario_from_json<S: Scalar>(text: &str) -> Result<Scenario<S>> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| CoreError::ScenarioFormat(e.to_string()))?;
    let scenario = Scenario {
        stations: file
            .stations
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                Ok(BaseStation {
                    id: k as u32,
                    users: s
                        .users
                        .into_iter()
                        .enumerate()
                        .map(|(i, u)| {
                            User::new(i as UserId, u.r, S::from_f64(u.u).expect("valuation fits in scalar"))
                        })
                        .collect::<Result<Vec<_>>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        total_vms: file.total_vms,
        rng_seed: file.seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Writes a scenario file; see [`scenario_to_json`] for the format.
pub fn save_scenario<S: Scalar>(scenario: &Scenario<S>, path: &Path) -> Result<()> {
    Ok(fs::write(path, scenario_to_json(scenario))?)
}

/// Reads a scenario file written by [`save_scenario`].
pub fn load_scenario<S: Scalar>(path: &Path) -> Result<Scenario<S>> {
    scenario_from_json(&fs::read_to_string(path)?)
}
