//! Ground truth and baselines.
//!
//! The exhaustive oracle scores every placement with per-station optimal
//! auctions and returns the true maximum — the reference every simulated or
//! approximate result is measured against. The uniform-price and
//! per-station-auction baselines model networks that do not cooperate on
//! placement: VMs are parked in an arbitrary configuration, so their expected
//! revenue is the average over all placements.

use crate::auctions::{opa, Bid};
use crate::error::{CoreError, Result};
use crate::model::{
    enumerate_placements_capped, station_revenue, Placement, PriceVector, Scenario, DEFAULT_ENUMERATION_CAP,
};
use crate::scalar::Scalar;

/// The exhaustive optimum and the prices achieving it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<S> {
    pub best_placement: Placement,
    pub best_prices: PriceVector<S>,
    pub best_revenue: S,
}

/// Revenue of one placement under per-station optimal auctions, with the
/// clearing prices.
fn score<S: Scalar>(scenario: &Scenario<S>, placement: &Placement) -> (S, PriceVector<S>) {
    let mut total = S::zero();
    let mut prices = Vec::with_capacity(scenario.station_count());
    for (k, station) in scenario.stations.iter().enumerate() {
        let outcome = opa(&Bid::from_users(&station.users), placement.counts[k]);
        total = total + outcome.revenue;
        prices.push(outcome.clearing_price);
    }
    (total, PriceVector { prices })
}

/// Scores every placement; the backing data for oracle CSV output.
pub fn placement_revenues<S: Scalar>(scenario: &Scenario<S>, cap: u128) -> Result<Vec<(Placement, S)>> {
    let placements = enumerate_placements_capped(scenario.station_count(), scenario.total_vms, cap)?;
    Ok(placements.into_iter().map(|p| { let (revenue, _) = score(scenario, &p); (p, revenue) }).collect())
}

/// True optimal placement by exhaustive search, refusing spaces beyond the
/// default enumeration cap. Revenue ties resolve to the lexicographically
/// smallest placement, so results are reproducible.
pub fn exhaustive_optimum<S: Scalar>(scenario: &Scenario<S>) -> Result<OracleResult<S>> {
    exhaustive_optimum_capped(scenario, DEFAULT_ENUMERATION_CAP)
}

/// [`exhaustive_optimum`] with an explicit enumeration cap.
pub fn exhaustive_optimum_capped<S: Scalar>(scenario: &Scenario<S>, cap: u128) -> Result<OracleResult<S>> {
    scenario.validate()?;
    let placements = enumerate_placements_capped(scenario.station_count(), scenario.total_vms, cap)?;
    let mut best: Option<OracleResult<S>> = None;
    for placement in placements {
        let (revenue, prices) = score(scenario, &placement);
        // Strict improvement only: enumeration is ascending lexicographic, so
        // the first maximizer seen is the lexicographically smallest.
        let improves = match &best {
            Some(b) => revenue > b.best_revenue,
            None => true,
        };
        if improves {
            best = Some(OracleResult { best_placement: placement, best_prices: prices, best_revenue: revenue });
        }
    }
    Ok(best.expect("placement space is never empty"))
}

/// Revenue of charging one network-wide `price` without placement
/// cooperation. `cooperative: true` grants the best placement for that price
/// (the strongest uniform-price opponent); `false` averages over all
/// placements, modeling VMs parked blindly.
pub fn uniform_price_baseline<S: Scalar>(scenario: &Scenario<S>, price: &S, cooperative: bool) -> Result<S> {
    if *price < S::zero() || *price > S::one() {
        return Err(CoreError::invalid("price", format!("{price} is outside [0, 1]")));
    }
    scenario.validate()?;
    let placements =
        enumerate_placements_capped(scenario.station_count(), scenario.total_vms, DEFAULT_ENUMERATION_CAP)?;
    let revenue_of = |placement: &Placement| -> S {
        let mut total = S::zero();
        for (k, station) in scenario.stations.iter().enumerate() {
            total = total + station_revenue(station, price, placement.counts[k]);
        }
        total
    };
    if cooperative {
        let mut best = S::zero();
        for placement in &placements {
            let revenue = revenue_of(placement);
            if revenue > best {
                best = revenue;
            }
        }
        Ok(best)
    } else {
        let mut sum = S::zero();
        for placement in &placements {
            sum = sum + revenue_of(placement);
        }
        Ok(sum / S::from_count(placements.len() as u64))
    }
}

/// Expected revenue of stations auctioning optimally but with VMs parked in
/// a placement chosen blindly: the mean per-station-auction revenue over all
/// placements.
pub fn noncooperative_auction_baseline<S: Scalar>(scenario: &Scenario<S>) -> Result<S> {
    scenario.validate()?;
    let placements =
        enumerate_placements_capped(scenario.station_count(), scenario.total_vms, DEFAULT_ENUMERATION_CAP)?;
    let mut sum = S::zero();
    for placement in &placements {
        let (revenue, _) = score(scenario, placement);
        sum = sum + revenue;
    }
    Ok(sum / S::from_count(placements.len() as u64))
}
