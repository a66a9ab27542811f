//! Joint VM placement and pricing for cooperating edge base stations.
//!
//! A network of base stations shares a fixed pool of virtual machines. Each
//! station sells its allocation to nearby users through prior-free
//! posted-price auctions ([`auctions`]), and the network searches for the
//! revenue-optimal allocation by simulating a reversible jump chain over
//! placements whose stationary law concentrates on the optimum ([`markov`]).
//! Exhaustive and uniform-price baselines ([`oracle`]) quantify the gain from
//! cooperating, and a perturbed-chain analysis ([`perturb`]) certifies how
//! much approximate per-station revenues can shift the chain.
//!
//! Prices, valuations, and revenues are generic over [`Scalar`]: use [`Real`]
//! for simulation speed and [`Exact`] where revenue equalities must be
//! decided without rounding error.

pub mod auctions;
pub mod error;
pub mod export;
pub mod markov;
pub mod model;
mod numeric;
pub mod oracle;
pub mod perturb;
pub mod rng;
pub mod scalar;

pub use error::{CoreError, Result};
pub use scalar::{RealScalar, Scalar};

pub use auctions::{deviation_search, icat, opa, puff, AuctionOutcome, Bid, Mechanism, PuffOutcome, TargetRevenue};
pub use markov::{
    simulate, stationary_distribution, transition_rate, ChainTrace, Evaluator, StationaryDistribution, StopRule,
};
pub use model::{
    enumerate_placements, generate_scenario, network_revenue, station_revenue, BaseStation, Placement, PriceVector,
    Scenario, ScenarioParams, User,
};
pub use oracle::{exhaustive_optimum, noncooperative_auction_baseline, uniform_price_baseline, OracleResult};
pub use perturb::{perturbed_stationary, tv_distance, verify_bounds, PerturbationSpec, PerturbedDistribution};

/// Default floating-point scalar for simulation and statistics.
pub type Real = f64;

/// Arbitrary-precision rational scalar for exact revenue accounting.
pub type Exact = num_rational::BigRational;
