//! Perturbed-chain analysis.
//!
//! When per-placement revenue is produced by a randomized mechanism instead
//! of the exact optimum, each state's Φ carries a bounded quantized error:
//! state `v` sees `Φ(v) + (n/a_v)·ψ_v` with probability `ρ_v[n]`, for `n`
//! in `−a_v..=a_v`. Averaging the jump dynamics over those errors leaves a
//! product-form stationary law: the softmax reweighted per state by
//! `σ_v = Σ_n ρ_v[n]·exp(β·(n/a_v)·ψ_v)`.
//!
//! Because every σ ratio lies within `exp(±2βψmax)`, the perturbed law can
//! shift each state's probability by at most `1 − exp(−2βψmax)` — the total
//! variation certificate — and the stationary revenue can move by at most
//! `2·Φmax·(1 − exp(−2βψmax))` in the operating regime this crate samples
//! (errors no larger than half the revenue scale, β at least the inverse
//! revenue scale); [`verify_bounds`] checks both certificates on concrete
//! instances.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::markov::{stationary_distribution, Evaluator, StationaryDistribution};
use crate::model::{Placement, Scenario};
use crate::numeric::softmax;
use crate::rng::rng_from_seed;
use crate::scalar::RealScalar;

/// Per-state quantized revenue error model.
///
/// State `v` (in enumeration order) has error half-width `psi[v] ≥ 0`,
/// quantization level `quantization[v] ≥ 1`, and a probability vector
/// `error_probs[v]` of length `2·quantization[v] + 1` over the error grid
/// `−a, …, 0, …, +a` (scaled to `±psi[v]`).
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec<R> {
    pub psi: Vec<R>,
    pub quantization: Vec<u32>,
    pub error_probs: Vec<Vec<R>>,
}

impl<R: RealScalar> PerturbationSpec<R> {
    /// Checks the error model against a state count: aligned lengths, non-negative
    /// half-widths, positive quantization, and probability vectors of the
    /// right size summing to 1 within 1e−12.
    pub fn validate(&self, states: usize) -> Result<()> {
        if self.psi.len() != states || self.quantization.len() != states || self.error_probs.len() != states {
            return Err(CoreError::DimensionMismatch {
                expected: states,
                got: self.psi.len().min(self.quantization.len()).min(self.error_probs.len()),
            });
        }
        for v in 0..states {
            if !(self.psi[v] >= R::zero()) {
                return Err(CoreError::invalid("psi", format!("state {v}: {} is negative", self.psi[v])));
            }
            let a = self.quantization[v];
            if a == 0 {
                return Err(CoreError::invalid("quantization", format!("state {v}: must be at least 1")));
            }
            let rho = &self.error_probs[v];
            if rho.len() != 2 * a as usize + 1 {
                return Err(CoreError::invalid(
                    "error_probs",
                    format!("state {v}: expected {} entries, got {}", 2 * a + 1, rho.len()),
                ));
            }
            let mut sum = R::zero();
            for &p in rho {
                if !(p >= R::zero()) {
                    return Err(CoreError::invalid("error_probs", format!("state {v}: negative probability")));
                }
                sum = sum + p;
            }
            if (sum - R::one()).abs() > R::from_f64(1e-12).expect("slack fits in scalar") {
                return Err(CoreError::invalid("error_probs", format!("state {v}: sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    /// Largest error half-width across states.
    pub fn psi_max(&self) -> R {
        self.psi.iter().copied().fold(R::zero(), R::max)
    }

    /// Mean error of state `v` under its probability vector:
    /// `ψ_v · Σ_n ρ_v[n] · (n/a_v)`.
    pub fn mean_error(&self, v: usize) -> R {
        let a = self.quantization[v] as i64;
        let mut mean = R::zero();
        for (i, &p) in self.error_probs[v].iter().enumerate() {
            let n = i as i64 - a;
            mean = mean + p * R::from_i64(n).expect("grid index fits in scalar");
        }
        mean / R::from_i64(a).expect("quantization fits in scalar") * self.psi[v]
    }
}

/// Samples a spec for `states` states: half-widths uniform on
/// [0, `psi_max`], quantization uniform on 1..=`max_quantization`, and a
/// normalized uniform probability vector per state.
pub fn sample_spec(states: usize, psi_max: f64, max_quantization: u32, seed: u64) -> PerturbationSpec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut psi = Vec::with_capacity(states);
    let mut quantization = Vec::with_capacity(states);
    let mut error_probs = Vec::with_capacity(states);
    for _ in 0..states {
        psi.push(rng.gen::<f64>() * psi_max);
        let a = rng.gen_range(1..=max_quantization.max(1));
        quantization.push(a);
        let raw: Vec<f64> = (0..2 * a as usize + 1).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        error_probs.push(raw.into_iter().map(|w| w / total).collect());
    }
    PerturbationSpec { psi, quantization, error_probs }
}

/// The error-averaged stationary law and its per-state weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDistribution<R> {
    /// Placements in ascending lexicographic order.
    pub support: Vec<Placement>,
    pub probabilities: Vec<R>,
    /// `σ_v = Σ_n ρ_v[n]·exp(β·(n/a_v)·ψ_v)`, aligned with `support`.
    pub sigma_weights: Vec<R>,
}

/// Stationary law of the chain whose per-state revenue carries the error
/// model's quantized noise: softmax of `β·Φ + ln σ`. A zero-error model collapses to
/// the unperturbed law — bit-for-bit when each probability vector sums to
/// exactly one in the scalar (dyadic vectors do), since every σ is then
/// exactly 1 and the logits are untouched.
pub fn perturbed_stationary<R: RealScalar>(
    scenario: &Scenario<R>,
    beta: R,
    spec: &PerturbationSpec<R>,
) -> Result<PerturbedDistribution<R>> {
    let base = stationary_distribution(scenario, beta, &Evaluator::TruthfulOpa)?;
    spec.validate(base.support.len())?;
    let sigma_weights: Vec<R> = (0..base.support.len())
        .map(|v| {
            let a = spec.quantization[v] as i64;
            let a_scalar = R::from_i64(a).expect("quantization fits in scalar");
            let mut sigma = R::zero();
            for (i, &p) in spec.error_probs[v].iter().enumerate() {
                let n = R::from_i64(i as i64 - a).expect("grid index fits in scalar");
                sigma = sigma + p * (beta * (n / a_scalar) * spec.psi[v]).exp();
            }
            sigma
        })
        .collect();
    let logits: Vec<R> =
        base.revenue_phis.iter().zip(&sigma_weights).map(|(&phi, &sigma)| beta * phi + sigma.ln()).collect();
    Ok(PerturbedDistribution { support: base.support, probabilities: softmax(&logits), sigma_weights })
}

/// Half the L1 distance between two probability vectors on the same support.
pub fn tv_distance_probs<R: RealScalar>(p: &[R], q: &[R]) -> Result<R> {
    if p.len() != q.len() {
        return Err(CoreError::SupportMismatch);
    }
    let mut sum = R::zero();
    for (&a, &b) in p.iter().zip(q) {
        sum = sum + (a - b).abs();
    }
    Ok(sum / R::from_f64(2.0).expect("2 fits in scalar"))
}

/// Total variation distance between the exact and perturbed stationary laws;
/// errors unless the supports are identical.
pub fn tv_distance<R: RealScalar>(
    base: &StationaryDistribution<R>,
    perturbed: &PerturbedDistribution<R>,
) -> Result<R> {
    if base.support != perturbed.support {
        return Err(CoreError::SupportMismatch);
    }
    tv_distance_probs(&base.probabilities, &perturbed.probabilities)
}

/// Both perturbation certificates evaluated on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<R> {
    /// Observed total variation between exact and perturbed laws.
    pub tv: R,
    /// Certificate `1 − exp(−2βψmax)`.
    pub tv_bound: R,
    /// Observed worst per-state gap between exact and error-averaged
    /// stationary revenue contributions.
    pub revenue_gap: R,
    /// Certificate `2·Φmax·(1 − exp(−2βψmax))`.
    pub gap_bound: R,
    pub tv_ok: bool,
    pub gap_ok: bool,
}

impl<R> BoundReport<R> {
    pub fn both_hold(&self) -> bool {
        self.tv_ok && self.gap_ok
    }
}

/// Computes the perturbed law, measures total variation and the stationary
/// revenue gap, and checks both against their closed-form certificates.
/// The revenue gap compares `π(v)·Φ(v)` against `π̄(v)·Φ̄(v)`, where `Φ̄`
/// adds each state's mean error to Φ, and takes the worst state.
pub fn verify_bounds<R: RealScalar>(
    scenario: &Scenario<R>,
    beta: R,
    spec: &PerturbationSpec<R>,
) -> Result<BoundReport<R>> {
    let base = stationary_distribution(scenario, beta, &Evaluator::TruthfulOpa)?;
    spec.validate(base.support.len())?;
    let perturbed = perturbed_stationary(scenario, beta, spec)?;
    let tv = tv_distance(&base, &perturbed)?;

    let psi_max = spec.psi_max();
    let two = R::from_f64(2.0).expect("2 fits in scalar");
    let tv_bound = R::one() - (-two * beta * psi_max).exp();

    let phi_max = base.revenue_phis.iter().copied().fold(R::zero(), R::max);
    let mut revenue_gap = R::zero();
    for v in 0..base.support.len() {
        let exact = base.probabilities[v] * base.revenue_phis[v];
        let averaged = perturbed.probabilities[v] * (base.revenue_phis[v] + spec.mean_error(v));
        revenue_gap = revenue_gap.max((exact - averaged).abs());
    }
    let gap_bound = two * phi_max * tv_bound;

    let slack = R::from_f64(1e-12).expect("slack fits in scalar");
    Ok(BoundReport {
        tv,
        tv_bound,
        revenue_gap,
        gap_bound,
        tv_ok: tv <= tv_bound + slack,
        gap_ok: revenue_gap <= gap_bound + slack,
    })
}
