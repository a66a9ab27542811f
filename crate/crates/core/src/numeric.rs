//! Shared log-space helpers.
//!
//! Both the exact stationary law and its perturbed counterpart normalize
//! exponentials of potentially large logits; routing both through the same
//! max-shifted code path keeps them bitwise identical when their logits are.

use crate::scalar::RealScalar;

/// Largest element of a non-empty slice.
pub(crate) fn max_of<R: RealScalar>(xs: &[R]) -> R {
    xs.iter().copied().fold(R::neg_infinity(), R::max)
}

/// exp-normalizes `logits` into probabilities, shifting by the maximum so no
/// intermediate overflows.
pub(crate) fn softmax<R: RealScalar>(logits: &[R]) -> Vec<R> {
    let shift = max_of(logits);
    let weights: Vec<R> = logits.iter().map(|&l| (l - shift).exp()).collect();
    let total = weights.iter().copied().fold(R::zero(), |a, w| a + w);
    weights.into_iter().map(|w| w / total).collect()
}

/// ln Σ exp(x) of a non-empty slice, max-shifted.
pub(crate) fn logsumexp<R: RealScalar>(xs: &[R]) -> R {
    let shift = max_of(xs);
    let total = xs.iter().map(|&x| (x - shift).exp()).fold(R::zero(), |a, w| a + w);
    shift + total.ln()
}
