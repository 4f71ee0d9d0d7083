//! Per-state checks of the policy constraints.

use ndarray::Array2;

use crate::mdp::Policy;
use crate::uncertainty::ErrorBound;

/// Probability changes smaller than this count as zero against unbounded errors.
const ZERO_MASS: f64 = 1e-12;

fn weighted(pi: &Policy, pb: &Policy, errors: &Array2<ErrorBound>, s: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..pi.n_actions())
        .map(|a| {
            let d = f(pi.prob(s, a) - pb.prob(s, a));
            match errors[[s, a]] {
                ErrorBound::Finite(e) => e * d,
                ErrorBound::Unbounded if d <= ZERO_MASS => 0.0,
                ErrorBound::Unbounded => f64::INFINITY,
            }
        })
        .sum()
}

/// `Σ_a e(s,a) |π(a|s) − π_b(a|s)|`.
pub fn constrained_cost(pi: &Policy, pb: &Policy, errors: &Array2<ErrorBound>, s: usize) -> f64 {
    weighted(pi, pb, errors, s, f64::abs)
}

/// `Σ_a e(s,a) max(0, π(a|s) − π_b(a|s))`.
pub fn lower_cost(pi: &Policy, pb: &Policy, errors: &Array2<ErrorBound>, s: usize) -> f64 {
    weighted(pi, pb, errors, s, |d| d.max(0.0))
}

/// `Σ_a Q̂(s,a) (π(a|s) − π_b(a|s))`, or `None` when some action whose
/// probability changed has no estimate.
pub fn advantage(pi: &Policy, pb: &Policy, q_hat: &Array2<Option<f64>>, s: usize) -> Option<f64> {
    let mut total = 0.0;
    for a in 0..pi.n_actions() {
        let d = pi.prob(s, a) - pb.prob(s, a);
        match q_hat[[s, a]] {
            Some(q) => total += q * d,
            None if d.abs() <= ZERO_MASS => {}
            None => return None,
        }
    }
    Some(total)
}

/// Largest per-state excess of the plain constraint over `epsilon`.
pub fn max_constraint_violation(pi: &Policy, pb: &Policy, errors: &Array2<ErrorBound>, epsilon: f64) -> f64 {
    (0..pi.n_states())
        .map(|s| constrained_cost(pi, pb, errors, s) - epsilon)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn max_lower_violation(pi: &Policy, pb: &Policy, errors: &Array2<ErrorBound>, epsilon: f64) -> f64 {
    (0..pi.n_states())
        .map(|s| lower_cost(pi, pb, errors, s) - epsilon)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest per-state advantage over the states where it is defined.
pub fn min_advantage(pi: &Policy, pb: &Policy, q_hat: &Array2<Option<f64>>) -> f64 {
    (0..pi.n_states())
        .filter_map(|s| advantage(pi, pb, q_hat, s))
        .fold(f64::INFINITY, f64::min)
}

/// `π(a|s) = π_b(a|s)` on every bootstrapped pair.
pub fn equals_baseline_on(pi: &Policy, pb: &Policy, mask: &Array2<bool>) -> bool {
    mask.indexed_iter()
        .filter(|(_, &b)| b)
        .all(|((s, a), _)| pi.prob(s, a) == pb.prob(s, a))
}

/// `π(a|s) ≤ π_b(a|s) + tol` on every bootstrapped pair.
pub fn bounded_by_baseline_on(pi: &Policy, pb: &Policy, mask: &Array2<bool>, tol: f64) -> bool {
    mask.indexed_iter()
        .filter(|(_, &b)| b)
        .all(|((s, a), _)| pi.prob(s, a) <= pb.prob(s, a) + tol)
}
