use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::CountTables;
use crate::error::{Result, SpiError};
use crate::mdp::Policy;

/// `B = {(s, a) : N(s, a) ≤ N_∧}`.
pub fn bootstrapped_set(counts: &CountTables, n_wedge: usize) -> Array2<bool> {
    counts.n_sa.mapv(|n| n <= n_wedge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpibbMode {
    /// Bootstrapped pairs keep exactly the baseline probability.
    PiB,
    /// Bootstrapped pairs may lose, but never gain, probability.
    PiLeqB,
}

/// Value-maximising policy in the SPIBB feasible set, state by state.
pub fn spibb_pi_step(
    q: &Array2<f64>,
    baseline: &Policy,
    bootstrapped: &Array2<bool>,
    mode: SpibbMode,
) -> Result<Policy> {
    if q.dim() != baseline.probs().dim() || q.dim() != bootstrapped.dim() {
        return Err(SpiError::Shape("Q, baseline and bootstrapped set differ in shape".into()));
    }
    let (n_s, n_a) = q.dim();
    let mut out = Array2::zeros((n_s, n_a));
    for s in 0..n_s {
        let pb = baseline.row(s);
        let boot = bootstrapped.row(s);
        let qs = q.row(s);
        match mode {
            SpibbMode::PiB => {
                let best = (0..n_a)
                    .filter(|&a| !boot[a])
                    .fold(None, |best: Option<usize>, a| match best {
                        Some(b) if qs[b] >= qs[a] => Some(b),
                        _ => Some(a),
                    });
                let Some(best) = best else {
                    out.row_mut(s).assign(&pb);
                    continue;
                };
                let mut free = 1.0;
                for a in 0..n_a {
                    if boot[a] {
                        out[[s, a]] = pb[a];
                        free -= pb[a];
                    }
                }
                out[[s, best]] += free;
            }
            SpibbMode::PiLeqB => {
                let mut order: Vec<usize> = (0..n_a).collect();
                order.sort_by(|&a, &b| qs[b].total_cmp(&qs[a]).then(a.cmp(&b)));
                let mut remaining = 1.0;
                for a in order {
                    // the slack absorbs rounding so a fully bootstrapped row stays bit-identical
                    let mass = if !boot[a] || pb[a] > remaining + 1e-12 { remaining } else { pb[a] };
                    out[[s, a]] = mass;
                    remaining = (remaining - mass).max(0.0);
                    if remaining <= 0.0 {
                        break;
                    }
                }
                if remaining > 1e-12 {
                    // every action bootstrapped; the leftover came from rounding
                    out.row_mut(s).assign(&pb);
                }
            }
        }
    }
    Ok(Policy::from_rows_normalized(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn baseline() -> Policy {
        Policy::new(array![[0.2, 0.3, 0.5]]).unwrap()
    }

    #[test]
    fn empty_set_is_greedy() {
        let q = array![[0.0, 2.0, 1.0]];
        let boot = Array2::from_elem((1, 3), false);
        for mode in [SpibbMode::PiB, SpibbMode::PiLeqB] {
            let pi = spibb_pi_step(&q, &baseline(), &boot, mode).unwrap();
            assert_eq!(pi.probs(), &array![[0.0, 1.0, 0.0]]);
        }
    }

    #[test]
    fn full_set_is_baseline() {
        let q = array![[0.0, 2.0, 1.0]];
        let boot = Array2::from_elem((1, 3), true);
        let pi = spibb_pi_step(&q, &baseline(), &boot, SpibbMode::PiB).unwrap();
        assert_eq!(pi, baseline());
        let pi = spibb_pi_step(&q, &baseline(), &boot, SpibbMode::PiLeqB).unwrap();
        assert_eq!(pi.probs(), baseline().probs());
    }

    #[test]
    fn pi_leq_b_caps_bootstrapped_best_action() {
        let q = array![[0.0, 2.0, 1.0]];
        let boot = array![[false, true, false]];
        let pi = spibb_pi_step(&q, &baseline(), &boot, SpibbMode::PiLeqB).unwrap();
        assert!((pi.prob(0, 1) - 0.3).abs() < 1e-15);
        assert!((pi.prob(0, 2) - 0.7).abs() < 1e-15);
        let pi = spibb_pi_step(&q, &baseline(), &boot, SpibbMode::PiB).unwrap();
        assert!((pi.prob(0, 1) - 0.3).abs() < 1e-15);
        assert!((pi.prob(0, 2) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bootstrapped_set_boundaries() {
        let mut c = CountTables::empty(1, 3);
        c.n_sa = array![[0, 3, 8]];
        assert_eq!(bootstrapped_set(&c, 0), array![[true, false, false]]);
        assert_eq!(bootstrapped_set(&c, 7), array![[true, true, false]]);
        c.n_sa = array![[9, 10, 11]];
        assert!(bootstrapped_set(&c, 8).iter().all(|b| !b));
    }
}
