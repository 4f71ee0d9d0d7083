//! Soft-SPIBB policy-improvement step.
//!
//! Within one state, moving mass away from a source action `i` and onto a
//! sink `j` with higher `Q` costs `e(i) + e(j)` per unit of mass (or `e(j)`
//! in the lower-constrained variant) and gains `Q(j) − Q(i)`. An optimal
//! solution never uses an action as both source and sink, so the per-state
//! linear program is a fractional multiple-choice knapsack: each source is
//! a group whose options are its possible sinks. Taking segments of every
//! group's upper convex hull in order of decreasing slope until the budget
//! `ε` runs out solves it exactly.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::mdp::Policy;
use crate::uncertainty::ErrorBound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftVariant {
    /// `Σ_a e |π − π_b| ≤ ε`.
    Plain,
    /// The plain constraint plus `Σ_a Q̂ (π − π_b) ≥ 0`.
    Advantageous,
    /// `Σ_a e max(0, π − π_b) ≤ ε`.
    Lower,
}

/// Output of [`soft_spibb_pi_step`].
#[derive(Debug, Clone)]
pub struct SoftStep {
    pub policy: Policy,
    /// Constraint budget spent in each state.
    pub budget_used: Array1<f64>,
}

/// Monte-Carlo baseline estimate used by the advantageous variant.
#[derive(Debug, Clone, Copy)]
pub struct AdvantageInput<'a> {
    pub q_hat: &'a Array2<Option<f64>>,
    /// Pairs without return samples count as `center − g_max` when gaining
    /// mass and `center + g_max` when losing it.
    pub g_max: f64,
    pub center: f64,
}

pub fn soft_spibb_pi_step(
    q: &Array2<f64>,
    baseline: &Policy,
    errors: &Array2<ErrorBound>,
    epsilon: f64,
    variant: SoftVariant,
    advantage: Option<AdvantageInput<'_>>,
) -> Result<SoftStep> {
    if q.dim() != baseline.probs().dim() || q.dim() != errors.dim() {
        return Err(SpiError::Shape("Q, baseline and error table differ in shape".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(SpiError::InvalidHyperparameter(format!("epsilon = {epsilon} must be >= 0")));
    }
    if variant == SoftVariant::Advantageous {
        match advantage {
            Some(adv) if adv.q_hat.dim() == q.dim() => {}
            Some(_) => return Err(SpiError::Shape("Q̂ table differs in shape".into())),
            None => {
                return Err(SpiError::InvalidArgument(
                    "advantageous variant needs a Monte-Carlo baseline estimate".into(),
                ))
            }
        }
    }
    let (n_s, n_a) = q.dim();
    let mut out = Array2::zeros((n_s, n_a));
    let mut used = Array1::zeros(n_s);
    for s in 0..n_s {
        let q_hat = advantage.map(|adv| (adv.q_hat.row(s), adv.center - adv.g_max, adv.center + adv.g_max));
        let (row, spent) = solve_state(q.row(s), baseline.row(s), errors.row(s), epsilon, variant, q_hat);
        out.row_mut(s).assign(&row);
        used[s] = spent;
    }
    Ok(SoftStep { policy: Policy::from_rows_normalized(out), budget_used: used })
}

#[derive(Debug, Clone, Copy)]
struct HullPoint {
    sink: usize,
    cost: f64,
    gain: f64,
    advantage: f64,
}

struct Group {
    source: usize,
    hull: Vec<HullPoint>,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    group: usize,
    index: usize,
    slope: f64,
}

fn solve_state(
    q: ArrayView1<'_, f64>,
    pb: ArrayView1<'_, f64>,
    e: ArrayView1<'_, ErrorBound>,
    epsilon: f64,
    variant: SoftVariant,
    q_hat: Option<(ArrayView1<'_, Option<f64>>, f64, f64)>,
) -> (Array1<f64>, f64) {
    let n_a = q.len();
    let mut groups = Vec::new();
    for i in 0..n_a {
        if pb[i] <= 0.0 {
            continue;
        }
        let source_cost = match (variant, e[i]) {
            (SoftVariant::Lower, _) => 0.0,
            (_, ErrorBound::Finite(v)) => v,
            (_, ErrorBound::Unbounded) => continue,
        };
        let mut options: Vec<HullPoint> = (0..n_a)
            .filter(|&j| j != i && q[j] > q[i])
            .filter_map(|j| {
                let sink_cost = e[j].finite()?;
                let advantage = q_hat.map_or(0.0, |(qh, low, high)| {
                    qh[j].unwrap_or(low) - qh[i].unwrap_or(high)
                });
                Some(HullPoint {
                    sink: j,
                    cost: pb[i] * (source_cost + sink_cost),
                    gain: pb[i] * (q[j] - q[i]),
                    advantage: pb[i] * advantage,
                })
            })
            .collect();
        if options.is_empty() {
            continue;
        }
        options.sort_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then(b.gain.total_cmp(&a.gain))
                .then(a.sink.cmp(&b.sink))
        });
        options.dedup_by(|later, kept| later.cost == kept.cost);
        groups.push(Group { source: i, hull: upper_hull(i, options) });
    }

    let mut segments = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        for (k, w) in group.hull.windows(2).enumerate() {
            let dc = w[1].cost - w[0].cost;
            let slope = if dc > 0.0 { (w[1].gain - w[0].gain) / dc } else { f64::INFINITY };
            segments.push(Segment { group: g, index: k, slope });
        }
    }
    segments.sort_by(|a, b| {
        b.slope
            .total_cmp(&a.slope)
            .then(a.group.cmp(&b.group))
            .then(a.index.cmp(&b.index))
    });

    // per group: completed hull index and fraction of the following segment
    let mut progress: Vec<(usize, f64)> = vec![(0, 0.0); groups.len()];
    let mut blocked = vec![false; groups.len()];
    let mut budget = epsilon;
    let mut advantage = 0.0;
    for seg in segments {
        if blocked[seg.group] {
            continue;
        }
        let hull = &groups[seg.group].hull;
        let (from, to) = (hull[seg.index], hull[seg.index + 1]);
        let dc = to.cost - from.cost;
        let mut frac: f64 = if dc > 0.0 { (budget / dc).min(1.0) } else { 1.0 };
        if variant == SoftVariant::Advantageous {
            let da = to.advantage - from.advantage;
            if da < 0.0 {
                frac = frac.min((advantage / -da).max(0.0));
            }
            advantage += frac * da;
        }
        budget = (budget - frac * dc).max(0.0);
        if frac >= 1.0 {
            progress[seg.group] = (seg.index + 1, 0.0);
        } else {
            progress[seg.group] = (seg.index, frac);
            blocked[seg.group] = true;
        }
        if budget <= 0.0 && dc > 0.0 {
            break;
        }
    }

    let mut row = pb.to_owned();
    for (group, &(k, frac)) in groups.iter().zip(&progress) {
        let mass = pb[group.source];
        row[group.source] -= mass;
        row[group.hull[k].sink] += mass * (1.0 - frac);
        if frac > 0.0 {
            row[group.hull[k + 1].sink] += mass * frac;
        }
    }
    row.mapv_inplace(|p| p.max(0.0));
    (row, epsilon - budget)
}

/// Upper concave hull of the origin (staying on `source`) and the options,
/// truncated where the gain stops increasing.
fn upper_hull(source: usize, options: Vec<HullPoint>) -> Vec<HullPoint> {
    let origin = HullPoint { sink: source, cost: 0.0, gain: 0.0, advantage: 0.0 };
    let mut hull = vec![origin];
    for p in options {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.cost - a.cost) * (p.gain - a.gain) - (b.gain - a.gain) * (p.cost - a.cost);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let best = hull
        .iter()
        .enumerate()
        .fold(0, |best, (k, p)| if p.gain > hull[best].gain { k } else { best });
    hull.truncate(best + 1);
    hull
}
