//! Finite MDPs, stochastic policies and exact dynamic programming.
//!
//! Everything here is immutable after construction. Transition tables are
//! stored densely (`S × A × S`) but every `(s, a)` row also keeps a sparse
//! successor list, which is what the evaluation kernels iterate over.

mod io;
mod linear;

pub use io::{load_mdp, read_mdp, save_mdp, write_mdp};

use ndarray::{Array1, Array2, Array3, ArrayView1};

use crate::error::{Result, SpiError};

/// Tolerance on row sums of probability tables.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Relative slack used when comparing action values for ties.
const TIE_TOL: f64 = 1e-12;

/// One reachable next state of a state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub state: usize,
    pub prob: f64,
    /// `R₃(s, a, s')` when the MDP carries a transition-dependent reward, else `R(s, a)`.
    pub reward: f64,
}

/// A finite discounted MDP.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Array3<f64>,
    reward: Array2<f64>,
    reward_sas: Option<Array3<f64>>,
    gamma: f64,
    terminal: Vec<bool>,
    r_max: f64,
    successors: Vec<Vec<Successor>>,
    expected_reward: Array2<f64>,
}

impl TabularMdp {
    /// Validates and builds an MDP. Terminal states are rewritten as
    /// zero-reward self-loops.
    pub fn new(
        transition: Array3<f64>,
        reward: Array2<f64>,
        reward_sas: Option<Array3<f64>>,
        gamma: f64,
        terminal: Vec<bool>,
        r_max: f64,
    ) -> Result<Self> {
        let (n_states, n_actions, n_next) = transition.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(SpiError::InvalidMdp("empty state or action set".into()));
        }
        if n_next != n_states {
            return Err(SpiError::InvalidMdp(format!(
                "transition table is {n_states}x{n_actions}x{n_next}, expected a square S dimension"
            )));
        }
        if reward.dim() != (n_states, n_actions) {
            return Err(SpiError::InvalidMdp(format!(
                "reward table has shape {:?}, expected ({n_states}, {n_actions})",
                reward.dim()
            )));
        }
        if let Some(r3) = &reward_sas {
            if r3.dim() != transition.dim() {
                return Err(SpiError::InvalidMdp("R(s,a,s') shape differs from P".into()));
            }
        }
        if terminal.len() != n_states {
            return Err(SpiError::InvalidMdp("terminal mask length differs from S".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(SpiError::InvalidMdp(format!("gamma = {gamma} outside [0, 1)")));
        }
        if !(r_max >= 0.0 && r_max.is_finite()) {
            return Err(SpiError::InvalidMdp(format!("r_max = {r_max} must be finite and >= 0")));
        }

        let mut transition = transition;
        let mut reward = reward;
        let mut reward_sas = reward_sas;
        for (s, _) in terminal.iter().enumerate().filter(|(_, t)| **t) {
            for a in 0..n_actions {
                for s2 in 0..n_states {
                    transition[[s, a, s2]] = if s2 == s { 1.0 } else { 0.0 };
                }
                reward[[s, a]] = 0.0;
                if let Some(r3) = reward_sas.as_mut() {
                    for s2 in 0..n_states {
                        r3[[s, a, s2]] = 0.0;
                    }
                }
            }
        }

        let bound = r_max * (1.0 + 1e-12) + 1e-12;
        let mut successors = Vec::with_capacity(n_states * n_actions);
        let mut expected_reward = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            for a in 0..n_actions {
                let mut row_sum = 0.0;
                let mut succ = Vec::new();
                let mut r_exp = 0.0;
                for s2 in 0..n_states {
                    let p = transition[[s, a, s2]];
                    if !(p >= 0.0) || !p.is_finite() {
                        return Err(SpiError::InvalidMdp(format!(
                            "P({s2}|{s},{a}) = {p} is not a probability"
                        )));
                    }
                    row_sum += p;
                    if p > 0.0 {
                        let r = match &reward_sas {
                            Some(r3) => {
                                let r = r3[[s, a, s2]];
                                if r.abs() > bound {
                                    return Err(SpiError::InvalidMdp(format!(
                                        "|R({s},{a},{s2})| = {} exceeds r_max = {r_max}",
                                        r.abs()
                                    )));
                                }
                                r
                            }
                            None => reward[[s, a]],
                        };
                        r_exp += p * r;
                        succ.push(Successor { state: s2, prob: p, reward: r });
                    }
                }
                if (row_sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(SpiError::InvalidMdp(format!(
                        "row P(.|{s},{a}) sums to {row_sum}"
                    )));
                }
                if reward[[s, a]].abs() > bound || !reward[[s, a]].is_finite() {
                    return Err(SpiError::InvalidMdp(format!(
                        "|R({s},{a})| = {} exceeds r_max = {r_max}",
                        reward[[s, a]].abs()
                    )));
                }
                expected_reward[[s, a]] = if reward_sas.is_some() { r_exp } else { reward[[s, a]] };
                successors.push(succ);
            }
        }

        Ok(TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            reward_sas,
            gamma,
            terminal,
            r_max,
            successors,
            expected_reward,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn reward_sas(&self) -> Option<&Array3<f64>> {
        self.reward_sas.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Bound on the absolute value of any discounted return.
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn successors(&self, s: usize, a: usize) -> &[Successor] {
        &self.successors[s * self.n_actions + a]
    }

    /// Expected one-step reward, `Σ_{s'} P(s'|s,a) R₃(s,a,s')` or `R(s,a)`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.expected_reward[[s, a]]
    }

    /// Same dynamics with a replaced `R(s, a)` table; any `R₃` is dropped.
    pub fn with_reward(&self, reward: Array2<f64>, r_max: f64) -> Result<Self> {
        TabularMdp::new(
            self.transition.clone(),
            reward,
            None,
            self.gamma,
            self.terminal.clone(),
            r_max,
        )
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        TabularMdp::new(
            self.transition.clone(),
            self.reward.clone(),
            self.reward_sas.clone(),
            gamma,
            self.terminal.clone(),
            self.r_max,
        )
    }
}

/// A stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Array2<f64>,
}

impl Policy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        let (n_states, n_actions) = probs.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(SpiError::InvalidPolicy("empty table".into()));
        }
        for (s, row) in probs.outer_iter().enumerate() {
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(SpiError::InvalidPolicy(format!("negative entry in row {s}")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(SpiError::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(Policy { probs })
    }

    /// Builds a policy from rows that are known to be valid (up to rounding),
    /// renormalising each row.
    pub(crate) fn from_rows_normalized(mut probs: Array2<f64>) -> Self {
        for mut row in probs.outer_iter_mut() {
            row.mapv_inplace(|p| p.max(0.0));
            let sum = row.sum();
            if (sum - 1.0).abs() > 1e-12 {
                row.mapv_inplace(|p| p / sum);
            }
        }
        Policy { probs }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(SpiError::InvalidPolicy(format!("action {a} out of range in state {s}")));
            }
            probs[[s, a]] = 1.0;
        }
        Policy::new(probs)
    }

    /// `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &Policy, weight: f64) -> Result<Self> {
        if self.probs.dim() != other.probs.dim() {
            return Err(SpiError::Shape("policy shapes differ".into()));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(SpiError::InvalidArgument(format!("mixture weight {weight}")));
        }
        Ok(Policy {
            probs: &self.probs * (1.0 - weight) + &other.probs * weight,
        })
    }

    /// Deterministic greedy policy; ties go to the lowest action index.
    pub fn greedy(q: &Array2<f64>) -> Self {
        let actions: Vec<usize> = q.outer_iter().map(|row| argmax(row)).collect();
        let mut probs = Array2::zeros(q.dim());
        for (s, a) in actions.into_iter().enumerate() {
            probs[[s, a]] = 1.0;
        }
        Policy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row(&self, s: usize) -> ArrayView1<'_, f64> {
        self.probs.row(s)
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[[s, a]]
    }

    /// Sup-norm distance between two probability tables.
    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        self.probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the most likely action in every state.
    pub fn modes(&self) -> Vec<usize> {
        self.probs.outer_iter().map(|row| argmax(row)).collect()
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states() != mdp.n_states() || self.n_actions() != mdp.n_actions() {
            return Err(SpiError::Shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states(),
                self.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Lowest index among the maximal entries (within a relative tie tolerance).
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOL * (1.0 + max.abs());
    row.iter().position(|&v| v >= max - slack).unwrap_or(0)
}

/// `V^π` and `Q^π` together with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct ValueFunctions {
    pub v: Array1<f64>,
    pub q: Array2<f64>,
    /// Sup-norm change of `Q` in the final sweep.
    pub residual: f64,
    pub sweeps: usize,
}

/// Convergence controls for the iterative solvers.
#[derive(Debug, Clone, Copy)]
pub struct PeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PeOptions {
    fn default() -> Self {
        PeOptions {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Iterative policy evaluation of the action Bellman equation.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy, opts: PeOptions) -> Result<ValueFunctions> {
    policy_evaluation_warm(mdp, policy, None, opts)
}

/// Policy evaluation started from a previous `Q` estimate.
pub fn policy_evaluation_warm(
    mdp: &TabularMdp,
    policy: &Policy,
    init: Option<&Array2<f64>>,
    opts: PeOptions,
) -> Result<ValueFunctions> {
    evaluate_clamped(mdp, policy, init, opts, |_, _| None)
}

/// Policy evaluation where `clamp(s, a)` may pin `Q(s, a)` to a fixed value
/// inside every sweep.
pub(crate) fn evaluate_clamped<F>(
    mdp: &TabularMdp,
    policy: &Policy,
    init: Option<&Array2<f64>>,
    opts: PeOptions,
    clamp: F,
) -> Result<ValueFunctions>
where
    F: Fn(usize, usize) -> Option<f64>,
{
    policy.check_shape(mdp)?;
    if !(opts.tol > 0.0) {
        return Err(SpiError::InvalidArgument(format!("tol = {} must be > 0", opts.tol)));
    }
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut q = match init {
        Some(q0) if q0.dim() == (n_s, n_a) => q0.clone(),
        _ => Array2::zeros((n_s, n_a)),
    };
    let pinned: Vec<Option<f64>> = (0..n_s * n_a).map(|i| clamp(i / n_a, i % n_a)).collect();
    for (i, value) in pinned.iter().enumerate() {
        if let Some(value) = value {
            q[[i / n_a, i % n_a]] = *value;
        }
    }
    let gamma = mdp.gamma();
    let mut v = state_values(&q, policy);
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_iter {
        residual = 0.0;
        let mut next = Array2::zeros((n_s, n_a));
        for s in 0..n_s {
            for a in 0..n_a {
                let value = match pinned[s * n_a + a] {
                    Some(value) => value,
                    None => {
                        let future: f64 = mdp
                            .successors(s, a)
                            .iter()
                            .map(|succ| succ.prob * v[succ.state])
                            .sum();
                        mdp.expected_reward(s, a) + gamma * future
                    }
                };
                residual = f64::max(residual, (value - q[[s, a]]).abs());
                next[[s, a]] = value;
            }
        }
        q = next;
        v = state_values(&q, policy);
        if residual < opts.tol {
            return Ok(ValueFunctions { v, q, residual, sweeps: sweep });
        }
    }
    Err(SpiError::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// `V(s) = Σ_a π(a|s) Q(s, a)`.
pub fn state_values(q: &Array2<f64>, policy: &Policy) -> Array1<f64> {
    (q * policy.probs()).sum_axis(ndarray::Axis(1))
}

/// State-to-state transition matrix under `policy`.
pub fn policy_transition_matrix(mdp: &TabularMdp, policy: &Policy) -> Array2<f64> {
    let n_s = mdp.n_states();
    let mut p = Array2::zeros((n_s, n_s));
    for s in 0..n_s {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for succ in mdp.successors(s, a) {
                p[[s, succ.state]] += pa * succ.prob;
            }
        }
    }
    p
}

/// Policy evaluation by a dense linear solve of `(I − γ P_π) V = r_π`.
/// Used as an independent reference for the iterative solver.
pub fn policy_evaluation_direct(mdp: &TabularMdp, policy: &Policy) -> Result<ValueFunctions> {
    policy.check_shape(mdp)?;
    let n_s = mdp.n_states();
    let gamma = mdp.gamma();
    let p_pi = policy_transition_matrix(mdp, policy);
    let mut a = Array2::<f64>::eye(n_s) - &(p_pi * gamma);
    let mut b: Array1<f64> = (0..n_s)
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| policy.prob(s, a) * mdp.expected_reward(s, a))
                .sum()
        })
        .collect();
    linear::solve_in_place(&mut a, &mut b)?;
    let v = b;
    let q = Array2::from_shape_fn((n_s, mdp.n_actions()), |(s, a)| {
        mdp.expected_reward(s, a)
            + gamma
                * mdp
                    .successors(s, a)
                    .iter()
                    .map(|succ| succ.prob * v[succ.state])
                    .sum::<f64>()
    });
    Ok(ValueFunctions { v, q, residual: 0.0, sweeps: 0 })
}

/// Policy iteration from the all-zeros deterministic policy. Returns a
/// deterministic policy greedy w.r.t. its own `Q`.
pub fn optimal_policy(mdp: &TabularMdp, opts: PeOptions) -> Result<(Policy, ValueFunctions)> {
    let n_a = mdp.n_actions();
    let mut actions = vec![0usize; mdp.n_states()];
    let mut policy = Policy::deterministic(&actions, n_a)?;
    let mut values = policy_evaluation(mdp, &policy, opts)?;
    for _ in 0..1_000 {
        let mut changed = false;
        for (s, current) in actions.iter_mut().enumerate() {
            let row = values.q.row(s);
            let best = argmax(row);
            let max = row[best];
            // keep the incumbent unless the gain exceeds rounding noise
            if row[*current] < max - 1e-10 * (1.0 + max.abs()) {
                *current = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        policy = Policy::deterministic(&actions, n_a)?;
        values = policy_evaluation_warm(mdp, &policy, Some(&values.q), opts)?;
    }
    Ok((policy, values))
}

/// Where performance is measured.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    State(usize),
    Distribution(Vec<f64>),
}

/// Expected discounted return from the initial state (or distribution).
pub fn performance(mdp: &TabularMdp, policy: &Policy, initial: &Initial) -> Result<f64> {
    let values = policy_evaluation(mdp, policy, PeOptions::default())?;
    performance_of(&values, initial)
}

pub fn performance_of(values: &ValueFunctions, initial: &Initial) -> Result<f64> {
    match initial {
        Initial::State(s) => values
            .v
            .get(*s)
            .copied()
            .ok_or_else(|| SpiError::InvalidArgument(format!("initial state {s} out of range"))),
        Initial::Distribution(d) => {
            if d.len() != values.v.len() {
                return Err(SpiError::Shape("initial distribution length differs from S".into()));
            }
            Ok(d.iter().zip(values.v.iter()).map(|(p, v)| p * v).sum())
        }
    }
}

/// Expected discounted visit counts; `d[[s, s']] = Σ_t γ^t P(S_t = s' | S_0 = s)`.
#[derive(Debug, Clone)]
pub struct VisitDistribution {
    pub d: Array2<f64>,
}

impl VisitDistribution {
    pub fn mass(&self, s: usize) -> f64 {
        self.d.row(s).sum()
    }
}

pub fn visit_distribution(mdp: &TabularMdp, policy: &Policy, opts: PeOptions) -> Result<VisitDistribution> {
    policy.check_shape(mdp)?;
    let n_s = mdp.n_states();
    let gamma = mdp.gamma();
    let p_pi = policy_transition_matrix(mdp, policy);
    let eye = Array2::<f64>::eye(n_s);
    let mut d = eye.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let next = &eye + &(p_pi.dot(&d) * gamma);
        residual = next
            .iter()
            .zip(d.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        d = next;
        if residual < opts.tol {
            return Ok(VisitDistribution { d });
        }
    }
    Err(SpiError::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// `V^{π₁} − V^{π₂}` on every state.
pub fn value_difference(mdp: &TabularMdp, pi1: &Policy, pi2: &Policy, opts: PeOptions) -> Result<Array1<f64>> {
    let v1 = policy_evaluation(mdp, pi1, opts)?.v;
    let v2 = policy_evaluation(mdp, pi2, opts)?.v;
    Ok(v1 - v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn self_loop(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(
            Array3::from_elem((1, 1, 1), 1.0),
            array![[reward]],
            None,
            gamma,
            vec![false],
            reward.abs(),
        )
        .unwrap()
    }

    fn chain() -> TabularMdp {
        // 0 -> 1 -> 2 (terminal), action 1 stays put
        let mut p = Array3::zeros((3, 2, 3));
        p[[0, 0, 1]] = 1.0;
        p[[0, 1, 0]] = 1.0;
        p[[1, 0, 2]] = 1.0;
        p[[1, 1, 1]] = 1.0;
        p[[2, 0, 2]] = 1.0;
        p[[2, 1, 2]] = 1.0;
        let r = array![[0.0, 0.05], [1.0, 0.05], [0.0, 0.0]];
        TabularMdp::new(p, r, None, 0.9, vec![false, false, true], 1.0).unwrap()
    }

    #[test]
    fn self_loop_value_is_geometric_series() {
        let mdp = self_loop(1.0, 0.95);
        let v = policy_evaluation(&mdp, &Policy::uniform(1, 1), PeOptions::default()).unwrap();
        assert_abs_diff_eq!(v.v[0], 20.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mdp = self_loop(0.0, 0.5);
        let v = policy_evaluation(&mdp, &Policy::uniform(1, 1), PeOptions::default()).unwrap();
        assert_eq!(v.v[0], 0.0);
        assert_eq!(v.q[[0, 0]], 0.0);
    }

    #[test]
    fn chain_matches_direct_solve() {
        let mdp = chain();
        let pi = Policy::new(array![[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]]).unwrap();
        let it = policy_evaluation(&mdp, &pi, PeOptions::default()).unwrap();
        let direct = policy_evaluation_direct(&mdp, &pi).unwrap();
        for (a, b) in it.q.iter().zip(direct.q.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }
    }

    #[test]
    fn terminal_rows_are_canonicalized() {
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 1]] = 1.0;
        p[[1, 0, 0]] = 1.0;
        let mdp = TabularMdp::new(p, array![[1.0], [1.0]], None, 0.9, vec![false, true], 1.0).unwrap();
        assert_eq!(mdp.transition()[[1, 0, 1]], 1.0);
        assert_eq!(mdp.reward()[[1, 0]], 0.0);
        let perf = performance(&mdp, &Policy::uniform(2, 1), &Initial::State(1)).unwrap();
        assert_eq!(perf, 0.0);
    }

    #[test]
    fn rejects_bad_rows_and_rewards() {
        let p = Array3::from_elem((1, 1, 1), 0.9);
        assert!(TabularMdp::new(p, array![[0.0]], None, 0.9, vec![false], 1.0).is_err());
        let p = Array3::from_elem((1, 1, 1), 1.0);
        assert!(TabularMdp::new(p.clone(), array![[2.0]], None, 0.9, vec![false], 1.0).is_err());
        assert!(TabularMdp::new(p, array![[0.0]], None, 1.0, vec![false], 1.0).is_err());
    }

    #[test]
    fn non_convergence_reports_residual() {
        let mdp = self_loop(1.0, 0.99);
        let err = policy_evaluation(&mdp, &Policy::uniform(1, 1), PeOptions { tol: 1e-8, max_iter: 5 }).unwrap_err();
        match err {
            SpiError::NotConverged { iterations, residual } => {
                assert_eq!(iterations, 5);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_action_mdp_has_one_optimal_policy() {
        let mdp = self_loop(0.5, 0.9);
        let (pi, v) = optimal_policy(&mdp, PeOptions::default()).unwrap();
        assert_eq!(pi.prob(0, 0), 1.0);
        assert_abs_diff_eq!(v.v[0], 5.0, epsilon = 1e-6);
    }

    #[test]
    fn optimal_policy_is_greedy_on_chain() {
        let mdp = chain();
        let (pi, v) = optimal_policy(&mdp, PeOptions::default()).unwrap();
        for s in 0..3 {
            let best = argmax(v.q.row(s));
            assert!(v.q[[s, pi.modes()[s]]] >= v.q[[s, best]] - 1e-9);
        }
        assert_eq!(pi.modes()[0], 0);
        assert_eq!(pi.modes()[1], 0);
    }

    #[test]
    fn visit_distribution_gamma_zero_is_identity() {
        let mdp = chain().with_gamma(0.0).unwrap();
        let d = visit_distribution(&mdp, &Policy::uniform(3, 2), PeOptions::default()).unwrap();
        assert_eq!(d.d, Array2::<f64>::eye(3));
    }

    #[test]
    fn visit_distribution_two_cycle() {
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 1]] = 1.0;
        p[[1, 0, 0]] = 1.0;
        let mdp = TabularMdp::new(p, Array2::zeros((2, 1)), None, 0.5, vec![false, false], 0.0).unwrap();
        let d = visit_distribution(&mdp, &Policy::uniform(2, 1), PeOptions::default()).unwrap();
        // 1 + γ² + γ⁴ + … and γ + γ³ + …
        assert_abs_diff_eq!(d.d[[0, 0]], 4.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(d.d[[0, 1]], 2.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(d.mass(1), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn identical_policies_have_zero_difference() {
        let mdp = chain();
        let pi = Policy::uniform(3, 2);
        let diff = value_difference(&mdp, &pi, &pi, PeOptions::default()).unwrap();
        assert!(diff.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let q = array![[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]];
        assert_eq!(Policy::greedy(&q).modes(), vec![0, 1]);
    }
}
