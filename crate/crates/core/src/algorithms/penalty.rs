use ndarray::Array2;

use crate::dataset::MleModel;
use crate::error::{Result, SpiError};
use crate::mdp::{evaluate_clamped, PeOptions, Policy, TabularMdp, ValueFunctions};

/// Reward-adjusted MDP: `R̃ = R̂ − κ/√N`. Unvisited pairs get `−r_max − κ`.
pub fn ramdp_adjust(model: &MleModel, kappa: f64) -> Result<TabularMdp> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(SpiError::InvalidHyperparameter(format!("kappa = {kappa} must be > 0")));
    }
    let mdp = &model.mdp_hat;
    let r_max = mdp.r_max();
    let reward = Array2::from_shape_fn((mdp.n_states(), mdp.n_actions()), |(s, a)| {
        match model.counts.n_sa[[s, a]] {
            0 => -r_max - kappa,
            n => mdp.expected_reward(s, a) - kappa / (n as f64).sqrt(),
        }
    });
    mdp.with_reward(reward, r_max + kappa)
}

/// Policy evaluation with `Q(s, a) = r_min / (1 − γ)` pinned wherever `N(s, a) ≤ N_∧`.
pub fn rmin_pe(
    model: &MleModel,
    policy: &Policy,
    n_wedge: usize,
    r_min: f64,
    init: Option<&Array2<f64>>,
    opts: PeOptions,
) -> Result<ValueFunctions> {
    let floor = r_min / (1.0 - model.mdp_hat.gamma());
    let counts = &model.counts.n_sa;
    evaluate_clamped(&model.mdp_hat, policy, init, opts, |s, a| {
        (counts[[s, a]] <= n_wedge).then_some(floor)
    })
}
