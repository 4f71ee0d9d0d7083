use std::f64::consts::LN_2;

use serde::Serialize;

/// A-priori lower bound `ρ_b − ε G_max / (1 − γ)` of a constrained,
/// advantageous policy.
pub fn soft_safety_bound(rho_b: f64, epsilon: f64, g_max: f64, gamma: f64) -> f64 {
    rho_b - epsilon * g_max / (1.0 - gamma)
}

/// `log(2 |S| |A| 2^|S| / δ)`, computed without forming `2^|S|`.
fn spibb_log_term(delta: f64, n_states: usize, n_actions: usize) -> f64 {
    (2.0 * (n_states * n_actions) as f64 / delta).ln() + n_states as f64 * LN_2
}

/// Smallest `N_∧` for which the Π_b-SPIBB approximation error
/// `4 V_max / (1 − γ) · √(2/N_∧ · log(…))` is at most `xi`.
pub fn spibb_n_wedge(v_max: f64, xi: f64, delta: f64, gamma: f64, n_states: usize, n_actions: usize) -> f64 {
    32.0 * v_max * v_max * spibb_log_term(delta, n_states, n_actions) / (xi * xi * (1.0 - gamma).powi(2))
}

/// The inversion with `V_max` entering linearly instead of squared.
pub fn spibb_n_wedge_linear(v_max: f64, xi: f64, delta: f64, gamma: f64, n_states: usize, n_actions: usize) -> f64 {
    32.0 * v_max * spibb_log_term(delta, n_states, n_actions) / (xi * xi * (1.0 - gamma).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NWedgeReport {
    pub v_max: f64,
    pub xi: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub required: f64,
    pub linear_form: f64,
    pub reference: f64,
    /// `V_max` at which the squared form reproduces `reference`.
    pub implied_v_max: f64,
}

pub fn n_wedge_report(
    v_max: f64,
    xi: f64,
    delta: f64,
    gamma: f64,
    n_states: usize,
    n_actions: usize,
    reference: f64,
) -> NWedgeReport {
    let unit = spibb_n_wedge(1.0, xi, delta, gamma, n_states, n_actions);
    NWedgeReport {
        v_max,
        xi,
        delta,
        gamma,
        n_states,
        n_actions,
        required: spibb_n_wedge(v_max, xi, delta, gamma, n_states, n_actions),
        linear_form: spibb_n_wedge_linear(v_max, xi, delta, gamma, n_states, n_actions),
        reference,
        implied_v_max: (reference / unit).sqrt(),
    }
}

impl NWedgeReport {
    pub fn to_text(&self) -> String {
        format!(
            "v_max = {}\nxi = {}\ndelta = {}\ngamma = {}\nn_states = {}\nn_actions = {}\n\
             required_n_wedge = {:.0}\nlinear_form_n_wedge = {:.0}\nreference_n_wedge = {:.0}\nimplied_v_max = {:.4}\n",
            self.v_max,
            self.xi,
            self.delta,
            self.gamma,
            self.n_states,
            self.n_actions,
            self.required,
            self.linear_form,
            self.reference,
            self.implied_v_max
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_safety_bound_example() {
        assert!((soft_safety_bound(29.5, 0.01, 40.0, 0.95) - 21.5).abs() < 1e-12);
    }

    #[test]
    fn n_wedge_inversion() {
        let r = n_wedge_report(20.0, 8.0, 0.05, 0.95, 25, 5, 1_832_114.0);
        assert!((r.required - 2_067_669.816_433_19).abs() < 1e-6, "{}", r.required);
        assert!((r.linear_form - 103_383.490_821_66).abs() < 1e-6, "{}", r.linear_form);
        assert!((r.implied_v_max - 18.826_329_190_4).abs() < 1e-9);
        // plugging N_∧ back recovers ξ
        let log_term = spibb_log_term(0.05, 25, 5);
        let xi = 4.0 * 20.0 / 0.05 * (2.0 / r.required * log_term).sqrt();
        assert!((xi - 8.0).abs() < 1e-9);
    }
}
