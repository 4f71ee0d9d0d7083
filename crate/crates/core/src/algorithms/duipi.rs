//! Diagonal uncertainty propagation.
//!
//! Transition rows use the posterior mean of `Dirichlet(α + N(s,a,·))`;
//! `Var(Q)` is propagated alongside `Q` ignoring all covariances.

use ndarray::{Array2, Array3};

use crate::dataset::{CountTables, MleModel};
use crate::error::{Result, SpiError};
use crate::mdp::{argmax, state_values, PeOptions, Policy, ValueFunctions};

/// Posterior moments of the model used by DUIPI.
#[derive(Debug, Clone)]
pub struct DuipiModel {
    pub p_mean: Array3<f64>,
    pub p_var: Array3<f64>,
    pub r_mean: Array3<f64>,
    pub r_var: Array3<f64>,
    pub gamma: f64,
}

impl DuipiModel {
    pub fn new(counts: &CountTables, gamma: f64, r_max: f64, prior_alpha: f64) -> Result<Self> {
        if !(prior_alpha > 0.0) {
            return Err(SpiError::InvalidHyperparameter(format!(
                "prior_alpha = {prior_alpha} must be > 0"
            )));
        }
        let (n_s, n_a, _) = counts.n_sas.dim();
        let mut p_mean = Array3::zeros((n_s, n_a, n_s));
        let mut p_var = Array3::zeros((n_s, n_a, n_s));
        let mut r_mean = Array3::zeros((n_s, n_a, n_s));
        let mut r_var = Array3::zeros((n_s, n_a, n_s));
        let unseen_var = r_max * r_max / 3.0;
        for s in 0..n_s {
            for a in 0..n_a {
                let alpha0 = prior_alpha * n_s as f64 + counts.n_sa[[s, a]] as f64;
                for s2 in 0..n_s {
                    let n = counts.n_sas[[s, a, s2]];
                    let alpha = prior_alpha + n as f64;
                    p_mean[[s, a, s2]] = alpha / alpha0;
                    p_var[[s, a, s2]] = alpha * (alpha0 - alpha) / (alpha0 * alpha0 * (alpha0 + 1.0));
                    let (mean, var) = match n {
                        0 => (0.0, unseen_var),
                        1 => (counts.reward_sum_sas[[s, a, s2]], 0.0),
                        _ => {
                            let nf = n as f64;
                            let mean = counts.reward_sum_sas[[s, a, s2]] / nf;
                            let ss = (counts.reward_sq_sas[[s, a, s2]] - nf * mean * mean).max(0.0);
                            (mean, ss / (nf - 1.0) / nf)
                        }
                    };
                    r_mean[[s, a, s2]] = mean;
                    r_var[[s, a, s2]] = var;
                }
            }
        }
        Ok(DuipiModel { p_mean, p_var, r_mean, r_var, gamma })
    }
}

/// `Q` and `Var(Q)` of `policy` under the posterior model.
#[derive(Debug, Clone)]
pub struct DuipiValues {
    pub values: ValueFunctions,
    pub var_q: Array2<f64>,
}

impl DuipiValues {
    /// `Var(V(s)) = Σ_a π(a|s)² Var(Q(s, a))`.
    pub fn var_v(&self, policy: &Policy, s: usize) -> f64 {
        policy
            .row(s)
            .iter()
            .zip(self.var_q.row(s))
            .map(|(p, v)| p * p * v)
            .sum()
    }
}

pub fn duipi_pe(
    model: &DuipiModel,
    policy: &Policy,
    init: Option<&DuipiValues>,
    opts: PeOptions,
) -> Result<DuipiValues> {
    let (n_s, n_a, _) = model.p_mean.dim();
    if policy.probs().dim() != (n_s, n_a) {
        return Err(SpiError::Shape("policy does not match the DUIPI model".into()));
    }
    let gamma = model.gamma;
    let (mut q, mut var_q) = match init {
        Some(v) if v.var_q.dim() == (n_s, n_a) => (v.values.q.clone(), v.var_q.clone()),
        _ => (Array2::zeros((n_s, n_a)), Array2::zeros((n_s, n_a))),
    };
    let pi2 = policy.probs().mapv(|p| p * p);
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_iter {
        let v = state_values(&q, policy);
        let var_v = (&var_q * &pi2).sum_axis(ndarray::Axis(1));
        let mut next_q = Array2::zeros((n_s, n_a));
        let mut next_var = Array2::zeros((n_s, n_a));
        for s in 0..n_s {
            for a in 0..n_a {
                let mut qv = 0.0;
                let mut var = 0.0;
                for s2 in 0..n_s {
                    let p = model.p_mean[[s, a, s2]];
                    let target = model.r_mean[[s, a, s2]] + gamma * v[s2];
                    qv += p * target;
                    var += (gamma * p).powi(2) * var_v[s2]
                        + target * target * model.p_var[[s, a, s2]]
                        + p * p * model.r_var[[s, a, s2]];
                }
                next_q[[s, a]] = qv;
                next_var[[s, a]] = var;
            }
        }
        residual = next_q
            .iter()
            .zip(q.iter())
            .chain(next_var.iter().zip(var_q.iter()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next_q;
        var_q = next_var;
        if residual < opts.tol {
            let v = state_values(&q, policy);
            return Ok(DuipiValues {
                values: ValueFunctions { v, q, residual, sweeps: sweep },
                var_q,
            });
        }
    }
    Err(SpiError::NotConverged { iterations: opts.max_iter, residual })
}

/// `Q_u = Q − ξ √Var(Q)`.
pub fn uncertainty_penalized_q(q: &Array2<f64>, var_q: &Array2<f64>, xi: f64) -> Array2<f64> {
    q - &(var_q.mapv(|v| v.max(0.0).sqrt()) * xi)
}

/// Moves a fraction `lambda` of every state's mass toward `argmax Q_u`.
/// With `visited`, unvisited actions lose all mass in states where some
/// action was visited.
pub fn duipi_pi(
    q: &Array2<f64>,
    var_q: &Array2<f64>,
    xi: f64,
    prev: &Policy,
    visited: Option<&Array2<bool>>,
    lambda: f64,
) -> Result<Policy> {
    if q.dim() != var_q.dim() || q.dim() != prev.probs().dim() {
        return Err(SpiError::Shape("DUIPI inputs differ in shape".into()));
    }
    if !(0.0..=1.0).contains(&lambda) || lambda == 0.0 {
        return Err(SpiError::InvalidHyperparameter(format!("lambda = {lambda} outside (0, 1]")));
    }
    let q_u = uncertainty_penalized_q(q, var_q, xi);
    let (n_s, n_a) = q.dim();
    let mut out = prev.probs().clone();
    for s in 0..n_s {
        let allowed: Vec<bool> = match visited {
            Some(mask) if mask.row(s).iter().any(|&v| v) => mask.row(s).to_vec(),
            _ => vec![true; n_a],
        };
        let masked = ndarray::Array1::from_shape_fn(n_a, |a| {
            if allowed[a] {
                q_u[[s, a]]
            } else {
                f64::NEG_INFINITY
            }
        });
        let best = argmax(masked.view());
        let mut row = out.row_mut(s);
        row.mapv_inplace(|p| (1.0 - lambda) * p);
        row[best] += lambda;
        for a in 0..n_a {
            if !allowed[a] {
                row[a] = 0.0;
            }
        }
    }
    Ok(Policy::from_rows_normalized(out))
}

/// True where `N(s, a) > 0`.
pub fn visited_mask(model: &MleModel) -> Array2<bool> {
    model.counts.n_sa.mapv(|n| n > 0)
}
