//! Policy-training algorithms and their constraint checks.

mod duipi;
mod penalty;
mod soft;
mod spibb;
pub mod verify;

pub use duipi::{duipi_pe, duipi_pi, uncertainty_penalized_q, visited_mask, DuipiModel, DuipiValues};
pub use penalty::{ramdp_adjust, rmin_pe};
pub use soft::{soft_spibb_pi_step, AdvantageInput, SoftStep, SoftVariant};
pub use spibb::{bootstrapped_set, spibb_pi_step, SpibbMode};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{mc_q_estimate, MleModel};
use crate::error::{Result, SpiError};
use crate::mdp::{argmax, policy_evaluation_warm, PeOptions, Policy, ValueFunctions};
use crate::uncertainty::{ErrorKind, UncertaintyModel};

fn default_prior_alpha() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

fn default_err_kind() -> ErrorKind {
    ErrorKind::HoeffdingQ
}

/// An algorithm together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    BasicRl,
    Ramdp {
        kappa: f64,
    },
    RMin {
        n_wedge: usize,
    },
    Duipi {
        xi: f64,
        #[serde(default = "default_prior_alpha")]
        prior_alpha: f64,
        #[serde(default = "default_true")]
        mask_unvisited: bool,
        /// Fraction of mass moved toward the penalised argmax per iteration.
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    PiBSpibb {
        n_wedge: usize,
    },
    PiLeqBSpibb {
        n_wedge: usize,
    },
    ApproxSoftSpibb {
        epsilon: f64,
        delta: f64,
        #[serde(default = "default_err_kind")]
        err_kind: ErrorKind,
    },
    AdvApproxSoftSpibb {
        epsilon: f64,
        delta: f64,
        #[serde(default = "default_err_kind")]
        err_kind: ErrorKind,
    },
    LowerApproxSoftSpibb {
        epsilon: f64,
        delta: f64,
        #[serde(default = "default_err_kind")]
        err_kind: ErrorKind,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::BasicRl => "basic_rl",
            AlgorithmSpec::Ramdp { .. } => "ramdp",
            AlgorithmSpec::RMin { .. } => "r_min",
            AlgorithmSpec::Duipi { .. } => "duipi",
            AlgorithmSpec::PiBSpibb { .. } => "pi_b_spibb",
            AlgorithmSpec::PiLeqBSpibb { .. } => "pi_leq_b_spibb",
            AlgorithmSpec::ApproxSoftSpibb { .. } => "approx_soft_spibb",
            AlgorithmSpec::AdvApproxSoftSpibb { .. } => "adv_approx_soft_spibb",
            AlgorithmSpec::LowerApproxSoftSpibb { .. } => "lower_approx_soft_spibb",
        }
    }

    /// Hyperparameters as `key=value` pairs joined by `;`.
    pub fn params(&self) -> String {
        match self {
            AlgorithmSpec::BasicRl => String::new(),
            AlgorithmSpec::Ramdp { kappa } => format!("kappa={kappa}"),
            AlgorithmSpec::RMin { n_wedge }
            | AlgorithmSpec::PiBSpibb { n_wedge }
            | AlgorithmSpec::PiLeqBSpibb { n_wedge } => format!("n_wedge={n_wedge}"),
            AlgorithmSpec::Duipi { xi, prior_alpha, mask_unvisited, lambda } => {
                format!("xi={xi};prior_alpha={prior_alpha};mask_unvisited={mask_unvisited};lambda={lambda}")
            }
            AlgorithmSpec::ApproxSoftSpibb { epsilon, delta, err_kind }
            | AlgorithmSpec::AdvApproxSoftSpibb { epsilon, delta, err_kind }
            | AlgorithmSpec::LowerApproxSoftSpibb { epsilon, delta, err_kind } => {
                format!("epsilon={epsilon};delta={delta};err_kind={}", err_kind.as_str())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SpiError::InvalidHyperparameter(msg));
        match *self {
            AlgorithmSpec::Ramdp { kappa } if !(kappa > 0.0 && kappa.is_finite()) => bad(format!("kappa = {kappa}")),
            AlgorithmSpec::Duipi { xi, prior_alpha, lambda, .. } => {
                if !xi.is_finite() {
                    bad(format!("xi = {xi}"))
                } else if !(prior_alpha > 0.0) {
                    bad(format!("prior_alpha = {prior_alpha}"))
                } else if !(lambda > 0.0 && lambda <= 1.0) {
                    bad(format!("lambda = {lambda}"))
                } else {
                    Ok(())
                }
            }
            AlgorithmSpec::ApproxSoftSpibb { epsilon, delta, .. }
            | AlgorithmSpec::AdvApproxSoftSpibb { epsilon, delta, .. }
            | AlgorithmSpec::LowerApproxSoftSpibb { epsilon, delta, .. } => {
                if !(epsilon >= 0.0) {
                    bad(format!("epsilon = {epsilon}"))
                } else if !(delta > 0.0 && delta <= 1.0) {
                    bad(format!("delta = {delta}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn soft_params(&self) -> Option<(f64, f64, ErrorKind, SoftVariant)> {
        match *self {
            AlgorithmSpec::ApproxSoftSpibb { epsilon, delta, err_kind } => {
                Some((epsilon, delta, err_kind, SoftVariant::Plain))
            }
            AlgorithmSpec::AdvApproxSoftSpibb { epsilon, delta, err_kind } => {
                Some((epsilon, delta, err_kind, SoftVariant::Advantageous))
            }
            AlgorithmSpec::LowerApproxSoftSpibb { epsilon, delta, err_kind } => {
                Some((epsilon, delta, err_kind, SoftVariant::Lower))
            }
            _ => None,
        }
    }
}

/// Controls shared by all training loops.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub pe: PeOptions,
    pub max_pi_iter: usize,
    /// Stop once successive policies differ by less than this in sup-norm.
    pub pi_tol: f64,
    /// Worst per-step reward for R-MIN; `−r_max` when absent.
    pub r_min: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            pe: PeOptions::default(),
            max_pi_iter: 300,
            pi_tol: 1e-10,
            r_min: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub pi_iterations: usize,
    pub converged: bool,
    pub pe_residual: f64,
    /// Mean budget spent per state in the final Soft-SPIBB step.
    pub mean_budget_used: Option<f64>,
    #[serde(skip)]
    pub budget_used: Option<Vec<f64>>,
    pub bootstrapped_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: Policy,
    /// Values of `policy` in the model the algorithm optimised.
    pub values: ValueFunctions,
    /// DUIPI only.
    pub var_q: Option<Array2<f64>>,
    pub diagnostics: Diagnostics,
}

/// Trains `spec` on the MLE model. Soft-SPIBB variants take `G_max` and the
/// return centre from `unc`; kind and `δ` come from the spec.
pub fn train(
    model: &MleModel,
    baseline: &Policy,
    spec: &AlgorithmSpec,
    unc: Option<&UncertaintyModel>,
    opts: &TrainOptions,
) -> Result<TrainedPolicy> {
    spec.validate()?;
    let mdp = &model.mdp_hat;
    if baseline.n_states() != mdp.n_states() || baseline.n_actions() != mdp.n_actions() {
        return Err(SpiError::Shape("baseline does not match the model".into()));
    }
    let pe = opts.pe;
    let n_pairs = (mdp.n_states() * mdp.n_actions()) as f64;

    if let Some((epsilon, delta, err_kind, variant)) = spec.soft_params() {
        let unc = unc.ok_or(SpiError::MissingUncertainty(spec.name()))?;
        let unc = UncertaintyModel { kind: err_kind, delta, ..*unc };
        let errors = unc.errors(&model.counts)?;
        let q_hat = (variant == SoftVariant::Advantageous).then(|| mc_q_estimate(&model.counts));
        let advantage = q_hat.as_ref().map(|q_hat| AdvantageInput { q_hat, g_max: unc.g_max, center: unc.center });
        let mut last_used = None;
        let mut out = policy_iteration(
            baseline.clone(),
            opts,
            |pi, init| policy_evaluation_warm(mdp, pi, init, pe),
            |vf, _| {
                let step = soft_spibb_pi_step(&vf.q, baseline, &errors, epsilon, variant, advantage)?;
                last_used = Some(step.budget_used.to_vec());
                Ok(step.policy)
            },
        )?;
        if let Some(used) = last_used {
            out.diagnostics.mean_budget_used = Some(used.iter().sum::<f64>() / used.len() as f64);
            out.diagnostics.budget_used = Some(used);
        }
        return Ok(out);
    }

    match *spec {
        AlgorithmSpec::BasicRl => policy_iteration(
            baseline.clone(),
            opts,
            |pi, init| policy_evaluation_warm(mdp, pi, init, pe),
            |vf, pi| Ok(greedy_step(&vf.q, pi)),
        ),
        AlgorithmSpec::Ramdp { kappa } => {
            let adjusted = ramdp_adjust(model, kappa)?;
            policy_iteration(
                baseline.clone(),
                opts,
                |pi, init| policy_evaluation_warm(&adjusted, pi, init, pe),
                |vf, pi| Ok(greedy_step(&vf.q, pi)),
            )
        }
        AlgorithmSpec::RMin { n_wedge } => {
            let r_min = opts.r_min.unwrap_or(-mdp.r_max());
            let boot = bootstrapped_set(&model.counts, n_wedge);
            let mut out = policy_iteration(
                baseline.clone(),
                opts,
                |pi, init| rmin_pe(model, pi, n_wedge, r_min, init, pe),
                |vf, pi| Ok(greedy_step(&vf.q, pi)),
            )?;
            out.diagnostics.bootstrapped_fraction = Some(count_true(&boot) / n_pairs);
            Ok(out)
        }
        AlgorithmSpec::PiBSpibb { n_wedge } | AlgorithmSpec::PiLeqBSpibb { n_wedge } => {
            let mode = if matches!(spec, AlgorithmSpec::PiBSpibb { .. }) { SpibbMode::PiB } else { SpibbMode::PiLeqB };
            let boot = bootstrapped_set(&model.counts, n_wedge);
            let mut out = policy_iteration(
                baseline.clone(),
                opts,
                |pi, init| policy_evaluation_warm(mdp, pi, init, pe),
                |vf, _| spibb_pi_step(&vf.q, baseline, &boot, mode),
            )?;
            out.diagnostics.bootstrapped_fraction = Some(count_true(&boot) / n_pairs);
            Ok(out)
        }
        AlgorithmSpec::Duipi { xi, prior_alpha, mask_unvisited, lambda } => {
            let duipi = DuipiModel::new(&model.counts, mdp.gamma(), mdp.r_max(), prior_alpha)?;
            let mask = mask_unvisited.then(|| visited_mask(model));
            train_duipi(&duipi, baseline, xi, mask.as_ref(), lambda, opts)
        }
        _ => unreachable!("soft variants handled above"),
    }
}

fn count_true(mask: &Array2<bool>) -> f64 {
    mask.iter().filter(|&&b| b).count() as f64
}

/// Deterministic greedy policy that keeps the current action on near-ties.
fn greedy_step(q: &Array2<f64>, current: &Policy) -> Policy {
    let (n_s, n_a) = q.dim();
    let mut probs = Array2::zeros((n_s, n_a));
    for s in 0..n_s {
        let row = q.row(s);
        let best = argmax(row);
        let incumbent = (0..n_a).find(|&a| current.prob(s, a) == 1.0);
        let choice = match incumbent {
            Some(a) if row[a] >= row[best] - 1e-10 * (1.0 + row[best].abs()) => a,
            _ => best,
        };
        probs[[s, choice]] = 1.0;
    }
    Policy::from_rows_normalized(probs)
}

fn policy_iteration<E, I>(start: Policy, opts: &TrainOptions, mut evaluate: E, mut improve: I) -> Result<TrainedPolicy>
where
    E: FnMut(&Policy, Option<&Array2<f64>>) -> Result<ValueFunctions>,
    I: FnMut(&ValueFunctions, &Policy) -> Result<Policy>,
{
    let mut policy = start;
    let mut values = evaluate(&policy, None)?;
    let mut diagnostics = Diagnostics::default();
    for it in 1..=opts.max_pi_iter {
        let next = improve(&values, &policy)?;
        let change = next.max_abs_diff(&policy);
        policy = next;
        values = evaluate(&policy, Some(&values.q))?;
        diagnostics.pi_iterations = it;
        if change < opts.pi_tol {
            diagnostics.converged = true;
            break;
        }
    }
    diagnostics.pe_residual = values.residual;
    Ok(TrainedPolicy { policy, values, var_q: None, diagnostics })
}

fn train_duipi(
    model: &DuipiModel,
    baseline: &Policy,
    xi: f64,
    mask: Option<&Array2<bool>>,
    lambda: f64,
    opts: &TrainOptions,
) -> Result<TrainedPolicy> {
    let mut policy = baseline.clone();
    let mut values = duipi_pe(model, &policy, None, opts.pe)?;
    let mut diagnostics = Diagnostics::default();
    for it in 1..=opts.max_pi_iter {
        let next = duipi_pi(&values.values.q, &values.var_q, xi, &policy, mask, lambda)?;
        let change = next.max_abs_diff(&policy);
        policy = next;
        values = duipi_pe(model, &policy, Some(&values), opts.pe)?;
        diagnostics.pi_iterations = it;
        if change < opts.pi_tol {
            diagnostics.converged = true;
            break;
        }
    }
    diagnostics.pe_residual = values.values.residual;
    Ok(TrainedPolicy { policy, values: values.values, var_q: Some(values.var_q), diagnostics })
}
