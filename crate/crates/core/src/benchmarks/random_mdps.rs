//! Randomly generated sparse MDPs with a single rewarding terminal state and
//! baselines of a prescribed quality.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, Array3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::mdp::{optimal_policy, performance, Initial, PeOptions, Policy, TabularMdp, ValueFunctions};

pub const START_STATE: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineNoise {
    /// Standard deviation of the log-space noise in the first perturbation.
    pub sigma: f64,
    pub max_attempts: usize,
    /// Accepted distance between the achieved and the target ratio.
    pub tol: f64,
}

impl Default for BaselineNoise {
    fn default() -> Self {
        BaselineNoise { sigma: 1.0, max_attempts: 200, tol: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomMdpConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub successors_per_action: usize,
    pub gamma: f64,
    /// Target baseline ratio `(ρ_b − ρ_u) / (ρ_* − ρ_u)`.
    pub eta: f64,
    pub seed: u64,
    pub noise: BaselineNoise,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        RandomMdpConfig {
            n_states: 50,
            n_actions: 4,
            successors_per_action: 4,
            gamma: 0.95,
            eta: 0.9,
            seed: 0,
            noise: BaselineNoise::default(),
        }
    }
}

/// A generated benchmark instance.
#[derive(Debug, Clone)]
pub struct RandomMdpInstance {
    /// The MDP after the extra terminal was added; experiments run on this.
    pub mdp: TabularMdp,
    pub baseline: Policy,
    /// Optimal policy of `mdp`.
    pub optimal: Policy,
    /// The MDP the baseline was tuned on.
    pub generation_mdp: TabularMdp,
    /// Baseline ratio achieved on `generation_mdp`.
    pub generation_ratio: f64,
    pub added_terminal: usize,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds an instance. Stream 0 of the seed draws the dynamics, stream 1
/// the baseline noise and the added terminal.
pub fn random_mdp(config: &RandomMdpConfig) -> Result<RandomMdpInstance> {
    let n_s = config.n_states;
    let n_a = config.n_actions;
    if n_s < 3 || n_a == 0 {
        return Err(SpiError::InvalidArgument("need at least 3 states and 1 action".into()));
    }
    if config.successors_per_action == 0 || config.successors_per_action > n_s {
        return Err(SpiError::InvalidArgument(format!(
            "successors_per_action = {} must lie in 1..={n_s}",
            config.successors_per_action
        )));
    }
    if !(0.0..=1.0).contains(&config.eta) {
        return Err(SpiError::InvalidArgument(format!("eta = {}", config.eta)));
    }

    let mut rng = rng_for(config.seed, 0);
    let mut p = Array3::zeros((n_s, n_a, n_s));
    for s in 0..n_s {
        for a in 0..n_a {
            let succ = sample(&mut rng, n_s, config.successors_per_action);
            let weights: Vec<f64> = succ.iter().map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            for (s2, w) in succ.iter().zip(weights) {
                p[[s, a, s2]] = w / total;
            }
        }
    }
    let terminal_state = farthest_state(&p, START_STATE);
    let mut terminal = vec![false; n_s];
    terminal[terminal_state] = true;
    let generation_mdp = entering_reward_mdp(p.clone(), terminal.clone(), config.gamma)?;

    let mut noise_rng = rng_for(config.seed, 1);
    let (baseline, generation_ratio) = random_baseline_with(&generation_mdp, config.eta, &config.noise, &mut noise_rng)?;

    let candidates: Vec<usize> = (0..n_s).filter(|&s| s != START_STATE && !terminal[s]).collect();
    let added_terminal = candidates[noise_rng.random_range(0..candidates.len())];
    terminal[added_terminal] = true;
    let mdp = entering_reward_mdp(p, terminal, config.gamma)?;
    let (optimal, _) = optimal_policy(&mdp, PeOptions::default())?;
    Ok(RandomMdpInstance { mdp, baseline, optimal, generation_mdp, generation_ratio, added_terminal })
}

/// Reward 1 whenever a transition enters a terminal state.
fn entering_reward_mdp(p: Array3<f64>, terminal: Vec<bool>, gamma: f64) -> Result<TabularMdp> {
    let (n_s, n_a, _) = p.dim();
    let r3 = Array3::from_shape_fn((n_s, n_a, n_s), |(s, _, s2)| {
        if terminal[s2] && !terminal[s] {
            1.0
        } else {
            0.0
        }
    });
    let reward = Array2::from_shape_fn((n_s, n_a), |(s, a)| {
        (0..n_s).map(|s2| p[[s, a, s2]] * r3[[s, a, s2]]).sum()
    });
    TabularMdp::new(p, reward, Some(r3), gamma, terminal, 1.0)
}

/// Breadth-first distance maximiser over the transition graph; ties go to
/// the lowest index.
fn farthest_state(p: &Array3<f64>, start: usize) -> usize {
    let (n_s, n_a, _) = p.dim();
    let mut dist = vec![usize::MAX; n_s];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for a in 0..n_a {
            for s2 in 0..n_s {
                if p[[s, a, s2]] > 0.0 && dist[s2] == usize::MAX {
                    dist[s2] = dist[s] + 1;
                    queue.push_back(s2);
                }
            }
        }
    }
    let far = (0..n_s).filter(|&s| dist[s] != usize::MAX).map(|s| dist[s]).max().unwrap_or(0);
    (0..n_s).find(|&s| dist[s] == far).unwrap_or(start)
}

/// Performance endpoints of an MDP from the start state.
#[derive(Debug, Clone, Copy)]
struct Endpoints {
    rho_u: f64,
    rho_star: f64,
}

impl Endpoints {
    fn ratio(&self, rho: f64) -> f64 {
        (rho - self.rho_u) / (self.rho_star - self.rho_u)
    }
}

/// Baseline with performance ratio `eta`, drawn with the given seed.
pub fn random_baseline(mdp: &TabularMdp, eta: f64, seed: u64) -> Result<Policy> {
    let mut rng = rng_for(seed, 1);
    random_baseline_with(mdp, eta, &BaselineNoise::default(), &mut rng).map(|(pi, _)| pi)
}

fn random_baseline_with<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    eta: f64,
    noise: &BaselineNoise,
    rng: &mut R,
) -> Result<(Policy, f64)> {
    let start = Initial::State(START_STATE);
    let (optimal, values) = optimal_policy(mdp, PeOptions::default())?;
    let uniform = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let ends = Endpoints {
        rho_u: performance(mdp, &uniform, &start)?,
        rho_star: values.v[START_STATE],
    };
    if eta >= 1.0 {
        return Ok((optimal, 1.0));
    }
    if eta <= 0.0 {
        return Ok((uniform, 0.0));
    }
    if !(ends.rho_star > ends.rho_u) {
        return Err(SpiError::BaselineGeneration(format!(
            "optimal ({}) does not beat uniform ({})",
            ends.rho_star, ends.rho_u
        )));
    }
    let ratio_of = |pi: &Policy| performance(mdp, pi, &start).map(|rho| ends.ratio(rho));

    // softmax temperature bisection (in log space) toward a ratio between η and 1
    let goal = 0.5 * (eta + 1.0);
    let (mut lo, mut hi) = (-12.0f64, 6.0f64);
    let mut logits = softmax_logits(&values, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let candidate = softmax_logits(&values, mid.exp());
        let r = ratio_of(&softmax_policy(&candidate))?;
        logits = candidate;
        if (r - goal).abs() < 1e-3 {
            break;
        }
        if r > goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let initial = softmax_policy(&logits);
    let mut ratio = ratio_of(&initial)?;
    if (ratio - eta).abs() <= noise.tol {
        return Ok((initial, ratio));
    }

    let mut sigma = noise.sigma;
    for _ in 0..noise.max_attempts {
        let perturbed = logits.mapv(|l| l + sigma * rng.sample::<f64, _>(StandardNormal));
        let candidate = softmax_policy(&perturbed);
        let r = ratio_of(&candidate)?;
        if (r - eta).abs() <= noise.tol {
            return Ok((candidate, r));
        }
        if r > eta {
            logits = perturbed;
            ratio = r;
        } else {
            sigma *= 0.5;
        }
    }
    Err(SpiError::BaselineGeneration(format!(
        "ratio {ratio:.4} still off target {eta} after {} perturbations",
        noise.max_attempts
    )))
}

fn softmax_logits(values: &ValueFunctions, temperature: f64) -> Array2<f64> {
    values.q.mapv(|q| q / temperature)
}

fn softmax_policy(logits: &Array2<f64>) -> Policy {
    let mut probs = logits.clone();
    for mut row in probs.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|l| (l - max).exp());
    }
    Policy::from_rows_normalized(probs)
}

/// True when `target` can be reached from `from` in the transition graph.
pub fn reachable(mdp: &TabularMdp, from: usize, target: usize) -> bool {
    let mut seen = Array1::from_elem(mdp.n_states(), false);
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(s) = stack.pop() {
        if s == target {
            return true;
        }
        for a in 0..mdp.n_actions() {
            for succ in mdp.successors(s, a) {
                if !seen[succ.state] {
                    seen[succ.state] = true;
                    stack.push(succ.state);
                }
            }
        }
    }
    false
}
