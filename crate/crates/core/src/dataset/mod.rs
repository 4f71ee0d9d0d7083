//! Logged transitions, count tables, the MLE model and Monte-Carlo `Q̂`.

mod io;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::mdp::{Policy, TabularMdp};

/// Hard cap on episode length when no horizon is given.
pub const MAX_EPISODE_LEN: usize = 100_000;

/// Default tolerance on the discarded tail of a Monte-Carlo return.
pub const TRUNC_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// How an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeEnd {
    /// Entered a terminal state; later rewards are known to be zero.
    Terminal,
    /// Cut by the horizon or the step budget.
    Truncated,
}

/// An ordered sequence of episodes collected by one behaviour policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    /// Exclusive end index of every episode.
    episode_ends: Vec<usize>,
    end_kinds: Vec<EpisodeEnd>,
    rng_seed: u64,
}

impl Dataset {
    pub fn new(
        transitions: Vec<Transition>,
        episode_ends: Vec<usize>,
        end_kinds: Vec<EpisodeEnd>,
        rng_seed: u64,
    ) -> Result<Self> {
        if episode_ends.len() != end_kinds.len() {
            return Err(SpiError::InvalidArgument("one end kind per episode expected".into()));
        }
        let mut start = 0;
        for &end in &episode_ends {
            if end <= start || end > transitions.len() {
                return Err(SpiError::InvalidArgument(format!(
                    "episode boundary {end} is not strictly increasing within 0..={}",
                    transitions.len()
                )));
            }
            for w in transitions[start..end].windows(2) {
                if w[1].s != w[0].s_next {
                    return Err(SpiError::InvalidArgument(format!(
                        "trajectory breaks: {} -> {} followed by a step from {}",
                        w[0].s, w[0].s_next, w[1].s
                    )));
                }
            }
            start = end;
        }
        if start != transitions.len() {
            return Err(SpiError::InvalidArgument("transitions after the last episode boundary".into()));
        }
        Ok(Dataset { transitions, episode_ends, end_kinds, rng_seed })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn episode_ends(&self) -> &[usize] {
        &self.episode_ends
    }

    pub fn end_kinds(&self) -> &[EpisodeEnd] {
        &self.end_kinds
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn n_episodes(&self) -> usize {
        self.episode_ends.len()
    }

    /// `(transitions, end)` per episode.
    pub fn episodes(&self) -> impl Iterator<Item = (&[Transition], EpisodeEnd)> + '_ {
        let starts = std::iter::once(0).chain(self.episode_ends.iter().copied());
        starts
            .zip(self.episode_ends.iter().copied())
            .zip(self.end_kinds.iter().copied())
            .map(move |((start, end), kind)| (&self.transitions[start..end], kind))
    }

    /// First `n` transitions, keeping episode structure; a cut episode
    /// becomes [`EpisodeEnd::Truncated`].
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let mut ends = Vec::new();
        let mut kinds = Vec::new();
        for (&end, &kind) in self.episode_ends.iter().zip(&self.end_kinds) {
            if end <= n {
                ends.push(end);
                kinds.push(kind);
            } else {
                if ends.last().copied().unwrap_or(0) < n {
                    ends.push(n);
                    kinds.push(EpisodeEnd::Truncated);
                }
                break;
            }
        }
        Dataset {
            transitions: self.transitions[..n].to_vec(),
            episode_ends: ends,
            end_kinds: kinds,
            rng_seed: self.rng_seed,
        }
    }
}

/// Size of a dataset to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Total number of transitions; a single trajectory unless terminals
    /// force restarts.
    Steps(usize),
    Episodes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSpec {
    pub budget: Budget,
    /// Maximum episode length.
    pub horizon: Option<usize>,
    pub start: usize,
    pub seed: u64,
    /// ChaCha stream id, so one seed can feed several independent samplers.
    pub stream: u64,
}

impl GenerationSpec {
    pub fn steps(n: usize, seed: u64) -> Self {
        GenerationSpec { budget: Budget::Steps(n), horizon: None, start: 0, seed, stream: 0 }
    }

    pub fn episodes(n: usize, seed: u64) -> Self {
        GenerationSpec { budget: Budget::Episodes(n), horizon: None, start: 0, seed, stream: 0 }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws an index from a discrete distribution given as `(index, weight)` pairs.
pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, items: impl Iterator<Item = (usize, f64)>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Samples one step of `mdp` from `(s, a)`.
pub fn sample_step<R: Rng + ?Sized>(mdp: &TabularMdp, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
    let succ = mdp.successors(s, a);
    let k = sample_index(rng, succ.iter().enumerate().map(|(i, x)| (i, x.prob)));
    (succ[k].state, succ[k].reward)
}

/// Rolls out `behavior` on `mdp`.
pub fn generate(mdp: &TabularMdp, behavior: &Policy, spec: &GenerationSpec) -> Result<Dataset> {
    if behavior.n_states() != mdp.n_states() || behavior.n_actions() != mdp.n_actions() {
        return Err(SpiError::Shape("behaviour policy does not match the MDP".into()));
    }
    let (steps, episodes) = match spec.budget {
        Budget::Steps(0) | Budget::Episodes(0) => {
            return Err(SpiError::InvalidArgument("empty generation budget".into()));
        }
        Budget::Steps(n) => (n, usize::MAX),
        Budget::Episodes(n) => (usize::MAX, n),
    };
    if spec.start >= mdp.n_states() {
        return Err(SpiError::InvalidArgument(format!("start state {} out of range", spec.start)));
    }
    if spec.horizon == Some(0) {
        return Err(SpiError::InvalidArgument("horizon must be positive".into()));
    }
    let horizon = match (spec.budget, spec.horizon) {
        (_, Some(h)) => h,
        (Budget::Steps(_), None) => usize::MAX,
        (Budget::Episodes(_), None) => MAX_EPISODE_LEN,
    };

    let mut rng = spec.rng();
    let mut transitions = Vec::new();
    let mut ends = Vec::new();
    let mut kinds = Vec::new();
    while transitions.len() < steps && ends.len() < episodes {
        let mut s = spec.start;
        let mut len = 0;
        let kind = loop {
            if mdp.is_terminal(s) {
                break EpisodeEnd::Terminal;
            }
            if len >= horizon || transitions.len() >= steps {
                break EpisodeEnd::Truncated;
            }
            let a = sample_index(&mut rng, behavior.row(s).iter().copied().enumerate());
            let (s_next, r) = sample_step(mdp, s, a, &mut rng);
            transitions.push(Transition { s, a, r, s_next });
            s = s_next;
            len += 1;
        };
        if len == 0 {
            // start state is terminal; nothing can ever be observed
            return Err(SpiError::InvalidArgument("start state is terminal".into()));
        }
        ends.push(transitions.len());
        kinds.push(kind);
    }
    Dataset::new(transitions, ends, kinds, spec.seed)
}

/// Which visits of a pair contribute a Monte-Carlo return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnMode {
    #[default]
    FirstVisit,
    EveryVisit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnOptions {
    pub gamma: f64,
    pub mode: ReturnMode,
    pub r_max: f64,
    pub trunc_tol: f64,
}

impl ReturnOptions {
    pub fn new(gamma: f64, r_max: f64, mode: ReturnMode) -> Self {
        ReturnOptions { gamma, mode, r_max, trunc_tol: TRUNC_TOL }
    }

    /// Smallest `H` with `γ^H r_max / (1 − γ) < trunc_tol`.
    pub fn horizon(&self) -> usize {
        if self.r_max <= 0.0 {
            return 0;
        }
        let mut h = 0;
        let mut tail = self.r_max / (1.0 - self.gamma);
        while tail >= self.trunc_tol {
            tail *= self.gamma;
            h += 1;
        }
        h
    }
}

/// Visit tallies and return samples.
#[derive(Debug, Clone)]
pub struct CountTables {
    pub n_sa: Array2<usize>,
    pub n_sas: Array3<usize>,
    pub reward_sum_sa: Array2<f64>,
    pub reward_sum_sas: Array3<f64>,
    pub reward_sq_sas: Array3<f64>,
    return_samples: Vec<Vec<f64>>,
    n_actions: usize,
}

impl CountTables {
    pub fn empty(n_states: usize, n_actions: usize) -> Self {
        CountTables {
            n_sa: Array2::zeros((n_states, n_actions)),
            n_sas: Array3::zeros((n_states, n_actions, n_states)),
            reward_sum_sa: Array2::zeros((n_states, n_actions)),
            reward_sum_sas: Array3::zeros((n_states, n_actions, n_states)),
            reward_sq_sas: Array3::zeros((n_states, n_actions, n_states)),
            return_samples: vec![Vec::new(); n_states * n_actions],
            n_actions,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_sa.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn return_samples(&self, s: usize, a: usize) -> &[f64] {
        &self.return_samples[s * self.n_actions + a]
    }

    pub fn n_returns(&self, s: usize, a: usize) -> usize {
        self.return_samples(s, a).len()
    }

    pub fn set_returns(&mut self, s: usize, a: usize, returns: Vec<f64>) {
        self.return_samples[s * self.n_actions + a] = returns;
    }
}

/// Tallies `data` and extracts discounted returns.
pub fn counts(data: &Dataset, n_states: usize, n_actions: usize, opts: &ReturnOptions) -> Result<CountTables> {
    let mut t = CountTables::empty(n_states, n_actions);
    for tr in data.transitions() {
        if tr.s >= n_states || tr.s_next >= n_states || tr.a >= n_actions {
            return Err(SpiError::Shape(format!(
                "transition ({}, {}, {}) outside a {n_states}x{n_actions} MDP",
                tr.s, tr.a, tr.s_next
            )));
        }
        t.n_sa[[tr.s, tr.a]] += 1;
        t.n_sas[[tr.s, tr.a, tr.s_next]] += 1;
        t.reward_sum_sa[[tr.s, tr.a]] += tr.r;
        t.reward_sum_sas[[tr.s, tr.a, tr.s_next]] += tr.r;
        t.reward_sq_sas[[tr.s, tr.a, tr.s_next]] += tr.r * tr.r;
    }

    let h = opts.horizon();
    let mut returns = Vec::new();
    let mut seen = vec![false; n_states * n_actions];
    for (episode, kind) in data.episodes() {
        returns.clear();
        returns.resize(episode.len(), 0.0);
        let mut g = 0.0;
        for (i, tr) in episode.iter().enumerate().rev() {
            g = tr.r + opts.gamma * g;
            returns[i] = g;
        }
        seen.iter_mut().for_each(|x| *x = false);
        for (i, tr) in episode.iter().enumerate() {
            let idx = tr.s * n_actions + tr.a;
            if opts.mode == ReturnMode::FirstVisit {
                if seen[idx] {
                    continue;
                }
                seen[idx] = true;
            }
            if kind == EpisodeEnd::Truncated && episode.len() - i < h {
                continue;
            }
            t.return_samples[idx].push(returns[i]);
        }
    }
    Ok(t)
}

/// Maximum-likelihood model of the data.
#[derive(Debug, Clone)]
pub struct MleModel {
    pub mdp_hat: TabularMdp,
    pub counts: CountTables,
}

/// Empirical model. Unvisited pairs become zero-reward self-loops.
pub fn mle(counts: CountTables, gamma: f64, r_max: f64) -> Result<MleModel> {
    let (n_s, n_a) = counts.n_sa.dim();
    let mut p = Array3::zeros((n_s, n_a, n_s));
    let mut r = Array2::zeros((n_s, n_a));
    let mut r3 = Array3::zeros((n_s, n_a, n_s));
    for s in 0..n_s {
        for a in 0..n_a {
            let n = counts.n_sa[[s, a]];
            if n == 0 {
                p[[s, a, s]] = 1.0;
                continue;
            }
            r[[s, a]] = counts.reward_sum_sa[[s, a]] / n as f64;
            for s2 in 0..n_s {
                let k = counts.n_sas[[s, a, s2]];
                if k > 0 {
                    p[[s, a, s2]] = k as f64 / n as f64;
                    r3[[s, a, s2]] = counts.reward_sum_sas[[s, a, s2]] / k as f64;
                }
            }
        }
    }
    let mdp_hat = TabularMdp::new(p, r, Some(r3), gamma, vec![false; n_s], r_max)?;
    Ok(MleModel { mdp_hat, counts })
}

/// Per-pair mean of the stored returns; `None` where no return was observed.
pub fn mc_q_estimate(counts: &CountTables) -> Array2<Option<f64>> {
    Array2::from_shape_fn(counts.n_sa.dim(), |(s, a)| {
        let g = counts.return_samples(s, a);
        if g.is_empty() {
            None
        } else {
            Some(g.iter().sum::<f64>() / g.len() as f64)
        }
    })
}
