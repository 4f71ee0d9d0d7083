#![allow(dead_code)]

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spi_core::benchmarks::{random_mdp, wet_chicken_baseline, wet_chicken_mdp, RandomMdpConfig, WetChickenConfig};
use spi_core::dataset::{counts, generate, mle, GenerationSpec, MleModel, ReturnMode, ReturnOptions};
use spi_core::mdp::{Policy, TabularMdp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense random dynamics, rewards in `[0, 1)`, no terminals.
pub fn random_dense_mdp<R: Rng>(rng: &mut R, n_s: usize, n_a: usize, gamma: f64) -> TabularMdp {
    let mut p = Array3::zeros((n_s, n_a, n_s));
    for s in 0..n_s {
        for a in 0..n_a {
            let w: Vec<f64> = (0..n_s).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            for s2 in 0..n_s {
                p[[s, a, s2]] = w[s2] / total;
            }
        }
    }
    let r = Array2::from_shape_fn((n_s, n_a), |_| rng.random::<f64>());
    TabularMdp::new(p, r, None, gamma, vec![false; n_s], 1.0).unwrap()
}

pub fn random_policy<R: Rng>(rng: &mut R, n_s: usize, n_a: usize) -> Policy {
    let mut probs = Array2::from_shape_fn((n_s, n_a), |_| rng.random::<f64>() + 1e-3);
    for mut row in probs.outer_iter_mut() {
        let t = row.sum();
        row.mapv_inplace(|x| x / t);
    }
    for mut row in probs.outer_iter_mut() {
        let t: f64 = row.iter().take(n_a - 1).sum();
        row[n_a - 1] = 1.0 - t;
    }
    Policy::new(probs).unwrap()
}

pub struct Sampled {
    pub mdp: TabularMdp,
    pub baseline: Policy,
    pub model: MleModel,
}

pub fn wet_chicken_sample(steps: usize, seed: u64, eps: f64) -> Sampled {
    let cfg = WetChickenConfig { eps_greedy: eps, ..Default::default() };
    let mdp = wet_chicken_mdp(&cfg).unwrap();
    let baseline = wet_chicken_baseline(&cfg).unwrap();
    let data = generate(&mdp, &baseline, &GenerationSpec::steps(steps, seed)).unwrap();
    let ret = ReturnOptions::new(mdp.gamma(), mdp.r_max(), ReturnMode::EveryVisit);
    let c = counts(&data, mdp.n_states(), mdp.n_actions(), &ret).unwrap();
    let model = mle(c, mdp.gamma(), mdp.r_max()).unwrap();
    Sampled { mdp, baseline, model }
}

pub fn random_mdp_sample(episodes: usize, seed: u64) -> Sampled {
    let inst = random_mdp(&RandomMdpConfig { seed, ..Default::default() }).unwrap();
    let data = generate(&inst.mdp, &inst.baseline, &GenerationSpec::episodes(episodes, seed)).unwrap();
    let ret = ReturnOptions::new(inst.mdp.gamma(), inst.mdp.r_max(), ReturnMode::FirstVisit);
    let c = counts(&data, inst.mdp.n_states(), inst.mdp.n_actions(), &ret).unwrap();
    let model = mle(c, inst.mdp.gamma(), inst.mdp.r_max()).unwrap();
    Sampled { mdp: inst.mdp, baseline: inst.baseline, model }
}
