//! The Wet Chicken river: a canoeist on a 5×5 grid drifts toward a waterfall
//! at the far end (`x > 4`). Reward is the `x` position reached; going over
//! the edge resets the canoe to `(0, 0)` with reward 0.

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::mdp::{Policy, TabularMdp};

pub const N_ACTIONS: usize = 5;
/// Action displacements `(a_x, a_y)`: drift, hold, paddle back, right, left.
pub const ACTIONS: [(i64, i64); N_ACTIONS] = [(0, 0), (-1, 0), (-2, 0), (0, 1), (0, -1)];
pub const DRIFT: usize = 0;
pub const HOLD: usize = 1;
pub const PADDLE_BACK: usize = 2;
pub const RIGHT: usize = 3;
pub const LEFT: usize = 4;

/// Which coordinate the baseline corrects first on its way to the centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigationOrder {
    #[default]
    YFirst,
    XFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WetChickenConfig {
    pub width: usize,
    pub length: usize,
    pub max_turbulence: f64,
    pub max_velocity: f64,
    pub gamma: f64,
    pub eps_greedy: f64,
    pub navigation: NavigationOrder,
}

impl Default for WetChickenConfig {
    fn default() -> Self {
        WetChickenConfig {
            width: 5,
            length: 5,
            max_turbulence: 3.5,
            max_velocity: 3.0,
            gamma: 0.95,
            eps_greedy: 0.1,
            navigation: NavigationOrder::YFirst,
        }
    }
}

impl WetChickenConfig {
    pub fn n_states(&self) -> usize {
        self.width * self.length
    }

    pub fn state(&self, x: usize, y: usize) -> usize {
        x * self.width + y
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.width, s % self.width)
    }

    /// Stream velocity `v = y · v_max / width` and turbulence `b = b_max − v`.
    pub fn velocity_turbulence(&self, y: usize) -> (f64, f64) {
        let v = y as f64 * self.max_velocity / self.width as f64;
        (v, self.max_turbulence - v)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.length == 0 {
            return Err(SpiError::InvalidArgument("empty river".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_greedy) {
            return Err(SpiError::InvalidArgument(format!("eps_greedy = {}", self.eps_greedy)));
        }
        Ok(())
    }

    /// Applies the boundary rules to a rounded position; `None` means the
    /// canoe went over the waterfall.
    fn land(&self, x_hat: i64, y: usize, a_y: i64) -> Option<(usize, usize)> {
        if x_hat >= self.length as i64 {
            return None;
        }
        let y_next = (y as i64 + a_y).clamp(0, self.width as i64 - 1) as usize;
        Some((x_hat.max(0) as usize, y_next))
    }
}

/// Exact transition tensor. The turbulence `τ ~ U(−1, 1)` makes the
/// unrounded position uniform on `(c − b, c + b)`; each integer receives
/// the share of that interval which rounds (half up) onto it.
pub fn wet_chicken_mdp(config: &WetChickenConfig) -> Result<TabularMdp> {
    config.validate()?;
    let n_s = config.n_states();
    let mut p = Array3::zeros((n_s, N_ACTIONS, n_s));
    let mut r3 = Array3::zeros((n_s, N_ACTIONS, n_s));
    for x in 0..config.length {
        for y in 0..config.width {
            let s = config.state(x, y);
            let (v, b) = config.velocity_turbulence(y);
            for (a, &(a_x, a_y)) in ACTIONS.iter().enumerate() {
                let c = x as f64 + a_x as f64 + v;
                for (x_hat, prob) in rounded_distribution(c, b) {
                    let (next, reward) = match config.land(x_hat, y, a_y) {
                        Some((nx, ny)) => (config.state(nx, ny), nx as f64),
                        None => (config.state(0, 0), 0.0),
                    };
                    p[[s, a, next]] += prob;
                    r3[[s, a, next]] = reward;
                }
            }
        }
    }
    let reward = Array2::from_shape_fn((n_s, N_ACTIONS), |(s, a)| {
        (0..n_s).map(|s2| p[[s, a, s2]] * r3[[s, a, s2]]).sum()
    });
    let r_max = (config.length - 1) as f64;
    TabularMdp::new(p, reward, Some(r3), config.gamma, vec![false; n_s], r_max)
}

/// Distribution of `round_half_up(c + τ b)` for `τ ~ U(−1, 1)`.
fn rounded_distribution(c: f64, b: f64) -> Vec<(i64, f64)> {
    if b <= 0.0 {
        return vec![((c + 0.5).floor() as i64, 1.0)];
    }
    let (lo, hi) = (c - b, c + b);
    let first = (lo + 0.5).floor() as i64;
    let last = (hi + 0.5).floor() as i64;
    (first..=last)
        .filter_map(|k| {
            let l = lo.max(k as f64 - 0.5);
            let h = hi.min(k as f64 + 0.5);
            (h > l).then(|| (k, (h - l) / (2.0 * b)))
        })
        .collect()
}

/// Samples one step of the river dynamics; returns `(next_state, reward)`.
pub fn wet_chicken_step<R: Rng + ?Sized>(
    config: &WetChickenConfig,
    state: usize,
    action: usize,
    rng: &mut R,
) -> (usize, f64) {
    let (x, y) = config.coords(state);
    let (v, b) = config.velocity_turbulence(y);
    let (a_x, a_y) = ACTIONS[action];
    let tau: f64 = rng.random_range(-1.0..1.0);
    let x_hat = (x as f64 + a_x as f64 + v + tau * b + 0.5).floor() as i64;
    match config.land(x_hat, y, a_y) {
        Some((nx, ny)) => (config.state(nx, ny), nx as f64),
        None => (config.state(0, 0), 0.0),
    }
}

/// `(1 − ε) π_b' + ε π_u`, where `π_b'` steers toward the centre of the
/// river and paddles back once there.
pub fn wet_chicken_baseline(config: &WetChickenConfig) -> Result<Policy> {
    config.validate()?;
    let (cx, cy) = (config.length / 2, config.width / 2);
    let actions: Vec<usize> = (0..config.n_states())
        .map(|s| {
            let (x, y) = config.coords(s);
            let x_move = match x.cmp(&cx) {
                std::cmp::Ordering::Less => Some(DRIFT),
                std::cmp::Ordering::Greater => Some(HOLD),
                std::cmp::Ordering::Equal => None,
            };
            let y_move = match y.cmp(&cy) {
                std::cmp::Ordering::Less => Some(RIGHT),
                std::cmp::Ordering::Greater => Some(LEFT),
                std::cmp::Ordering::Equal => None,
            };
            let pick = match config.navigation {
                NavigationOrder::YFirst => y_move.or(x_move),
                NavigationOrder::XFirst => x_move.or(y_move),
            };
            pick.unwrap_or(PADDLE_BACK)
        })
        .collect();
    let core = Policy::deterministic(&actions, N_ACTIONS)?;
    core.mix(&Policy::uniform(config.n_states(), N_ACTIONS), config.eps_greedy)
}
