//! Benchmark environments and their baseline policies.

mod random_mdps;
mod wet_chicken;

pub use random_mdps::{
    random_baseline, random_mdp, reachable, BaselineNoise, RandomMdpConfig, RandomMdpInstance, START_STATE,
};
pub use wet_chicken::{
    wet_chicken_baseline, wet_chicken_mdp, wet_chicken_step, NavigationOrder, WetChickenConfig, ACTIONS, DRIFT, HOLD,
    LEFT, N_ACTIONS as WET_CHICKEN_ACTIONS, PADDLE_BACK, RIGHT,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    RandomMdps,
    WetChicken,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::RandomMdps => "random_mdps",
            BenchmarkKind::WetChicken => "wet_chicken",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "random_mdps" => Some(BenchmarkKind::RandomMdps),
            "wet_chicken" => Some(BenchmarkKind::WetChicken),
            _ => None,
        }
    }
}
