use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::algorithms::AlgorithmSpec;
use crate::benchmarks::{BenchmarkKind, RandomMdpConfig, WetChickenConfig};
use crate::dataset::ReturnMode;
use crate::error::{Result, SpiError};
use crate::uncertainty::{ErrorKind, GMaxSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Performance,
    BoundAudit,
}

/// Parameters of the a-priori `N_∧` inversion reported by the bound audit.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub v_max: f64,
    pub xi: f64,
    /// `N_∧` quoted in the literature, for comparison.
    pub reference_n_wedge: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { v_max: 20.0, xi: 8.0, reference_n_wedge: 1_832_114.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    benchmark: BenchmarkKind,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    algorithms: Vec<toml::Table>,
    data_sizes: Option<Vec<usize>>,
    #[serde(default = "default_trials")]
    n_trials: usize,
    gamma: Option<f64>,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    return_mode: Option<ReturnMode>,
    horizon: Option<usize>,
    g_max: Option<GMaxSource>,
    g_center: Option<f64>,
    #[serde(default)]
    random_mdps: RandomMdpConfig,
    wet_chicken: Option<WetChickenConfig>,
    #[serde(default)]
    audit: AuditConfig,
}

fn default_trials() -> usize {
    500
}

fn default_delta() -> f64 {
    0.05
}

fn default_output() -> PathBuf {
    PathBuf::from("spi-lab-out")
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkKind,
    pub mode: Mode,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Episodes for Random MDPs, steps for Wet Chicken.
    pub data_sizes: Vec<usize>,
    pub n_trials: usize,
    pub gamma: f64,
    pub delta: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub return_mode: ReturnMode,
    pub horizon: Option<usize>,
    pub g_max: GMaxSource,
    pub g_center: f64,
    pub random_mdps: RandomMdpConfig,
    pub wet_chicken: WetChickenConfig,
    pub audit: AuditConfig,
}

pub const RANDOM_MDPS_SIZES: [usize; 8] = [10, 20, 50, 100, 200, 500, 1000, 2000];
pub const WET_CHICKEN_SIZES: [usize; 6] = [1000, 2000, 5000, 10_000, 20_000, 50_000];
pub const AUDIT_SIZES: [usize; 6] = [5000, 10_000, 50_000, 100_000, 500_000, 1_000_000];

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| SpiError::Config(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SpiError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        if raw.n_trials == 0 {
            return Err(SpiError::Config("n_trials must be at least 1".into()));
        }
        let audit = raw.mode == Mode::BoundAudit;
        if audit && raw.benchmark != BenchmarkKind::WetChicken {
            return Err(SpiError::Config("bound_audit mode runs on wet_chicken only".into()));
        }
        let data_sizes = raw.data_sizes.unwrap_or_else(|| match (raw.mode, raw.benchmark) {
            (Mode::BoundAudit, _) => AUDIT_SIZES.to_vec(),
            (_, BenchmarkKind::RandomMdps) => RANDOM_MDPS_SIZES.to_vec(),
            (_, BenchmarkKind::WetChicken) => WET_CHICKEN_SIZES.to_vec(),
        });
        if data_sizes.is_empty() || data_sizes.contains(&0) {
            return Err(SpiError::Config("data_sizes must be non-empty and positive".into()));
        }
        let mut algorithms = Vec::new();
        for table in &raw.algorithms {
            algorithms.extend(expand_grid(table)?);
        }
        if algorithms.is_empty() {
            if audit {
                algorithms = default_audit_algorithms();
            } else {
                return Err(SpiError::Config("no algorithms configured".into()));
            }
        }
        for spec in &algorithms {
            spec.validate()?;
        }

        let mut random_mdps = raw.random_mdps;
        let mut wet_chicken = raw.wet_chicken.unwrap_or(WetChickenConfig {
            eps_greedy: if audit { 0.2 } else { 0.1 },
            ..WetChickenConfig::default()
        });
        let gamma = raw.gamma.unwrap_or(match raw.benchmark {
            BenchmarkKind::RandomMdps => random_mdps.gamma,
            BenchmarkKind::WetChicken => wet_chicken.gamma,
        });
        if !(0.0..1.0).contains(&gamma) {
            return Err(SpiError::Config(format!("gamma = {gamma} outside [0, 1)")));
        }
        random_mdps.gamma = gamma;
        wet_chicken.gamma = gamma;
        let return_mode = raw.return_mode.unwrap_or(match raw.benchmark {
            BenchmarkKind::RandomMdps => ReturnMode::FirstVisit,
            BenchmarkKind::WetChicken => ReturnMode::EveryVisit,
        });
        let (g_max, g_center) = match (raw.g_max, audit) {
            (Some(g), _) => (g, raw.g_center.unwrap_or(0.0)),
            (None, true) => (GMaxSource::Exact(40.0), raw.g_center.unwrap_or(40.0)),
            (None, false) => (GMaxSource::VMax, raw.g_center.unwrap_or(0.0)),
        };
        Ok(ExperimentConfig {
            benchmark: raw.benchmark,
            mode: raw.mode,
            algorithms,
            data_sizes,
            n_trials: raw.n_trials,
            gamma,
            delta: raw.delta,
            seed: raw.seed,
            output_dir: raw.output_dir,
            return_mode,
            horizon: raw.horizon,
            g_max,
            g_center,
            random_mdps,
            wet_chicken,
            audit: raw.audit,
        })
    }
}

/// Adv-Approx-Soft-SPIBB with both concentration bounds and DUIPI.
pub fn default_audit_algorithms() -> Vec<AlgorithmSpec> {
    vec![
        AlgorithmSpec::AdvApproxSoftSpibb { epsilon: 0.01, delta: 0.01, err_kind: ErrorKind::HoeffdingQ },
        AlgorithmSpec::AdvApproxSoftSpibb { epsilon: 0.01, delta: 0.01, err_kind: ErrorKind::MaurerPontilQ },
        AlgorithmSpec::Duipi { xi: 2.33, prior_alpha: 0.1, mask_unvisited: true, lambda: 0.1 },
    ]
}

/// Cartesian product over every array-valued entry of an algorithm table.
pub fn expand_grid(table: &toml::Table) -> Result<Vec<AlgorithmSpec>> {
    let mut combos = vec![toml::Table::new()];
    for (key, value) in table {
        let choices = match value {
            toml::Value::Array(items) if !items.is_empty() => items.clone(),
            toml::Value::Array(_) => return Err(SpiError::Config(format!("empty grid for `{key}`"))),
            other => vec![other.clone()],
        };
        combos = combos
            .into_iter()
            .flat_map(|base| {
                choices.iter().map(move |choice| {
                    let mut t = base.clone();
                    t.insert(key.clone(), choice.clone());
                    t
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|t| {
            toml::Value::Table(t)
                .try_into::<AlgorithmSpec>()
                .map_err(|e| SpiError::Config(format!("bad algorithm entry: {e}")))
        })
        .collect()
}
