//! Experiment runner: repeated seeded trials over algorithm grids and data
//! sizes, exact evaluation on the true MDP, and aggregation.

mod audit;
mod config;
mod emit;
mod stats;

pub use audit::{n_wedge_report, spibb_n_wedge, spibb_n_wedge_linear, soft_safety_bound, NWedgeReport};
pub use config::{
    default_audit_algorithms, expand_grid, AuditConfig, ExperimentConfig, Mode, AUDIT_SIZES, RANDOM_MDPS_SIZES,
    WET_CHICKEN_SIZES,
};
pub use emit::{emit, emit_n_wedge, read_records, write_aggregate_csv, write_records_csv, RECORD_COLUMNS};
pub use stats::{aggregate, cvar, normalize, AggregateStats, CVAR_LEVEL};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{train, AlgorithmSpec, TrainOptions, TrainedPolicy};
use crate::benchmarks::{
    random_mdp, wet_chicken_baseline, wet_chicken_mdp, BenchmarkKind, RandomMdpConfig, START_STATE,
};
use crate::dataset::{counts, generate, mle, Budget, GenerationSpec, ReturnOptions};
use crate::error::{Result, SpiError};
use crate::mdp::{optimal_policy, performance, Initial, PeOptions, Policy, TabularMdp};
use crate::uncertainty::{ErrorKind, UncertaintyModel};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SPI_LAB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: usize,
    pub benchmark: String,
    pub algorithm: String,
    pub params: String,
    pub data_size: usize,
    pub performance: Option<f64>,
    /// Random MDPs only.
    pub normalized: Option<f64>,
    pub baseline_performance: Option<f64>,
    pub optimal_performance: Option<f64>,
    pub bound: Option<f64>,
    pub bound_violated: Option<bool>,
    pub pi_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub mean_budget_used: Option<f64>,
    pub bootstrapped_fraction: Option<f64>,
    pub failed: bool,
    pub error: String,
}

/// The true environment of one trial.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub mdp: TabularMdp,
    pub baseline: Policy,
    pub rho_b: f64,
    pub rho_star: f64,
}

#[derive(Debug, Clone)]
pub struct AuditOutput {
    pub records: Vec<RunRecord>,
    pub n_wedge: NWedgeReport,
}

pub fn trial_seed(config: &ExperimentConfig, trial: usize) -> u64 {
    config.seed.wrapping_add(trial as u64)
}

/// Builds the benchmark instance of a trial (stream 0 and 1 of its seed).
pub fn trial_instance(config: &ExperimentConfig, trial: usize) -> Result<TrialInstance> {
    let start = Initial::State(START_STATE);
    let (mdp, baseline) = match config.benchmark {
        BenchmarkKind::RandomMdps => {
            let inst = random_mdp(&RandomMdpConfig { seed: trial_seed(config, trial), ..config.random_mdps })?;
            (inst.mdp, inst.baseline)
        }
        BenchmarkKind::WetChicken => {
            (wet_chicken_mdp(&config.wet_chicken)?, wet_chicken_baseline(&config.wet_chicken)?)
        }
    };
    let rho_b = performance(&mdp, &baseline, &start)?;
    let (optimal, _) = optimal_policy(&mdp, PeOptions::default())?;
    let rho_star = performance(&mdp, &optimal, &start)?;
    if config.benchmark == BenchmarkKind::RandomMdps {
        normalize(rho_b, rho_b, rho_star)?;
    }
    Ok(TrialInstance { mdp, baseline, rho_b, rho_star })
}

fn generation_spec(config: &ExperimentConfig, trial: usize, size_index: usize) -> GenerationSpec {
    let budget = match config.benchmark {
        BenchmarkKind::RandomMdps => Budget::Episodes(config.data_sizes[size_index]),
        BenchmarkKind::WetChicken => Budget::Steps(config.data_sizes[size_index]),
    };
    GenerationSpec {
        budget,
        horizon: config.horizon,
        start: START_STATE,
        seed: trial_seed(config, trial),
        stream: 2 + size_index as u64,
    }
}

/// Rewards of both benchmarks are non-negative.
fn train_options() -> TrainOptions {
    TrainOptions { r_min: Some(0.0), ..TrainOptions::default() }
}

fn empty_record(config: &ExperimentConfig, trial: usize, spec: &AlgorithmSpec, data_size: usize) -> RunRecord {
    RunRecord {
        trial,
        benchmark: config.benchmark.name().to_string(),
        algorithm: spec.name().to_string(),
        params: spec.params(),
        data_size,
        performance: None,
        normalized: None,
        baseline_performance: None,
        optimal_performance: None,
        bound: None,
        bound_violated: None,
        pi_iterations: None,
        converged: None,
        mean_budget_used: None,
        bootstrapped_fraction: None,
        failed: false,
        error: String::new(),
    }
}

fn fail(mut record: RunRecord, err: &SpiError) -> RunRecord {
    log::warn!(
        "trial {} {} ({}) at size {} failed: {err}",
        record.trial,
        record.algorithm,
        record.params,
        record.data_size
    );
    record.failed = true;
    record.error = err.to_string();
    record
}

/// Safety bound attached to a run in audit mode.
fn run_bound(
    config: &ExperimentConfig,
    spec: &AlgorithmSpec,
    trained: &TrainedPolicy,
    rho_b: f64,
    g_max: f64,
) -> Option<f64> {
    match *spec {
        AlgorithmSpec::AdvApproxSoftSpibb { epsilon, .. } => Some(soft_safety_bound(rho_b, epsilon, g_max, config.gamma)),
        AlgorithmSpec::Duipi { xi, .. } => {
            let var_q = trained.var_q.as_ref()?;
            let var_v: f64 = trained
                .policy
                .row(START_STATE)
                .iter()
                .zip(var_q.row(START_STATE))
                .map(|(p, v)| p * p * v)
                .sum();
            Some(trained.values.v[START_STATE] - xi * var_v.sqrt())
        }
        _ => None,
    }
}

fn run_cell(
    config: &ExperimentConfig,
    instance: &TrialInstance,
    model: &crate::dataset::MleModel,
    unc: &UncertaintyModel,
    spec: &AlgorithmSpec,
    mut record: RunRecord,
) -> Result<RunRecord> {
    let trained = train(model, &instance.baseline, spec, Some(unc), &train_options())?;
    let rho = performance(&instance.mdp, &trained.policy, &Initial::State(START_STATE))?;
    record.performance = Some(rho);
    if config.benchmark == BenchmarkKind::RandomMdps {
        record.normalized = Some(normalize(rho, instance.rho_b, instance.rho_star)?);
    }
    if config.mode == Mode::BoundAudit {
        record.bound = run_bound(config, spec, &trained, instance.rho_b, unc.g_max);
        record.bound_violated = record.bound.map(|b| rho < b);
    }
    let d = &trained.diagnostics;
    record.pi_iterations = Some(d.pi_iterations);
    record.converged = Some(d.converged);
    record.mean_budget_used = d.mean_budget_used;
    record.bootstrapped_fraction = d.bootstrapped_fraction;
    Ok(record)
}

/// All records of one trial, ordered by (algorithm, data size).
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Vec<RunRecord> {
    let n_sizes = config.data_sizes.len();
    let mut slots: Vec<Option<RunRecord>> = vec![None; config.algorithms.len() * n_sizes];
    let instance = match trial_instance(config, trial) {
        Ok(inst) => Some(inst),
        Err(e) => {
            for (i, spec) in config.algorithms.iter().enumerate() {
                for (j, &size) in config.data_sizes.iter().enumerate() {
                    slots[i * n_sizes + j] = Some(fail(empty_record(config, trial, spec, size), &e));
                }
            }
            None
        }
    };
    if let Some(instance) = instance {
        let n_s = instance.mdp.n_states();
        let n_a = instance.mdp.n_actions();
        let ret = ReturnOptions::new(config.gamma, instance.mdp.r_max(), config.return_mode);
        for (j, &size) in config.data_sizes.iter().enumerate() {
            let prepared = generate(&instance.mdp, &instance.baseline, &generation_spec(config, trial, j))
                .and_then(|data| counts(&data, n_s, n_a, &ret))
                .and_then(|c| mle(c, config.gamma, instance.mdp.r_max()))
                .and_then(|model| {
                    let g_max = config.g_max.resolve(instance.mdp.r_max(), config.gamma, &model.counts);
                    let unc = UncertaintyModel::new(ErrorKind::HoeffdingQ, 1.0, g_max, n_s, n_a)?
                        .with_center(config.g_center);
                    Ok((model, unc))
                });
            for (i, spec) in config.algorithms.iter().enumerate() {
                let mut base = empty_record(config, trial, spec, size);
                base.baseline_performance = Some(instance.rho_b);
                base.optimal_performance = Some(instance.rho_star);
                let record = match &prepared {
                    Ok((model, unc)) => {
                        run_cell(config, &instance, model, unc, spec, base.clone()).unwrap_or_else(|e| fail(base, &e))
                    }
                    Err(e) => fail(base, e),
                };
                slots[i * n_sizes + j] = Some(record);
            }
        }
    }
    slots.into_iter().flatten().collect()
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs every trial; the result is sorted by (trial, algorithm, data size)
/// and depends only on the config.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let work = || -> Vec<RunRecord> {
        (0..config.n_trials)
            .into_par_iter()
            .map(|t| run_trial(config, t))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    match thread_cap() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SpiError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Runs the configured algorithms in audit mode and evaluates the Π_b-SPIBB
/// `N_∧` requirement without training it.
pub fn bound_audit(config: &ExperimentConfig) -> Result<AuditOutput> {
    if config.mode != Mode::BoundAudit || config.benchmark != BenchmarkKind::WetChicken {
        return Err(SpiError::Config("bound_audit needs mode = bound_audit on wet_chicken".into()));
    }
    let records = run(config)?;
    let n_s = config.wet_chicken.n_states();
    let n_wedge = n_wedge_report(
        config.audit.v_max,
        config.audit.xi,
        config.delta,
        config.gamma,
        n_s,
        crate::benchmarks::WET_CHICKEN_ACTIONS,
        config.audit.reference_n_wedge,
    );
    Ok(AuditOutput { records, n_wedge })
}

/// Assumption check of one benchmark instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionRow {
    pub instance: usize,
    pub kappa: f64,
    pub evaluated: usize,
    pub excluded: usize,
    /// `κ < 1/γ`.
    pub satisfied: bool,
}

/// Minimal κ on `n_instances` datasets of `data_size` (episodes or steps).
pub fn check_assumption(
    benchmark: BenchmarkKind,
    gamma: f64,
    n_instances: usize,
    data_size: usize,
    seed: u64,
    delta: f64,
) -> Result<Vec<AssumptionRow>> {
    let mut text = format!("benchmark = \"{}\"\ngamma = {gamma:?}\nseed = {seed}\n", benchmark.name());
    text.push_str(&format!("n_trials = {}\ndata_sizes = [{data_size}]\n", n_instances.max(1)));
    text.push_str("[[algorithms]]\nalgorithm = \"basic_rl\"\n");
    let config = ExperimentConfig::from_toml_str(&text)?;
    (0..n_instances)
        .map(|i| {
            let inst = trial_instance(&config, i)?;
            let data = generate(&inst.mdp, &inst.baseline, &generation_spec(&config, i, 0))?;
            let ret = ReturnOptions::new(gamma, inst.mdp.r_max(), config.return_mode);
            let c = counts(&data, inst.mdp.n_states(), inst.mdp.n_actions(), &ret)?;
            let report = crate::uncertainty::assumption1_min_kappa(&inst.mdp, &inst.baseline, &c, delta)?;
            Ok(AssumptionRow {
                instance: i,
                kappa: report.kappa,
                evaluated: report.evaluated,
                excluded: report.excluded,
                satisfied: report.kappa * gamma < 1.0,
            })
        })
        .collect()
}
