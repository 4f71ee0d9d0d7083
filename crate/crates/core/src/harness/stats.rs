use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::harness::RunRecord;

/// Mean of the worst `⌈level · n⌉` values.
pub fn cvar(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(SpiError::InvalidArgument("CVaR of an empty sample".into()));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(SpiError::InvalidArgument(format!("CVaR level {level} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // guard against 0.01 * 100 = 1.0000000000000002 rounding up to 2
    let k = ((level * values.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let k = k.min(values.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// `(ρ − ρ_b) / (ρ_* − ρ_b)`.
pub fn normalize(rho: f64, rho_b: f64, rho_star: f64) -> Result<f64> {
    if !(rho_star > rho_b) {
        return Err(SpiError::DegenerateInstance { rho_b, rho_star });
    }
    Ok((rho - rho_b) / (rho_star - rho_b))
}

pub const CVAR_LEVEL: f64 = 0.01;

/// Statistics of one `(algorithm, params, data_size)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub algorithm: String,
    pub params: String,
    pub data_size: usize,
    /// Name of the aggregated column: `normalized` or `performance`.
    pub metric: String,
    /// Successful runs.
    pub n: usize,
    pub n_failed: usize,
    pub mean: Option<f64>,
    pub cvar_1pct: Option<f64>,
    pub bound_violation_rate: Option<f64>,
}

/// Groups records by cell in order of first appearance. Random MDP cells
/// aggregate the normalized performance, everything else the raw one.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateStats> {
    let mut keys: Vec<(&str, &str, usize)> = Vec::new();
    for r in records {
        let key = (r.algorithm.as_str(), r.params.as_str(), r.data_size);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(algorithm, params, data_size)| {
            let cell: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.params == params && r.data_size == data_size)
                .collect();
            let use_normalized = cell.iter().any(|r| r.benchmark == "random_mdps");
            let values: Vec<f64> = cell
                .iter()
                .filter(|r| !r.failed)
                .filter_map(|r| if use_normalized { r.normalized } else { r.performance })
                .collect();
            let flags: Vec<bool> = cell.iter().filter(|r| !r.failed).filter_map(|r| r.bound_violated).collect();
            let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            AggregateStats {
                algorithm: algorithm.to_string(),
                params: params.to_string(),
                data_size,
                metric: if use_normalized { "normalized" } else { "performance" }.to_string(),
                n: values.len(),
                n_failed: cell.iter().filter(|r| r.failed).count(),
                mean,
                cvar_1pct: cvar(&values, CVAR_LEVEL).ok(),
                bound_violation_rate: (!flags.is_empty())
                    .then(|| flags.iter().filter(|&&v| v).count() as f64 / flags.len() as f64),
            }
        })
        .collect()
}
