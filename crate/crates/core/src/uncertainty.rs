//! Count-based error functions and the Assumption-1 checker.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::dataset::CountTables;
use crate::error::{Result, SpiError};
use crate::mdp::{Policy, TabularMdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Hoeffding bound on the L1 error of `P̂(·|s,a)`.
    HoeffdingP,
    /// Hoeffding bound on the Monte-Carlo estimate of `Q^{π_b}`.
    HoeffdingQ,
    /// Maurer–Pontil empirical Bernstein bound on the same estimate.
    MaurerPontilQ,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::HoeffdingP => "hoeffding_p",
            ErrorKind::HoeffdingQ => "hoeffding_q",
            ErrorKind::MaurerPontilQ => "maurer_pontil_q",
        }
    }
}

/// An error-function value; `Unbounded` stands for "no data, no guarantee".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorBound {
    Finite(f64),
    Unbounded,
}

impl ErrorBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            ErrorBound::Finite(v) => Some(v),
            ErrorBound::Unbounded => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ErrorBound::Finite(_))
    }

    /// The value as a float, `+∞` when unbounded.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Where the return bound `G_max` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "value")]
pub enum GMaxSource {
    Exact(f64),
    /// `r_max / (1 − γ)`.
    #[default]
    VMax,
    /// `½ (max G − min G)` over the observed returns, a lower bound on the true value.
    Empirical,
}

impl GMaxSource {
    pub fn resolve(self, r_max: f64, gamma: f64, counts: &CountTables) -> f64 {
        match self {
            GMaxSource::Exact(g) => g,
            GMaxSource::VMax => r_max / (1.0 - gamma),
            GMaxSource::Empirical => {
                let (lo, hi) = (0..counts.n_states())
                    .flat_map(|s| (0..counts.n_actions()).map(move |a| (s, a)))
                    .flat_map(|(s, a)| counts.return_samples(s, a).iter().copied())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
                if lo > hi {
                    0.0
                } else {
                    0.5 * (hi - lo)
                }
            }
        }
    }
}

/// Error-function evaluator for one confidence level and state-action shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyModel {
    pub kind: ErrorKind,
    pub delta: f64,
    pub g_max: f64,
    /// Returns are checked against `|G − center| ≤ g_max`.
    pub center: f64,
    pub n_states: usize,
    pub n_actions: usize,
}

impl UncertaintyModel {
    pub fn new(kind: ErrorKind, delta: f64, g_max: f64, n_states: usize, n_actions: usize) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(SpiError::InvalidHyperparameter(format!("delta = {delta} outside (0, 1]")));
        }
        if !(g_max > 0.0 && g_max.is_finite()) {
            return Err(SpiError::InvalidHyperparameter(format!("g_max = {g_max} must be positive")));
        }
        if n_states == 0 || n_actions == 0 {
            return Err(SpiError::InvalidArgument("empty shape".into()));
        }
        Ok(UncertaintyModel { kind, delta, g_max, center: 0.0, n_states, n_actions })
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    fn pairs(&self) -> f64 {
        (self.n_states * self.n_actions) as f64
    }

    fn check_shape(&self, counts: &CountTables) -> Result<()> {
        if counts.n_sa.dim() != (self.n_states, self.n_actions) {
            return Err(SpiError::Shape(format!(
                "counts are {:?}, uncertainty model is ({}, {})",
                counts.n_sa.dim(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Error function of the configured kind.
    pub fn errors(&self, counts: &CountTables) -> Result<Array2<ErrorBound>> {
        match self.kind {
            ErrorKind::HoeffdingP => self.e_p(counts),
            ErrorKind::HoeffdingQ => self.e_q(counts),
            ErrorKind::MaurerPontilQ => self.e_q_mpeb(counts),
        }
    }

    /// `√(2/N(s,a) · ln(2|S||A|2^{|A|}/δ))`.
    pub fn e_p(&self, counts: &CountTables) -> Result<Array2<ErrorBound>> {
        self.check_shape(counts)?;
        let log_term = (2.0 * self.pairs() / self.delta).ln() + self.n_actions as f64 * std::f64::consts::LN_2;
        Ok(counts.n_sa.mapv(|n| hoeffding(n, log_term)))
    }

    /// `√(2/N(s,a) · ln(2|S||A|/δ))` with `N` the number of return samples.
    pub fn e_q(&self, counts: &CountTables) -> Result<Array2<ErrorBound>> {
        self.check_shape(counts)?;
        let log_term = (2.0 * self.pairs() / self.delta).ln();
        Ok(Array2::from_shape_fn(counts.n_sa.dim(), |(s, a)| {
            hoeffding(counts.n_returns(s, a), log_term)
        }))
    }

    /// Empirical Bernstein error on returns rescaled to `[0, 1]`.
    pub fn e_q_mpeb(&self, counts: &CountTables) -> Result<Array2<ErrorBound>> {
        self.check_shape(counts)?;
        let log_term = (4.0 * self.pairs() / self.delta).ln();
        let mut out = Array2::from_elem(counts.n_sa.dim(), ErrorBound::Unbounded);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let g = counts.return_samples(s, a);
                let slack = self.g_max * 1e-12;
                if let Some(bad) = g.iter().find(|x| (*x - self.center).abs() > self.g_max + slack) {
                    return Err(SpiError::InvalidGMax { value: *bad, g_max: self.g_max });
                }
                if g.len() < 2 {
                    continue;
                }
                let var = sample_variance(g)? / (4.0 * self.g_max * self.g_max);
                out[[s, a]] = ErrorBound::Finite(mpeb(var, g.len(), log_term));
            }
        }
        Ok(out)
    }
}

fn hoeffding(n: usize, log_term: f64) -> ErrorBound {
    if n == 0 {
        ErrorBound::Unbounded
    } else {
        ErrorBound::Finite((2.0 / n as f64 * log_term).sqrt())
    }
}

/// `2(√(2 V ln(·) / n) + 7 ln(·) / (3(n − 1)))`.
fn mpeb(var: f64, n: usize, log_term: f64) -> f64 {
    let n = n as f64;
    2.0 * ((2.0 * var * log_term / n).sqrt() + 7.0 * log_term / (3.0 * (n - 1.0)))
}

/// Unbiased sample variance, computed with Welford's recurrence.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(SpiError::InvalidArgument(format!(
            "sample variance needs at least 2 values, got {}",
            values.len()
        )));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok(m2 / (values.len() - 1) as f64)
}

/// Smallest κ with `Σ_{s'} P(s'|s,a) Σ_{a'} π_b(a'|s') e_P(s',a') ≤ κ e_P(s,a)`
/// over the pairs where both sides are finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaReport {
    pub kappa: f64,
    pub evaluated: usize,
    /// Pairs skipped because one side was unbounded.
    pub excluded: usize,
}

pub fn assumption1_min_kappa(
    mdp: &TabularMdp,
    behavior: &Policy,
    counts: &CountTables,
    delta: f64,
) -> Result<KappaReport> {
    let model = UncertaintyModel::new(ErrorKind::HoeffdingP, delta, 1.0, mdp.n_states(), mdp.n_actions())?;
    let e = model.e_p(counts)?.mapv(ErrorBound::value);
    // expected next-step error under the behaviour policy
    let next: Vec<f64> = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .filter(|&a| behavior.prob(s, a) > 0.0)
                .map(|a| behavior.prob(s, a) * e[[s, a]])
                .sum()
        })
        .collect();
    let mut report = KappaReport { kappa: 0.0, evaluated: 0, excluded: 0 };
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) && !e.row(s).iter().any(|v| v.is_finite()) {
            continue;
        }
        for a in 0..mdp.n_actions() {
            let lhs: f64 = mdp.successors(s, a).iter().map(|x| x.prob * next[x.state]).sum();
            if !e[[s, a]].is_finite() || !lhs.is_finite() {
                report.excluded += 1;
                continue;
            }
            report.kappa = report.kappa.max(lhs / e[[s, a]]);
            report.evaluated += 1;
        }
    }
    if report.excluded > 0 {
        log::warn!("assumption check skipped {} pairs with unbounded error", report.excluded);
    }
    Ok(report)
}

/// One root state whose single action leads to each of `n` terminals with
/// probability `1/n`. All rewards are zero.
pub fn star_mdp(n: usize, gamma: f64) -> Result<TabularMdp> {
    if n == 0 {
        return Err(SpiError::InvalidArgument("star MDP needs at least one leaf".into()));
    }
    let n_states = n + 1;
    let mut p = Array3::zeros((n_states, 1, n_states));
    for i in 1..n_states {
        p[[0, 0, i]] = 1.0 / n as f64;
        p[[i, 0, i]] = 1.0;
    }
    let mut terminal = vec![true; n_states];
    terminal[0] = false;
    TabularMdp::new(p, Array2::zeros((n_states, 1)), None, gamma, terminal, 0.0)
}

/// Counts for a star MDP where leaf `i` was visited `visits[i - 1]` times;
/// the root is visited once per leaf visit.
pub fn star_counts(visits: &[usize]) -> CountTables {
    let n_states = visits.len() + 1;
    let mut c = CountTables::empty(n_states, 1);
    for (i, &v) in visits.iter().enumerate() {
        c.n_sa[[i + 1, 0]] = v;
        c.n_sas[[i + 1, 0, i + 1]] = v;
        c.n_sas[[0, 0, i + 1]] = v;
    }
    c.n_sa[[0, 0]] = visits.iter().sum();
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn counts_with(n_states: usize, n_actions: usize, n: usize) -> CountTables {
        let mut c = CountTables::empty(n_states, n_actions);
        c.n_sa.fill(n);
        c
    }

    fn counts_with_returns(n_states: usize, n_actions: usize, returns: &[f64]) -> CountTables {
        let mut c = CountTables::empty(n_states, n_actions);
        c.n_sa[[0, 0]] = returns.len();
        c.set_returns(0, 0, returns.to_vec());
        c
    }

    #[test]
    fn e_p_closed_form() {
        let m = UncertaintyModel::new(ErrorKind::HoeffdingP, 1.0, 1.0, 50, 4).unwrap();
        let e = m.e_p(&counts_with(50, 4, 8)).unwrap();
        let expected = (0.25 * 6400f64.ln()).sqrt();
        assert_abs_diff_eq!(e[[0, 0]].value(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.4800, epsilon = 1e-3);
    }

    #[test]
    fn zero_count_is_unbounded() {
        let m = UncertaintyModel::new(ErrorKind::HoeffdingP, 0.1, 1.0, 2, 2).unwrap();
        assert_eq!(m.e_p(&counts_with(2, 2, 0)).unwrap()[[1, 1]], ErrorBound::Unbounded);
        assert_eq!(m.e_q(&counts_with(2, 2, 0)).unwrap()[[1, 1]], ErrorBound::Unbounded);
    }

    #[test]
    fn quadrupling_n_halves_e_p() {
        let m = UncertaintyModel::new(ErrorKind::HoeffdingP, 0.05, 1.0, 5, 3).unwrap();
        let a = m.e_p(&counts_with(5, 3, 10)).unwrap()[[0, 0]].value();
        let b = m.e_p(&counts_with(5, 3, 40)).unwrap()[[0, 0]].value();
        assert_abs_diff_eq!(a / b, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn e_q_closed_form() {
        let m = UncertaintyModel::new(ErrorKind::HoeffdingQ, 1.0, 1.0, 25, 5).unwrap();
        let c = counts_with_returns(25, 5, &[0.0, 0.0]);
        let e = m.e_q(&c).unwrap()[[0, 0]].value();
        assert_abs_diff_eq!(e, 250f64.ln().sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(e, 2.3490, epsilon = 1e-3);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn mpeb_constant_returns() {
        let m = UncertaintyModel::new(ErrorKind::MaurerPontilQ, 0.05, 10.0, 25, 5).unwrap();
        let c = counts_with_returns(25, 5, &[3.0; 100]);
        let e = m.e_q_mpeb(&c).unwrap()[[0, 0]].value();
        assert_abs_diff_eq!(e, 2.0 * 7.0 * 1e4f64.ln() / 297.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.4342, epsilon = 1e-4);
    }

    #[test]
    fn mpeb_single_sample_unbounded() {
        let m = UncertaintyModel::new(ErrorKind::MaurerPontilQ, 0.05, 10.0, 2, 2).unwrap();
        let c = counts_with_returns(2, 2, &[1.0]);
        assert_eq!(m.e_q_mpeb(&c).unwrap()[[0, 0]], ErrorBound::Unbounded);
    }

    #[test]
    fn mpeb_rejects_returns_beyond_g_max() {
        let m = UncertaintyModel::new(ErrorKind::MaurerPontilQ, 0.05, 1.0, 2, 2).unwrap();
        let c = counts_with_returns(2, 2, &[0.5, 1.5]);
        assert!(matches!(m.e_q_mpeb(&c), Err(SpiError::InvalidGMax { .. })));
        let centred = m.with_center(1.0);
        assert!(centred.e_q_mpeb(&c).is_ok());
    }

    #[test]
    fn sample_variance_examples() {
        assert_eq!(sample_variance(&[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(sample_variance(&[2.5; 7]).unwrap(), 0.0);
        assert!(sample_variance(&[1.0]).is_err());
    }

    #[test]
    fn self_loop_kappa_is_one() {
        let mdp = TabularMdp::new(
            Array3::from_elem((1, 1, 1), 1.0),
            Array2::zeros((1, 1)),
            None,
            0.9,
            vec![false],
            0.0,
        )
        .unwrap();
        let c = counts_with(1, 1, 5);
        let k = assumption1_min_kappa(&mdp, &Policy::uniform(1, 1), &c, 0.1).unwrap();
        assert_abs_diff_eq!(k.kappa, 1.0, epsilon = 1e-12);
        assert_eq!(k.excluded, 0);
    }

    #[test]
    fn star_two_leaves_gives_sqrt_two() {
        let mdp = star_mdp(2, 0.9).unwrap();
        assert_eq!(mdp.transition()[[0, 0, 1]], 0.5);
        let k = assumption1_min_kappa(&mdp, &Policy::uniform(3, 1), &star_counts(&[1, 1]), 0.1).unwrap();
        assert_abs_diff_eq!(k.kappa, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn empirical_g_max() {
        let c = counts_with_returns(2, 1, &[1.0, 5.0, 3.0]);
        assert_eq!(GMaxSource::Empirical.resolve(1.0, 0.9, &c), 2.0);
        assert_abs_diff_eq!(GMaxSource::VMax.resolve(1.0, 0.9, &c), 10.0, epsilon = 1e-12);
    }
}
