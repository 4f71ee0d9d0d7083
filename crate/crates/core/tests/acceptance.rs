//! End-to-end acceptance suite. Every criterion runs, prints one PASS/FAIL
//! line, and the test fails afterwards if any of them failed.

mod common;

use std::time::Instant;

use common::{random_dense_mdp, random_mdp_sample, random_policy, rng, wet_chicken_sample, Sampled};
use ndarray::{Array1, Array2};
use rand::Rng;
use spi_core::algorithms::verify::{
    bounded_by_baseline_on, constrained_cost, equals_baseline_on, lower_cost, max_constraint_violation,
    max_lower_violation, min_advantage,
};
use spi_core::algorithms::{bootstrapped_set, soft_spibb_pi_step, train, AlgorithmSpec, SoftVariant, TrainOptions};
use spi_core::benchmarks::{wet_chicken_baseline, wet_chicken_mdp, WetChickenConfig};
use spi_core::dataset::{counts, generate, mc_q_estimate, mle, CountTables, GenerationSpec, ReturnMode, ReturnOptions};
use spi_core::harness::{aggregate, bound_audit, run, soft_safety_bound, AggregateStats, ExperimentConfig};
use spi_core::mdp::{
    optimal_policy, performance, policy_evaluation, policy_evaluation_direct, visit_distribution, Initial, PeOptions,
    Policy,
};
use spi_core::uncertainty::{assumption1_min_kappa, star_counts, star_mdp, ErrorBound, ErrorKind, UncertaintyModel};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c1_wet_chicken_values() -> Outcome {
    let start = Initial::State(0);
    let cfg = WetChickenConfig::default();
    let mdp = wet_chicken_mdp(&cfg).unwrap();
    let (opt, _) = optimal_policy(&mdp, PeOptions::default()).unwrap();
    let greedy = |eps: f64| {
        let pi = wet_chicken_baseline(&WetChickenConfig { eps_greedy: eps, ..cfg }).unwrap();
        performance(&mdp, &pi, &start).unwrap()
    };
    let got = [
        ("optimal", performance(&mdp, &opt, &start).unwrap(), 43.1),
        ("uniform", performance(&mdp, &Policy::uniform(25, 5), &start).unwrap(), 20.7),
        ("0.1-greedy", greedy(0.1), 29.8),
        ("0.2-greedy", greedy(0.2), 29.5),
    ];
    let pass = got.iter().all(|(_, v, t)| (v - t).abs() <= 0.1);
    let detail = got.iter().map(|(n, v, t)| format!("{n} {v:.3} (target {t})")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Both steps of the Jensen chain on visit counts `k_i²`, in integers.
fn jensen_chain_holds(k: &[u128]) -> bool {
    let n = k.len() as u128;
    let l = k.iter().fold(1u128, |acc, &x| acc / gcd(acc, x) * x);
    let sum_k: u128 = k.iter().sum();
    let sum_inv: u128 = k.iter().map(|&x| l / x).sum();
    let sum_n: u128 = k.iter().map(|&x| x * x).sum();
    let harmonic = sum_k * sum_inv >= n * n * l;
    let power_mean = n * sum_n >= sum_k * sum_k;
    // the goal itself, squared: (Σ 1/k_i)² Σ N_i ≥ n³
    let goal = sum_inv * sum_inv * sum_n >= n * n * n * l * l;
    harmonic && power_mean && goal
}

fn c2_star_counterexample() -> Outcome {
    let delta = 0.05;
    let mut checked = 0;
    let mut worst_margin = f64::INFINITY;
    for n in 2..=10usize {
        let threshold = 1.0 / (n as f64).sqrt();
        let counts = star_counts(&vec![1; n]);
        for k in 1..=40 {
            let gamma = threshold + (1.0 - threshold) * k as f64 / 41.0;
            let mdp = star_mdp(n, gamma).unwrap();
            let pb = Policy::uniform(n + 1, 1);
            let kappa = assumption1_min_kappa(&mdp, &pb, &counts, delta).unwrap().kappa;
            // both sides evaluated directly from e_P
            let e = UncertaintyModel::new(ErrorKind::HoeffdingP, delta, 1.0, n + 1, 1).unwrap().e_p(&counts).unwrap();
            let lhs: f64 = (1..=n).map(|i| e[[i, 0]].value() / n as f64).sum();
            let rhs = e[[0, 0]].value() / gamma;
            worst_margin = worst_margin.min((lhs - rhs).min(kappa - 1.0 / gamma));
            checked += 1;
        }
    }
    let mut r = rng(200);
    let mut chain_ok = (2..=10).all(|n| jensen_chain_holds(&vec![1; n]));
    for _ in 0..5000 {
        let n = r.random_range(2..=10);
        let k: Vec<u128> = (0..n).map(|_| r.random_range(1..=30)).collect();
        chain_ok &= jensen_chain_holds(&k);
    }
    outcome(
        worst_margin > 0.0 && chain_ok,
        format!("{checked} (n, gamma) cases, min margin {worst_margin:.3e}; Jensen chain exact: {chain_ok}"),
    )
}

fn constraint_instance(sample: &Sampled, r: &mut impl Rng, worst: &mut f64, exact: &mut bool) {
    let (n_s, n_a) = sample.model.counts.n_sa.dim();
    let kind = if r.random::<bool>() { ErrorKind::HoeffdingQ } else { ErrorKind::MaurerPontilQ };
    let delta = r.random_range(0.01..1.0);
    let g_max = sample.mdp.v_max();
    let unc = UncertaintyModel::new(kind, delta, g_max, n_s, n_a).unwrap();
    let e = unc.errors(&sample.model.counts).unwrap();
    let opts = TrainOptions { r_min: Some(0.0), ..TrainOptions::default() };
    let pb = &sample.baseline;
    let eps = r.random_range(0.01..3.0);
    let plain = AlgorithmSpec::ApproxSoftSpibb { epsilon: eps, delta, err_kind: kind };
    let adv = AlgorithmSpec::AdvApproxSoftSpibb { epsilon: eps, delta, err_kind: kind };
    let lower = AlgorithmSpec::LowerApproxSoftSpibb { epsilon: eps, delta, err_kind: kind };
    let q_hat = mc_q_estimate(&sample.model.counts);
    let pi = train(&sample.model, pb, &plain, Some(&unc), &opts).unwrap().policy;
    *worst = worst.max(max_constraint_violation(&pi, pb, &e, eps));
    let pi = train(&sample.model, pb, &adv, Some(&unc), &opts).unwrap().policy;
    *worst = worst.max(max_constraint_violation(&pi, pb, &e, eps)).max(-min_advantage(&pi, pb, &q_hat));
    let pi = train(&sample.model, pb, &lower, Some(&unc), &opts).unwrap().policy;
    *worst = worst.max(max_lower_violation(&pi, pb, &e, eps));

    let n_wedge = r.random_range(0..25);
    let boot = bootstrapped_set(&sample.model.counts, n_wedge);
    let pib = train(&sample.model, pb, &AlgorithmSpec::PiBSpibb { n_wedge }, None, &opts).unwrap().policy;
    let leq = train(&sample.model, pb, &AlgorithmSpec::PiLeqBSpibb { n_wedge }, None, &opts).unwrap().policy;
    *exact &= equals_baseline_on(&pib, pb, &boot) && bounded_by_baseline_on(&leq, pb, &boot, 0.0);
}

fn c3_constraint_invariants() -> Outcome {
    let mut r = rng(300);
    let (mut worst, mut exact) = (f64::NEG_INFINITY, true);
    for i in 0..200 {
        let sample = random_mdp_sample(r.random_range(3..200), 3000 + i);
        constraint_instance(&sample, &mut r, &mut worst, &mut exact);
        let eps = r.random_range(0.05..0.6);
        let sample = wet_chicken_sample(r.random_range(200..20_000), 4000 + i, eps);
        constraint_instance(&sample, &mut r, &mut worst, &mut exact);
    }
    outcome(
        worst <= 1e-9 && exact,
        format!("400 instances, worst soft violation {worst:.2e}, bootstrapping exact: {exact}"),
    )
}

fn random_simplex(r: &mut impl Rng, n: usize) -> Array1<f64> {
    if r.random_range(0..4) == 0 {
        let mut v = Array1::zeros(n);
        v[r.random_range(0..n)] = 1.0;
        return v;
    }
    let w: Array1<f64> = (0..n).map(|_| -r.random::<f64>().max(1e-300).ln()).collect();
    let t = w.sum();
    w / t
}

fn c4_pi_step_optimality() -> Outcome {
    let mut r = rng(400);
    let mut worst_gap = f64::NEG_INFINITY;
    for state in 0..100 {
        let variant = if state % 2 == 0 { SoftVariant::Plain } else { SoftVariant::Lower };
        let q = Array2::from_shape_fn((1, 4), |_| r.random_range(-10.0..10.0));
        let pb = Policy::new(random_simplex(&mut r, 4).insert_axis(ndarray::Axis(0))).unwrap();
        let errors = Array2::from_shape_fn((1, 4), |_| ErrorBound::Finite(r.random_range(0.05..3.0)));
        let eps = r.random_range(0.01..2.0);
        let step = soft_spibb_pi_step(&q, &pb, &errors, eps, variant, None).unwrap();
        let value = |p: &Policy| (0..4).map(|a| p.prob(0, a) * q[[0, a]]).sum::<f64>();
        let greedy = value(&step.policy);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..100_000 {
            let target = Policy::new(random_simplex(&mut r, 4).insert_axis(ndarray::Axis(0))).unwrap();
            let cost = match variant {
                SoftVariant::Lower => lower_cost(&target, &pb, &errors, 0),
                _ => constrained_cost(&target, &pb, &errors, 0),
            };
            // both costs scale linearly along the segment from π_b
            let t = if cost > 0.0 { (eps / cost).min(1.0) } else { 1.0 };
            let v = (0..4).map(|a| (pb.prob(0, a) + t * (target.prob(0, a) - pb.prob(0, a))) * q[[0, a]]).sum();
            best = f64::max(best, v);
        }
        worst_gap = worst_gap.max(best - greedy);
    }
    outcome(worst_gap <= 1e-9, format!("100 states x 1e5 policies, max (random - greedy) {worst_gap:.3e}"))
}

fn c5_statistical_safety() -> Outcome {
    let (gamma, eps, delta) = (0.5, 0.1, 0.1);
    let mut r = rng(500);
    let mdp = random_dense_mdp(&mut r, 5, 3, gamma);
    let pb = random_policy(&mut r, 5, 3);
    let v_b = policy_evaluation_direct(&mdp, &pb).unwrap().v;
    let g_max = mdp.v_max();
    let unc = UncertaintyModel::new(ErrorKind::HoeffdingQ, delta, g_max, 5, 3).unwrap();
    let spec = AlgorithmSpec::AdvApproxSoftSpibb { epsilon: eps, delta, err_kind: ErrorKind::HoeffdingQ };
    let ret = ReturnOptions::new(gamma, mdp.r_max(), ReturnMode::FirstVisit);
    let opts = TrainOptions { r_min: Some(0.0), ..TrainOptions::default() };
    let runs = 1000;
    let (mut violations, mut worst) = (0, f64::INFINITY);
    for k in 0..runs {
        let spec_data = GenerationSpec { horizon: Some(20), ..GenerationSpec::episodes(40, 10_000 + k) };
        let data = generate(&mdp, &pb, &spec_data).unwrap();
        let model = mle(counts(&data, 5, 3, &ret).unwrap(), gamma, mdp.r_max()).unwrap();
        let pi = train(&model, &pb, &spec, Some(&unc), &opts).unwrap().policy;
        let v = policy_evaluation_direct(&mdp, &pi).unwrap().v;
        let slack = (0..5).map(|s| v[s] - soft_safety_bound(v_b[s], eps, g_max, gamma)).fold(f64::INFINITY, f64::min);
        worst = worst.min(slack);
        if slack < 0.0 {
            violations += 1;
        }
    }
    let rate = violations as f64 / runs as f64;
    let limit = delta + 3.0 * (delta * (1.0 - delta) / runs as f64).sqrt();
    outcome(rate <= limit, format!("violation rate {rate:.3} (limit {limit:.3}), min slack {worst:.4}"))
}

fn cell<'a>(stats: &'a [AggregateStats], algorithm: &str, params: &str, size: usize) -> &'a AggregateStats {
    stats
        .iter()
        .find(|s| s.algorithm == algorithm && s.params.contains(params) && s.data_size == size)
        .unwrap_or_else(|| panic!("no cell for {algorithm} {params} {size}"))
}

fn c6_bound_audit() -> Outcome {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
benchmark = "wet_chicken"
mode = "bound_audit"
n_trials = 100
data_sizes = [5000, 10000, 50000]
[[algorithms]]
algorithm = "adv_approx_soft_spibb"
epsilon = 0.01
delta = 0.01
err_kind = ["hoeffding_q", "maurer_pontil_q"]
"#,
    )
    .unwrap();
    let out = bound_audit(&cfg).unwrap();
    let stats = aggregate(&out.records);
    let targets = [("hoeffding_q", [29.6, 29.7, 30.1]), ("maurer_pontil_q", [29.6, 29.7, 30.3])];
    let mut pass = out.records.iter().all(|r| !r.failed);
    let mut parts = Vec::new();
    for (kind, values) in targets {
        for (size, target) in [5000, 10_000, 50_000].into_iter().zip(values) {
            let c = cell(&stats, "adv_approx_soft_spibb", kind, size);
            let cvar = c.cvar_1pct.unwrap();
            let held = 1.0 - c.bound_violation_rate.unwrap();
            pass &= (cvar - target).abs() <= 0.5 && held >= 0.99;
            parts.push(format!("{kind}@{size}: cvar {cvar:.2} (target {target}), bound held {:.0}%", 100.0 * held));
        }
    }
    let bound = out.records[0].bound.unwrap();
    outcome(pass, format!("bound {bound:.2}; {}", parts.join("; ")))
}

fn c7_ordering() -> Outcome {
    let setups = [
        ("random_mdps", "[10, 20]", 1.0, [10usize, 20]),
        ("wet_chicken", "[1000, 2000]", 0.5, [1000, 2000]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (bench, sizes, eps, size_list) in setups {
        let cfg = ExperimentConfig::from_toml_str(&format!(
            r#"
benchmark = "{bench}"
n_trials = 500
data_sizes = {sizes}
[[algorithms]]
algorithm = "basic_rl"
[[algorithms]]
algorithm = "lower_approx_soft_spibb"
epsilon = {eps}
delta = 1.0
"#
        ))
        .unwrap();
        let records = run(&cfg).unwrap();
        let stats = aggregate(&records);
        // the baseline is 0 in normalized units and fixed on Wet Chicken
        let baseline = if bench == "random_mdps" { 0.0 } else { records[0].baseline_performance.unwrap() };
        for size in size_list {
            let basic = cell(&stats, "basic_rl", "", size).cvar_1pct.unwrap();
            let lower = cell(&stats, "lower_approx_soft_spibb", "", size).cvar_1pct.unwrap();
            pass &= lower >= basic && basic < baseline;
            parts.push(format!("{bench}@{size}: basic {basic:.3}, lower {lower:.3}, baseline {baseline:.3}"));
        }
    }
    outcome(pass, parts.join("; "))
}

fn c8_crossover() -> Outcome {
    let (delta, n_s, n_a) = (0.05, 25, 5);
    let pairs = (n_s * n_a) as f64;
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, expect_bernstein_smaller) in [(10_000usize, true), (5, false)] {
        let mut c = CountTables::empty(n_s, n_a);
        c.n_sa[[0, 0]] = n;
        c.n_sas[[0, 0, 0]] = n;
        c.set_returns(0, 0, vec![1.5; n]);
        let base = UncertaintyModel::new(ErrorKind::HoeffdingQ, delta, 10.0, n_s, n_a).unwrap();
        let hq = base.e_q(&c).unwrap()[[0, 0]].value();
        let mp = base.e_q_mpeb(&c).unwrap()[[0, 0]].value();
        let nf = n as f64;
        let hq_ref = (2.0 / nf * (2.0 * pairs / delta).ln()).sqrt();
        let l = (4.0 * pairs / delta).ln();
        let mp_ref = 2.0 * (0.0 + 7.0 * l / (3.0 * (nf - 1.0)));
        let agree = (hq - hq_ref).abs() < 1e-12 && (mp - mp_ref).abs() < 1e-12 * mp_ref.max(1.0);
        pass &= agree && ((mp < hq) == expect_bernstein_smaller) && ((mp_ref < hq_ref) == expect_bernstein_smaller);
        parts.push(format!("N={n}: e_Q {hq:.5}, e_Q^B {mp:.5}"));
    }
    outcome(pass, parts.join("; "))
}

fn c9_oracles() -> Outcome {
    let mut r = rng(900);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n_s = r.random_range(2..=8);
        let n_a = r.random_range(2..=4);
        let gamma = r.random_range(0.0..0.97);
        let mdp = random_dense_mdp(&mut r, n_s, n_a, gamma);
        let pi1 = random_policy(&mut r, n_s, n_a);
        let pi2 = random_policy(&mut r, n_s, n_a);
        let it = policy_evaluation(&mdp, &pi1, PeOptions::default()).unwrap();
        let d1 = policy_evaluation_direct(&mdp, &pi1).unwrap();
        worst = it.q.iter().zip(d1.q.iter()).fold(worst, |m, (a, b)| m.max((a - b).abs()));

        let d2 = policy_evaluation_direct(&mdp, &pi2).unwrap();
        let d = visit_distribution(&mdp, &pi1, PeOptions::default()).unwrap().d;
        let adv = ((pi1.probs() - pi2.probs()) * &d2.q).sum_axis(ndarray::Axis(1));
        let rhs = d.dot(&adv);
        for s in 0..n_s {
            worst = worst.max((d1.v[s] - d2.v[s] - rhs[s]).abs());
        }

        let v = Array1::from_shape_fn(n_s, |_| r.random_range(-5.0..5.0));
        let a = Array2::from_shape_fn((n_s, n_s), |_| r.random_range(-5.0..5.0));
        let one_norm =
            |m: &Array2<f64>| m.columns().into_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let lhs = one_norm(&v.view().insert_axis(ndarray::Axis(0)).dot(&a));
        let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        worst = worst.max(lhs - sup * one_norm(&a));
    }
    outcome(worst < 1e-6, format!("100 MDPs, worst discrepancy {worst:.3e}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, Check); 9] = [
        ("wet chicken exact performances", c1_wet_chicken_values),
        ("star MDP counterexample", c2_star_counterexample),
        ("constraint invariants", c3_constraint_invariants),
        ("soft PI-step near-optimality", c4_pi_step_optimality),
        ("statistical safety", c5_statistical_safety),
        ("bound audit", c6_bound_audit),
        ("qualitative ordering", c7_ordering),
        ("error-function crossover", c8_crossover),
        ("oracle equivalences", c9_oracles),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict} {name} [{:.1}s] {}", i + 1, t.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
