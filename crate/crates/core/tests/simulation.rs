use std::collections::BTreeMap;

use numeraire_core::simulate::{detect_minimum, Dynamics, MinimumRecord};
use numeraire_core::stats::{ks_uniform, Estimate};
use numeraire_core::{simulate_ensemble, solve_numeraire_strategy, MarketSpec, PathBundle, SimConfig, SummaryPlan};

fn default_market() -> MarketSpec {
    MarketSpec::black_scholes(0.1, 0.2, 1.0).unwrap()
}

fn hand_path(xhat: Vec<f64>, dt: f64) -> PathBundle {
    let mut run_min = Vec::with_capacity(xhat.len());
    let mut m = f64::INFINITY;
    for &x in &xhat {
        m = m.min(x);
        run_min.push(m);
    }
    let n = xhat.len();
    PathBundle {
        index: 0,
        dt,
        lambda: vec![0.5],
        growth_rate: 0.25,
        times: (0..n).map(|k| k as f64 * dt).collect(),
        w: vec![vec![0.0]; n],
        s: vec![vec![1.0]; n],
        yhat: xhat.iter().map(|x| 1.0 / x).collect(),
        run_min_corrected: run_min.clone(),
        run_min,
        xhat,
        extra_wealth: BTreeMap::new(),
        minimum: MinimumRecord {
            rho: 0.0,
            i_inf_raw: 1.0,
            i_inf_corrected: 1.0,
            tail_mass: 1.0,
            truncated: false,
            horizon: 0.0,
        },
    }
}

#[test]
fn unit_step_without_noise() {
    let spec = default_market();
    let dynamics = Dynamics::new(&spec, &solve_numeraire_strategy(&spec).unwrap());
    assert!((dynamics.log_xhat(1.0, &[0.0]).exp() - 0.125f64.exp()).abs() < 1e-15);
}

#[test]
fn increasing_path_has_minimum_at_origin() {
    let path = hand_path((0..50).map(|k| 1.0 + 0.01 * k as f64).collect(), 0.1);
    let cfg = SimConfig { bridge_correction: false, ..SimConfig::default() };
    let rec = detect_minimum(&path, &cfg);
    assert_eq!((rec.rho, rec.i_inf_raw), (0.0, 1.0));
}

#[test]
fn tail_mass_is_minimum_over_final_value() {
    let path = hand_path(vec![1.0, 0.3, 2.0, 100.0], 1.0);
    let rec = detect_minimum(&path, &SimConfig { bridge_correction: false, ..SimConfig::default() });
    assert!((rec.tail_mass - 0.003).abs() < 1e-15);
    assert!(rec.truncated);
    assert_eq!(rec.rho, 1.0);
}

/// Coarse grid, many paths: the grid minimum is visibly biased upward while
/// the bridge-corrected minimum is uniform.
#[test]
fn bridge_correction_removes_discretization_bias() {
    let spec = default_market();
    let strategy = solve_numeraire_strategy(&spec).unwrap();
    let n = 100_000;
    let sim = SimConfig { dt: 1.0 / 64.0, n_paths: n, seed: 3, ..SimConfig::default() };
    let ens = simulate_ensemble(&spec, &strategy, &sim, &SummaryPlan::default()).unwrap();
    let corrected: Vec<f64> = ens.paths.iter().map(|p| p.minimum.as_ref().unwrap().i_inf_corrected).collect();
    let raw: Vec<f64> = ens.paths.iter().map(|p| p.minimum.as_ref().unwrap().i_inf_raw).collect();
    let critical = 1.63 / (n as f64).sqrt();
    let (kc, kr) = (ks_uniform(&corrected), ks_uniform(&raw));
    assert!(kc < critical, "corrected KS {kc} vs {critical}");
    assert!(kr > 3.0 * critical, "raw KS {kr} should show the grid bias");
    assert!(Estimate::of(&raw).mean > 0.5 + 3.0 * Estimate::of(&raw).se);
    assert!(ens.truncated_fraction() < 1e-3);
}

#[test]
fn deflator_has_unit_expectation() {
    let spec = default_market();
    let strategy = solve_numeraire_strategy(&spec).unwrap();
    let sim = SimConfig { dt: 1.0 / 256.0, n_paths: 20_000, seed: 9, ..SimConfig::default() };
    let plan = SummaryPlan { observation_times: vec![0.5, 2.0], ..SummaryPlan::default() };
    let ens = simulate_ensemble(&spec, &strategy, &sim, &plan).unwrap();
    for t in [0.5, 2.0] {
        let y: Vec<f64> = ens.paths.iter().map(|p| (-p.observation(t).unwrap().log_xhat).exp()).collect();
        let e = Estimate::of(&y);
        assert!((e.mean - 1.0).abs() < 3.0 * e.se, "E[Yhat({t})] = {} (se {})", e.mean, e.se);
    }
}

#[test]
fn truncation_is_rare_at_default_tolerance() {
    let spec = default_market();
    let strategy = solve_numeraire_strategy(&spec).unwrap();
    assert!((strategy.growth_rate - 0.25).abs() < 1e-12);
    let sim = SimConfig { dt: 1.0 / 64.0, n_paths: 20_000, seed: 17, max_extensions: 20, ..SimConfig::default() };
    let ens = simulate_ensemble(&spec, &strategy, &sim, &SummaryPlan::default()).unwrap();
    assert!(ens.truncated_fraction() < 1e-3);
    assert!(ens.paths.iter().all(|p| {
        let m = p.minimum.as_ref().unwrap();
        m.truncated || m.tail_mass <= sim.tail_eps
    }));
}
