//! Hitting times `eta_u`, the conditioned laws `P_u`, the process
//! `U = 1 - I` and Doob-identity samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{MinimumRecord, PathBundle, PathSummary};
use crate::stats::Estimate;

/// First time `eta_u` at which `Yhat` reaches `1 / (1 - u)`, i.e. `I` reaches
/// `1 - u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeRecord {
    pub u: f64,
    /// `+inf` when the level is not reached.
    pub eta_u: f64,
    pub hit: bool,
    /// `U` at the end of the crossing step, or at the horizon if not hit.
    pub u_at_eta: f64,
}

impl HittingTimeRecord {
    pub fn not_hit(u: f64, u_final: f64) -> Self {
        Self { u, eta_u: f64::INFINITY, hit: false, u_at_eta: u_final }
    }
}

/// Crossing time of `log Xhat` down through `level` in the step ending at
/// grid index `k`, interpolating linearly in log space from the left value
/// `x0` to the step minimum `step_min`.
pub(crate) fn crossing_time(k: u64, dt: f64, x0: f64, step_min: f64, level: f64) -> f64 {
    let span = x0 - step_min;
    let frac = if span > 0.0 { ((x0 - level) / span).clamp(0.0, 1.0) } else { 1.0 };
    (k as f64 - 1.0 + frac) * dt
}

/// `eta_u` on a stored path, using the bridge-corrected running minimum.
///
/// A path that never crosses is reported as not hit. Past the horizon the
/// crossing probability is `(1 - u) Yhat(T) <= I(T) Yhat(T)`, the tail mass.
pub fn compute_eta_u(path: &PathBundle, u: f64) -> Result<HittingTimeRecord> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidConfig(format!("level u = {u} outside [0, 1)")));
    }
    if u == 0.0 {
        return Ok(HittingTimeRecord { u, eta_u: 0.0, hit: true, u_at_eta: 0.0 });
    }
    let level = 1.0 - u;
    match path.run_min_corrected.iter().position(|&i| i <= level) {
        Some(k) => {
            let eta =
                crossing_time(k as u64, path.dt, path.xhat[k - 1].ln(), path.run_min_corrected[k].ln(), level.ln());
            Ok(HittingTimeRecord { u, eta_u: eta, hit: true, u_at_eta: 1.0 - path.run_min_corrected[k] })
        }
        None => Ok(HittingTimeRecord::not_hit(u, 1.0 - path.run_min_corrected[path.len() - 1])),
    }
}

/// `P_u = P[. | eta_u < inf]` represented by its member paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedEnsemble {
    pub u: f64,
    /// Indices (into the record slice) of paths with `eta_u < inf`.
    pub members: Vec<usize>,
    /// `dP_u / dP = 1 / (1 - u)` on members.
    pub weight: f64,
    pub n_paths: usize,
}

impl ConditionedEnsemble {
    pub fn hit_fraction(&self) -> f64 {
        self.members.len() as f64 / self.n_paths as f64
    }

    /// `E[f 1{hit}] / (1 - u)` over all paths; `values[i]` is ignored unless
    /// path `i` is a member.
    pub fn weighted_mean(&self, values: &[f64]) -> Estimate {
        let mut terms = vec![0.0; self.n_paths];
        for &i in &self.members {
            terms[i] = values[i];
        }
        Estimate::of(&terms).scaled(1.0 - self.u)
    }

    /// Plain mean of `f` over the members.
    pub fn conditional_mean(&self, values: &[f64]) -> Estimate {
        let terms: Vec<f64> = self.members.iter().map(|&i| values[i]).collect();
        Estimate::of(&terms)
    }
}

/// Members are the hit paths among `records`, all for the same level `u`.
pub fn build_conditioned_ensemble(records: &[HittingTimeRecord], u: f64) -> Result<ConditionedEnsemble> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidConfig(format!("level u = {u} outside [0, 1)")));
    }
    if let Some(r) = records.iter().find(|r| r.u != u) {
        return Err(Error::InvalidConfig(format!("record for level {} in ensemble for level {u}", r.u)));
    }
    let members: Vec<usize> = records.iter().enumerate().filter(|(_, r)| r.hit).map(|(i, _)| i).collect();
    if members.is_empty() {
        return Err(Error::DegenerateEnsemble { u, n_paths: records.len() });
    }
    Ok(ConditionedEnsemble { u, members, weight: 1.0 / (1.0 - u), n_paths: records.len() })
}

/// Records for level `u` taken from streamed summaries.
pub fn summary_records(paths: &[PathSummary], level_index: usize) -> Vec<HittingTimeRecord> {
    paths.iter().map(|p| p.crossings[level_index]).collect()
}

/// Outcome `1{rho > t}` with its Doob predictor `I(t) Yhat(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoobSample {
    pub indicator: bool,
    pub predictor: f64,
}

/// Doob sample at grid time `t` on a stored path. Beyond the horizon the
/// predictor is that of the horizon, an upper bound in conditional mean
/// since `I Yhat` is a supermartingale.
pub fn doob_identity_sample(path: &PathBundle, record: &MinimumRecord, t: f64) -> Result<DoobSample> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    let k = (t / path.dt).round();
    if (k * path.dt - t).abs() > 1e-9 * path.dt.max(t) {
        return Err(Error::OffGrid(t));
    }
    let k = (k as usize).min(path.len() - 1);
    Ok(DoobSample { indicator: record.rho > t, predictor: path.run_min_corrected[k] * path.yhat[k] })
}

/// Doob sample at an observed time of a streamed summary.
pub fn summary_doob_sample(path: &PathSummary, t: f64) -> Result<DoobSample> {
    let obs = path.observation(t).ok_or(Error::OffGrid(t))?;
    Ok(DoobSample { indicator: path.rho.t > t, predictor: obs.doob_predictor() })
}

/// `U = 1 - I` on the grid, with the bridge-corrected `I`.
pub fn u_process(path: &PathBundle) -> Vec<f64> {
    path.run_min_corrected.iter().map(|i| 1.0 - i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{solve_numeraire_strategy, MarketSpec};
    use crate::simulate::{simulate_path, summarize_path, Dynamics, SimConfig, SummaryPlan};

    fn market() -> (MarketSpec, crate::market::NumeraireStrategy) {
        let spec = MarketSpec::black_scholes(0.1, 0.2, 1.0).unwrap();
        let st = solve_numeraire_strategy(&spec).unwrap();
        (spec, st)
    }

    #[test]
    fn crossing_interpolation() {
        assert!((crossing_time(10, 0.1, 0.0, -0.2, -0.1) - 0.95).abs() < 1e-12);
        assert_eq!(crossing_time(10, 0.1, 0.0, -0.2, 0.0), 0.9);
        assert!((crossing_time(10, 0.1, 0.0, -0.2, -0.2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_zero_is_hit_at_origin() {
        let (spec, st) = market();
        let cfg = SimConfig { dt: 1.0 / 64.0, n_paths: 1, ..SimConfig::default() };
        let p = simulate_path(&spec, &st, &cfg, 0).unwrap();
        let r = compute_eta_u(&p, 0.0).unwrap();
        assert_eq!((r.eta_u, r.hit), (0.0, true));
        assert!(compute_eta_u(&p, 1.0).is_err());
    }

    #[test]
    fn increasing_numeraire_never_hits() {
        let (spec, st) = market();
        let cfg = SimConfig { dt: 1.0 / 64.0, n_paths: 1, bridge_correction: false, ..SimConfig::default() };
        let mut p = simulate_path(&spec, &st, &cfg, 0).unwrap();
        for k in 0..p.len() {
            p.xhat[k] = 1.0 + k as f64;
            p.run_min_corrected[k] = 1.0;
        }
        for u in [0.1, 0.5, 0.9] {
            assert!(!compute_eta_u(&p, u).unwrap().hit);
        }
    }

    #[test]
    fn eta_monotone_and_hit_iff_minimum_low_enough() {
        let (spec, st) = market();
        let cfg = SimConfig { dt: 1.0 / 128.0, n_paths: 40, seed: 8, ..SimConfig::default() };
        for i in 0..40 {
            let p = simulate_path(&spec, &st, &cfg, i).unwrap();
            let mut last = 0.0;
            for u in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9] {
                let r = compute_eta_u(&p, u).unwrap();
                assert!(r.eta_u >= last);
                last = r.eta_u;
                assert_eq!(r.hit, p.minimum.i_inf_corrected <= 1.0 - u);
                if r.hit && u > 0.0 {
                    assert!(r.u_at_eta >= u);
                    assert!(r.eta_u <= p.minimum.rho + cfg.dt);
                }
            }
        }
    }

    #[test]
    fn stored_and_streamed_hitting_times_agree() {
        let (spec, st) = market();
        let cfg = SimConfig { dt: 1.0 / 128.0, n_paths: 20, seed: 4, ..SimConfig::default() };
        let plan = SummaryPlan { levels: vec![0.25, 0.5, 0.75], ..SummaryPlan::default() };
        let dynamics = Dynamics::new(&spec, &st);
        for i in 0..20 {
            let p = simulate_path(&spec, &st, &cfg, i).unwrap();
            let s = summarize_path(&dynamics, &cfg, &plan, i).unwrap();
            for (j, &u) in plan.levels.iter().enumerate() {
                let a = compute_eta_u(&p, u).unwrap();
                let b = s.crossings[j];
                assert_eq!(a.hit, b.hit);
                if a.hit {
                    assert!((a.eta_u - b.eta_u).abs() < 1e-12);
                    assert!((a.u_at_eta - b.u_at_eta).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conditioned_ensemble_normalization() {
        let recs: Vec<HittingTimeRecord> = (0..10)
            .map(|i| {
                if i % 2 == 0 {
                    HittingTimeRecord { u: 0.5, eta_u: 1.0, hit: true, u_at_eta: 0.5 }
                } else {
                    HittingTimeRecord::not_hit(0.5, 0.2)
                }
            })
            .collect();
        let e = build_conditioned_ensemble(&recs, 0.5).unwrap();
        assert_eq!(e.members, vec![0, 2, 4, 6, 8]);
        let ones = vec![1.0; 10];
        assert_eq!(e.conditional_mean(&ones).mean, 1.0);
        // half the paths hit, weight 2
        assert!((e.weighted_mean(&ones).mean - 1.0).abs() < 1e-15);

        let none = vec![HittingTimeRecord::not_hit(0.9, 0.1); 5];
        assert!(matches!(build_conditioned_ensemble(&none, 0.9), Err(Error::DegenerateEnsemble { .. })));
    }

    #[test]
    fn level_zero_ensemble_is_everything() {
        let recs = vec![HittingTimeRecord { u: 0.0, eta_u: 0.0, hit: true, u_at_eta: 0.0 }; 7];
        let e = build_conditioned_ensemble(&recs, 0.0).unwrap();
        assert_eq!(e.members.len(), 7);
        assert_eq!(e.weight, 1.0);
    }

    #[test]
    fn doob_samples() {
        let (spec, st) = market();
        let cfg = SimConfig { dt: 1.0 / 64.0, n_paths: 10, seed: 2, ..SimConfig::default() };
        for i in 0..10 {
            let p = simulate_path(&spec, &st, &cfg, i).unwrap();
            let s0 = doob_identity_sample(&p, &p.minimum, 0.0).unwrap();
            assert_eq!(s0.predictor, 1.0);
            assert_eq!(s0.indicator, p.minimum.rho > 0.0);
            let beyond = doob_identity_sample(&p, &p.minimum, p.horizon() + 1.0).unwrap();
            assert!(beyond.predictor <= cfg.tail_eps || p.minimum.truncated);
            assert!(!beyond.indicator);
            assert!(doob_identity_sample(&p, &p.minimum, 0.001).is_err());
        }
    }

    #[test]
    fn u_process_properties() {
        let (spec, st) = market();
        let cfg = SimConfig { dt: 1.0 / 64.0, n_paths: 5, seed: 2, ..SimConfig::default() };
        for i in 0..5 {
            let p = simulate_path(&spec, &st, &cfg, i).unwrap();
            let u = u_process(&p);
            assert!(u.windows(2).all(|w| w[0] <= w[1]));
            let last = *u.last().unwrap();
            assert_eq!(last, 1.0 - p.minimum.i_inf_corrected);
            // U is already at its final value from the step holding rho on
            let k = ((p.minimum.rho / cfg.dt).ceil()) as usize;
            assert_eq!(u[k], last);
        }

        let flat = MarketSpec::black_scholes(0.0, 0.2, 1.0).unwrap();
        let st0 = solve_numeraire_strategy(&flat).unwrap();
        let p = simulate_path(&flat, &st0, &cfg, 0).unwrap();
        assert!(u_process(&p).iter().all(|&v| v == 0.0));
    }
}
