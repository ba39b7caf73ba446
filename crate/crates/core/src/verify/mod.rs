//! Statistical checks with explicit tolerances, each producing a
//! [`TestReport`].
//!
//! Every check reads a streamed [`Ensemble`] and reduces over paths in index
//! order, so reports are bit-for-bit reproducible.

mod suite;

use serde::{Deserialize, Serialize};

pub use suite::{run_suite, stratified_levels, SuiteOutcome, TestKind, VerifyConfig};

use crate::enlarge::{build_conditioned_ensemble, summary_doob_sample, summary_records, DoobSample};
use crate::functional::{Event, Functional, LevelFunction};
use crate::simulate::{Ensemble, PathSummary, Strategy};
use crate::stats::{ks_uniform, Estimate};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.576;
/// Asymptotic 1% critical value of `sqrt(N) D_N`.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// The test's precondition fails for this market.
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    /// `None` for refusals.
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub n_paths: usize,
    pub truncated_fraction: f64,
    pub verdict: Verdict,
    pub details: String,
}

impl TestReport {
    /// Pass iff `statistic <= threshold`; NaN fails.
    pub fn judged(name: impl Into<String>, statistic: f64, threshold: f64, ens: &Ensemble, details: String) -> Self {
        let verdict = if statistic <= threshold { Verdict::Pass } else { Verdict::Fail };
        Self {
            name: name.into(),
            statistic: Some(statistic),
            threshold: Some(threshold),
            n_paths: ens.n_paths(),
            truncated_fraction: ens.truncated_fraction(),
            verdict,
            details,
        }
    }

    pub fn refused(name: impl Into<String>, ens: &Ensemble, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            statistic: None,
            threshold: None,
            n_paths: ens.n_paths(),
            truncated_fraction: ens.truncated_fraction(),
            verdict: Verdict::Refused,
            details: reason.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

const NOT_SUBOPTIMAL: &str =
    "growth rate is zero: the numeraire never diverges and its minimum time is not a.s. finite";

fn corrected_minima(ens: &Ensemble) -> Vec<f64> {
    ens.paths.iter().map(|p| p.minimum.as_ref().map_or(1.0, |m| m.i_inf_corrected)).collect()
}

/// KS distance of `I(inf)` from Uniform(0, 1), against `1.63 / sqrt(N)`.
pub fn test_uniform_minimum(ens: &Ensemble) -> TestReport {
    const NAME: &str = "uniform_minimum";
    if !ens.is_suboptimal() {
        return TestReport::refused(NAME, ens, NOT_SUBOPTIMAL);
    }
    let minima = corrected_minima(ens);
    let d = ks_uniform(&minima);
    let n = minima.len() as f64;
    let note = if ens.config.bridge_correction { "" } else { "; bridge correction off" };
    TestReport::judged(NAME, d, KS_CRITICAL_1PCT / n.sqrt(), ens, format!("KS distance of corrected I(inf){note}"))
}

/// `|mean I(inf) - 1/2|` against `3 / sqrt(12 N)`.
pub fn test_mean_minimum(ens: &Ensemble) -> TestReport {
    const NAME: &str = "mean_minimum";
    if !ens.is_suboptimal() {
        return TestReport::refused(NAME, ens, NOT_SUBOPTIMAL);
    }
    let e = Estimate::of(&corrected_minima(ens));
    let n = e.n as f64;
    TestReport::judged(
        NAME,
        (e.mean - 0.5).abs(),
        3.0 / (12.0 * n).sqrt(),
        ens,
        format!("mean {} (se {})", e.mean, e.se),
    )
}

fn wealth_at_rho(ens: &Ensemble, strategy: &Strategy) -> Vec<f64> {
    ens.paths.iter().map(|p| strategy.value(&ens.dynamics, p.rho.t, &p.rho.w)).collect()
}

/// `E[X(rho)] <= X(0) = 1` one-sided at 3 SE for each strategy, and for the
/// numeraire additionally `E[Xhat(rho)] = 1/2` two-sided.
pub fn test_supermartingale_at_rho(ens: &Ensemble, strategies: &[Strategy]) -> Vec<TestReport> {
    let mut out = Vec::new();
    for strategy in strategies {
        let name = format!("supermartingale_at_rho:{}", strategy.label());
        if !ens.is_suboptimal() {
            out.push(TestReport::refused(name, ens, NOT_SUBOPTIMAL));
            continue;
        }
        if let Err(e) = strategy.validate(ens.dynamics.d) {
            out.push(TestReport::judged(name, f64::NAN, 0.0, ens, e.to_string()));
            continue;
        }
        let e = Estimate::of(&wealth_at_rho(ens, strategy));
        out.push(TestReport::judged(
            name,
            e.mean - 1.0,
            3.0 * e.se,
            ens,
            format!("mean X(rho) {} (se {})", e.mean, e.se),
        ));
        if *strategy == Strategy::Numeraire {
            out.push(TestReport::judged(
                "numeraire_at_rho_half",
                (e.mean - 0.5).abs(),
                3.0 * e.se,
                ens,
                format!("mean Xhat(rho) {} (se {})", e.mean, e.se),
            ));
        }
    }
    out
}

/// Strict loss `E[X(rho)] < 1 - 3 SE`.
pub fn test_strict_loss_at_rho(ens: &Ensemble, strategy: &Strategy) -> TestReport {
    let name = format!("strict_loss_at_rho:{}", strategy.label());
    if !ens.is_suboptimal() {
        return TestReport::refused(name, ens, NOT_SUBOPTIMAL);
    }
    let e = Estimate::of(&wealth_at_rho(ens, strategy));
    TestReport::judged(name, e.mean - 1.0, -3.0 * e.se, ens, format!("mean X(rho) {} (se {})", e.mean, e.se))
}

/// A predictor bin after merging sparse neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predictor: f64,
    pub frequency: f64,
}

/// Equal-width bins on `[0, 1]` by predictor. Runs of bins with fewer than
/// `min_count` paths are merged upward; a sparse remainder joins the last
/// full bin.
pub fn doob_calibration_bins(samples: &[DoobSample], bins: usize, min_count: usize) -> Vec<CalibrationBin> {
    let bins = bins.max(1);
    let mut count = vec![0usize; bins];
    let mut sum_p = vec![0.0; bins];
    let mut sum_i = vec![0.0; bins];
    for s in samples {
        let b = ((s.predictor * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        sum_p[b] += s.predictor;
        sum_i[b] += if s.indicator { 1.0 } else { 0.0 };
    }
    let width = 1.0 / bins as f64;
    let mut groups: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
    let mut open: Option<(usize, usize, usize, f64, f64)> = None;
    for b in 0..bins {
        if count[b] == 0 && open.is_none() {
            continue;
        }
        let g = open.get_or_insert((b, b, 0, 0.0, 0.0));
        g.1 = b;
        g.2 += count[b];
        g.3 += sum_p[b];
        g.4 += sum_i[b];
        if g.2 >= min_count {
            groups.push(open.take().expect("group is open"));
        }
    }
    if let Some(rest) = open.filter(|g| g.2 > 0) {
        match groups.last_mut() {
            Some(last) => {
                last.1 = rest.1;
                last.2 += rest.2;
                last.3 += rest.3;
                last.4 += rest.4;
            }
            None => groups.push(rest),
        }
    }
    groups
        .into_iter()
        .map(|(lo, hi, n, sp, si)| CalibrationBin {
            lower: lo as f64 * width,
            upper: (hi + 1) as f64 * width,
            count: n,
            mean_predictor: sp / n as f64,
            frequency: si / n as f64,
        })
        .collect()
}

pub fn doob_samples(ens: &Ensemble, t: f64) -> crate::error::Result<Vec<DoobSample>> {
    ens.paths.iter().map(|p| summary_doob_sample(p, t)).collect()
}

/// Max over bins of `|frequency{rho > t} - mean I(t) Yhat(t)|`.
pub fn test_doob_calibration(ens: &Ensemble, t: f64, bins: usize, min_count: usize, tolerance: f64) -> TestReport {
    let name = format!("doob_calibration:t={t}");
    if !ens.is_suboptimal() {
        return TestReport::refused(name, ens, NOT_SUBOPTIMAL);
    }
    let samples = match doob_samples(ens, t) {
        Ok(s) => s,
        Err(e) => return TestReport::judged(name, f64::NAN, tolerance, ens, e.to_string()),
    };
    let groups = doob_calibration_bins(&samples, bins, min_count);
    let (worst, at) = groups
        .iter()
        .map(|g| (g.frequency - g.mean_predictor).abs())
        .enumerate()
        .fold((0.0, 0), |best, (i, d)| if d > best.0 { (d, i) } else { best });
    let details = match groups.get(at) {
        Some(g) => format!(
            "{} bins; worst [{}, {}): n {}, predictor {}, frequency {}",
            groups.len(),
            g.lower,
            g.upper,
            g.count,
            g.mean_predictor,
            g.frequency
        ),
        None => "no samples".into(),
    };
    TestReport::judged(name, worst, tolerance, ens, details)
}

/// One member of the stopped-price martingale battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCase {
    pub s: f64,
    pub t: f64,
    pub f: LevelFunction,
    pub event: Event,
    /// Zero-based asset.
    pub asset: usize,
}

impl MartingaleCase {
    fn label(&self) -> String {
        format!("s={}:t={}:f={}:B={}:asset={}", self.s, self.t, self.f.label(), self.event.label(), self.asset + 1)
    }
}

/// Stopped prices and the minimum level on one path. Without growth the
/// minimum time is taken as infinite, so stopping is the identity and the
/// check becomes plain martingality of `S`.
fn stopped(ens: &Ensemble, p: &PathSummary, asset: usize, time: f64) -> f64 {
    let dyn_ = &ens.dynamics;
    if ens.is_suboptimal() && p.rho.t < time {
        dyn_.price(asset, p.rho.t, &p.rho.w)
    } else {
        let o = p.observation(time).expect("battery times are observed");
        dyn_.price(asset, o.t, &o.w)
    }
}

/// Paired-difference checks of `E[S^rho(t) f(U(rho)) 1_B 1{rho > s}] =
/// E[S^rho(s) f(U(rho)) 1_B 1{rho > s}]` (restricted) and the same without
/// `1{rho > s}` (full), each against 3 SE.
pub fn test_stopped_price_martingale(ens: &Ensemble, case: &MartingaleCase) -> [TestReport; 2] {
    let suboptimal = ens.is_suboptimal();
    let n = ens.paths.len();
    let mut restricted = Vec::with_capacity(n);
    let mut full = Vec::with_capacity(n);
    for p in &ens.paths {
        let at_s = p.observation(case.s).expect("battery times are observed");
        let b = case.event.holds(&ens.dynamics, at_s);
        let u_rho = if suboptimal { 1.0 - p.rho.log_value.exp() } else { 0.0 };
        let weight = if b { case.f.apply(u_rho) } else { 0.0 };
        let diff = if weight == 0.0 {
            0.0
        } else {
            weight * (stopped(ens, p, case.asset, case.t) - stopped(ens, p, case.asset, case.s))
        };
        let after_s = !suboptimal || p.rho.t > case.s;
        restricted.push(if after_s { diff } else { 0.0 });
        full.push(diff);
    }
    let note = if suboptimal { "" } else { "; no growth: rho taken as infinite, plain martingale check" };
    let make = |form: &str, values: &[f64]| {
        let e = Estimate::of(values);
        TestReport::judged(
            format!("stopped_price_martingale:{form}:{}", case.label()),
            e.mean.abs(),
            3.0 * e.se,
            ens,
            format!("mean paired difference {} (se {}){note}", e.mean, e.se),
        )
    };
    [make("restricted", &restricted), make("full", &full)]
}

fn eval_on(ens: &Ensemble, functional: &Functional, p: &PathSummary, t: f64) -> f64 {
    functional.eval(t, &ens.dynamics, |s| p.observation(s))
}

/// Per-path values of the three estimators of `E[V(rho)]`: `V(rho)`, the
/// Stieltjes sum `int V Yhat dU`, and the stratified
/// `(1/K) sum_k V(eta_{u_k}) 1{eta_{u_k} < inf} / (1 - u_k)`.
pub fn optional_sampling_terms(ens: &Ensemble, functional_index: usize, grid_levels: &[usize]) -> [Vec<f64>; 3] {
    let functional = &ens.plan.functionals[functional_index];
    let k = grid_levels.len() as f64;
    let mut at_rho = Vec::with_capacity(ens.paths.len());
    let mut stieltjes = Vec::with_capacity(ens.paths.len());
    let mut stratified = Vec::with_capacity(ens.paths.len());
    for p in &ens.paths {
        at_rho.push(eval_on(ens, functional, p, p.rho.t));
        stieltjes.push(p.stieltjes[functional_index]);
        let z: f64 = grid_levels
            .iter()
            .map(|&j| {
                let c = &p.crossings[j];
                if c.hit {
                    eval_on(ens, functional, p, c.eta_u) / (1.0 - c.u)
                } else {
                    0.0
                }
            })
            .sum();
        stratified.push(z / k);
    }
    [at_rho, stieltjes, stratified]
}

/// Pairwise overlap of 99% intervals for the three estimators. The
/// statistic is the largest `|m_a - m_b| / (2.576 (se_a + se_b))`.
pub fn test_optional_sampling_identity(ens: &Ensemble, functional_index: usize, grid_levels: &[usize]) -> TestReport {
    let functional = &ens.plan.functionals[functional_index];
    let name = format!("optional_sampling:V={}", functional.label());
    if !ens.is_suboptimal() {
        return TestReport::refused(name, ens, NOT_SUBOPTIMAL);
    }
    let terms = optional_sampling_terms(ens, functional_index, grid_levels);
    let est: Vec<Estimate> = terms.iter().map(|t| Estimate::of(t)).collect();
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        for b in a + 1..3 {
            let gap = (est[a].mean - est[b].mean).abs();
            let width = Z_99 * (est[a].se + est[b].se);
            let r = if width > 0.0 {
                gap / width
            } else if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(r);
        }
    }
    TestReport::judged(
        name,
        worst,
        1.0,
        ens,
        format!(
            "V(rho) {} ({}); stieltjes {} ({}); stratified {} ({}) over K = {}",
            est[0].mean,
            est[0].se,
            est[1].mean,
            est[1].se,
            est[2].mean,
            est[2].se,
            grid_levels.len()
        ),
    )
}

/// Median of `|X(rho) Xhat(rho) exp(g rho) - 1|` for the relative short
/// position, against `1e-10`.
pub fn test_short_position_identity(ens: &Ensemble) -> TestReport {
    const NAME: &str = "short_position_identity";
    let d = &ens.dynamics;
    let g = d.growth_rate;
    let mut residuals: Vec<f64> = ens
        .paths
        .iter()
        .map(|p| {
            let x = d.log_short(p.rho.t, &p.rho.w).exp();
            let xhat = d.log_xhat(p.rho.t, &p.rho.w).exp();
            (x * xhat * (g * p.rho.t).exp() - 1.0).abs()
        })
        .collect();
    residuals.sort_by(f64::total_cmp);
    let median = residuals[residuals.len() / 2];
    let note = if g > 0.0 { "" } else { "; no growth: X = 1 and the identity is trivial" };
    TestReport::judged(NAME, median, 1e-10, ens, format!("max residual {}{note}", residuals[residuals.len() - 1]))
}

/// For the level with index `level_index`: `P[eta_u < inf] = 1 - u` at 3 SE,
/// `E_u[U(eta_u)] = u` within `2 |lambda| sqrt(dt)`, and agreement of the
/// weighted and conditional estimators of `E_u[exp(-eta_u)]` at 3 SE.
pub fn test_hitting_time_law(ens: &Ensemble, level_index: usize) -> Vec<TestReport> {
    let u = ens.plan.levels[level_index];
    let names =
        [format!("hitting_probability:u={u}"), format!("hitting_level:u={u}"), format!("hitting_estimators:u={u}")];
    if !ens.is_suboptimal() {
        return names.into_iter().map(|n| TestReport::refused(n, ens, NOT_SUBOPTIMAL)).collect();
    }
    let records = summary_records(&ens.paths, level_index);
    let n = records.len() as f64;
    let cond = match build_conditioned_ensemble(&records, u) {
        Ok(c) => c,
        Err(e) => {
            return names.into_iter().map(|name| TestReport::judged(name, f64::NAN, 0.0, ens, e.to_string())).collect()
        }
    };
    let p = cond.hit_fraction();
    let mut out = vec![TestReport::judged(
        names[0].clone(),
        (p - (1.0 - u)).abs(),
        3.0 * (u * (1.0 - u) / n).sqrt(),
        ens,
        format!("hit fraction {p} of {n}"),
    )];

    let levels: Vec<f64> = records.iter().map(|r| r.u_at_eta).collect();
    let e = cond.conditional_mean(&levels);
    let tol = 2.0 * ens.dynamics.growth_rate.sqrt() * ens.config.dt.sqrt();
    out.push(TestReport::judged(
        names[1].clone(),
        (e.mean - u).abs(),
        tol,
        ens,
        format!("E_u[U(eta_u)] {} (se {})", e.mean, e.se),
    ));

    let f: Vec<f64> = records.iter().map(|r| (-r.eta_u).exp()).collect();
    let w = cond.weighted_mean(&f);
    let c = cond.conditional_mean(&f);
    out.push(TestReport::judged(
        names[2].clone(),
        (w.mean - c.mean).abs(),
        3.0 * (w.se * w.se + c.se * c.se).sqrt(),
        ens,
        format!("weighted {} ({}), conditional {} ({}) for exp(-eta_u)", w.mean, w.se, c.mean, c.se),
    ));
    out
}

/// Argmax `phi` of an alternative deflator: `E[X(phi)] <= 1` at 3 SE for each
/// strategy, and `|phi - rho| > dt` on more than half of the paths.
pub fn experiment_alternative_deflator(ens: &Ensemble, strategies: &[Strategy]) -> Vec<TestReport> {
    let mut out = Vec::new();
    let distinct_name = "deflator_argmax_distinct";
    if !ens.is_suboptimal() || !ens.dynamics.has_deflator() {
        let reason = if ens.dynamics.has_deflator() { NOT_SUBOPTIMAL } else { "no alternative deflator configured" };
        for s in strategies {
            out.push(TestReport::refused(format!("supermartingale_at_phi:{}", s.label()), ens, reason));
        }
        out.push(TestReport::refused(distinct_name, ens, reason));
        return out;
    }
    let phis: Vec<_> = ens.paths.iter().map(|p| p.phi.as_ref().expect("deflator tracked")).collect();
    for strategy in strategies {
        let values: Vec<f64> = phis.iter().map(|phi| strategy.value(&ens.dynamics, phi.t, &phi.w)).collect();
        let e = Estimate::of(&values);
        out.push(TestReport::judged(
            format!("supermartingale_at_phi:{}", strategy.label()),
            e.mean - 1.0,
            3.0 * e.se,
            ens,
            format!("mean X(phi) {} (se {})", e.mean, e.se),
        ));
    }
    let dt = ens.config.dt;
    let distinct = ens.paths.iter().zip(&phis).filter(|(p, phi)| (phi.t - p.rho.t).abs() > dt).count();
    let frac = distinct as f64 / ens.paths.len() as f64;
    out.push(TestReport::judged(
        distinct_name,
        1.0 - frac,
        0.5,
        ens,
        format!("|phi - rho| > dt on a fraction {frac} of paths"),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(p: f64, hit: bool) -> DoobSample {
        DoobSample { indicator: hit, predictor: p }
    }

    #[test]
    fn calibration_single_bin_at_one() {
        let s: Vec<DoobSample> = (0..500).map(|i| sample(1.0, i != 0)).collect();
        let g = doob_calibration_bins(&s, 20, 100);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].count, 500);
        assert_eq!(g[0].mean_predictor, 1.0);
        assert!((g[0].frequency - 0.998).abs() < 1e-12);
    }

    #[test]
    fn sparse_bins_merge() {
        // 50 in [0, .05), 60 in [.05, .1), 300 in [.5, .55), 10 in [.95, 1]
        let mut s = Vec::new();
        s.extend((0..50).map(|_| sample(0.01, false)));
        s.extend((0..60).map(|_| sample(0.07, true)));
        s.extend((0..300).map(|_| sample(0.52, true)));
        s.extend((0..10).map(|_| sample(0.99, true)));
        let g = doob_calibration_bins(&s, 20, 100);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].count, 110);
        assert_eq!((g[0].lower, g[0].upper), (0.0, 0.1));
        assert_eq!(g[1].count, 310);
        assert_eq!(g[1].upper, 1.0);
        assert!(g.iter().all(|b| b.count >= 100));
        assert_eq!(g.iter().map(|b| b.count).sum::<usize>(), s.len());
    }

    #[test]
    fn all_sparse_keeps_one_group() {
        let s: Vec<DoobSample> = (0..30).map(|i| sample(i as f64 / 30.0, i % 2 == 0)).collect();
        let g = doob_calibration_bins(&s, 20, 100);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].count, 30);
    }
}
