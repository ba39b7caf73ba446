use serde::{Deserialize, Serialize};

use super::{
    experiment_alternative_deflator, test_doob_calibration, test_hitting_time_law, test_mean_minimum,
    test_optional_sampling_identity, test_short_position_identity, test_stopped_price_martingale,
    test_strict_loss_at_rho, test_supermartingale_at_rho, test_uniform_minimum, MartingaleCase, TestReport,
};
use crate::error::{Error, Result};
use crate::functional::{Event, Functional, LevelFunction};
use crate::market::{check_na1, solve_numeraire_strategy, MarketSpec, ViabilityReport};
use crate::simulate::{simulate_ensemble, Ensemble, SimConfig, Strategy, SummaryPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    UniformMinimum,
    MeanMinimum,
    Supermartingale,
    DoobCalibration,
    StoppedMartingale,
    OptionalSampling,
    ShortPosition,
    HittingTime,
    AlternativeDeflator,
}

impl TestKind {
    pub const ALL: [TestKind; 9] = [
        TestKind::UniformMinimum,
        TestKind::MeanMinimum,
        TestKind::Supermartingale,
        TestKind::DoobCalibration,
        TestKind::StoppedMartingale,
        TestKind::OptionalSampling,
        TestKind::ShortPosition,
        TestKind::HittingTime,
        TestKind::AlternativeDeflator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::UniformMinimum => "uniform_minimum",
            TestKind::MeanMinimum => "mean_minimum",
            TestKind::Supermartingale => "supermartingale",
            TestKind::DoobCalibration => "doob_calibration",
            TestKind::StoppedMartingale => "stopped_martingale",
            TestKind::OptionalSampling => "optional_sampling",
            TestKind::ShortPosition => "short_position",
            TestKind::HittingTime => "hitting_time",
            TestKind::AlternativeDeflator => "alternative_deflator",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub tests: Vec<TestKind>,
    /// Size `K` of the midpoint grid `u_k = (k - 1/2) / K`.
    pub u_grid: usize,
    pub bins: usize,
    pub min_bin_count: usize,
    pub calibration_tolerance: f64,
    pub calibration_time: f64,
    pub s: f64,
    pub t_values: Vec<f64>,
    pub level_functions: Vec<LevelFunction>,
    pub events: Vec<Event>,
    pub hitting_levels: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub strict_loss: Vec<Strategy>,
    pub deflator_nu: Option<Vec<f64>>,
    /// Simulate prices with the drift sign-flipped while keeping the
    /// numeraire of the original market. Every martingale check must then
    /// fail.
    pub flip_mu: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tests: TestKind::ALL.into_iter().filter(|k| *k != TestKind::AlternativeDeflator).collect(),
            u_grid: 64,
            bins: 20,
            min_bin_count: 100,
            calibration_tolerance: 0.01,
            calibration_time: 1.0,
            s: 0.5,
            t_values: vec![1.0, 2.0],
            level_functions: LevelFunction::ALL.to_vec(),
            events: vec![Event::Always, Event::PriceUp { asset: 0 }, Event::MinBelow { q: 0.9 }],
            hitting_levels: vec![0.25, 0.5, 0.75],
            strategies: vec![Strategy::Numeraire, Strategy::Riskless, Strategy::BuyAndHold { asset: 0 }],
            strict_loss: vec![Strategy::BuyAndHold { asset: 0 }],
            deflator_nu: None,
            flip_mu: false,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.u_grid == 0 {
            return Err(Error::InvalidConfig("u_grid must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidConfig("bins must be at least 1".into()));
        }
        if self.t_values.iter().any(|&t| t < self.s) || self.s < 0.0 {
            return Err(Error::InvalidConfig("battery needs 0 <= s <= t".into()));
        }
        if self.calibration_time < 0.0 {
            return Err(Error::NegativeTime(self.calibration_time));
        }
        for u in &self.hitting_levels {
            if !(0.0..1.0).contains(u) {
                return Err(Error::InvalidConfig(format!("hitting level {u} outside [0, 1)")));
            }
        }
        for e in &self.events {
            if let Event::PriceUp { asset } = e {
                if *asset >= d {
                    return Err(Error::InvalidConfig(format!("event asset {} out of range", asset + 1)));
                }
            }
        }
        for s in self.strategies.iter().chain(&self.strict_loss) {
            s.validate(d)?;
        }
        if self.tests.contains(&TestKind::AlternativeDeflator) && self.deflator_nu.is_none() {
            return Err(Error::InvalidConfig("alternative_deflator needs a deflator loading nu".into()));
        }
        Ok(())
    }

    /// `V = 1`, `exp(-t)` and `1{t > s} 1_B` for each battery event.
    pub fn functionals(&self) -> Vec<Functional> {
        let mut v = vec![Functional::One, Functional::ExpDecay { rate: 1.0 }];
        v.extend(self.events.iter().map(|e| Functional::AfterWithEvent { s: self.s, event: e.clone() }));
        v
    }

    pub fn plan(&self) -> SummaryPlan {
        let mut observation_times = vec![self.s, self.calibration_time];
        observation_times.extend(&self.t_values);
        let mut levels = stratified_levels(self.u_grid);
        levels.extend(&self.hitting_levels);
        SummaryPlan { observation_times, levels, functionals: self.functionals(), deflator: self.deflator_nu.clone() }
    }
}

/// Midpoint grid `(k - 1/2) / K`, `k = 1..K`.
pub fn stratified_levels(k: usize) -> Vec<f64> {
    (1..=k).map(|i| (i as f64 - 0.5) / k as f64).collect()
}

pub struct SuiteOutcome {
    pub viability: ViabilityReport,
    pub ensemble: Ensemble,
    pub reports: Vec<TestReport>,
}

impl SuiteOutcome {
    pub fn any_failed(&self) -> bool {
        self.reports.iter().any(|r| r.verdict == super::Verdict::Fail)
    }
}

/// Simulates one ensemble and runs the selected checks in a fixed order.
pub fn run_suite(spec: &MarketSpec, sim: &SimConfig, verify: &VerifyConfig) -> Result<SuiteOutcome> {
    sim.validate()?;
    verify.validate(spec.d())?;
    let viability = check_na1(spec);
    let strategy = solve_numeraire_strategy(spec)?;
    let price_spec = if verify.flip_mu { spec.with_mu(spec.mu().iter().map(|m| -m).collect())? } else { spec.clone() };
    let plan = verify.plan();
    let ensemble = simulate_ensemble(&price_spec, &strategy, sim, &plan)?;

    let grid: Vec<usize> = (0..verify.u_grid).collect();
    let mut reports = Vec::new();
    for kind in &verify.tests {
        match kind {
            TestKind::UniformMinimum => reports.push(test_uniform_minimum(&ensemble)),
            TestKind::MeanMinimum => reports.push(test_mean_minimum(&ensemble)),
            TestKind::Supermartingale => {
                reports.extend(test_supermartingale_at_rho(&ensemble, &verify.strategies));
                for s in &verify.strict_loss {
                    reports.push(test_strict_loss_at_rho(&ensemble, s));
                }
            }
            TestKind::DoobCalibration => reports.push(test_doob_calibration(
                &ensemble,
                verify.calibration_time,
                verify.bins,
                verify.min_bin_count,
                verify.calibration_tolerance,
            )),
            TestKind::StoppedMartingale => {
                for &t in &verify.t_values {
                    for &f in &verify.level_functions {
                        for event in &verify.events {
                            for asset in 0..spec.d() {
                                let case = MartingaleCase { s: verify.s, t, f, event: event.clone(), asset };
                                reports.extend(test_stopped_price_martingale(&ensemble, &case));
                            }
                        }
                    }
                }
            }
            TestKind::OptionalSampling => {
                for j in 0..plan.functionals.len() {
                    reports.push(test_optional_sampling_identity(&ensemble, j, &grid));
                }
            }
            TestKind::ShortPosition => reports.push(test_short_position_identity(&ensemble)),
            TestKind::HittingTime => {
                for j in 0..verify.hitting_levels.len() {
                    reports.extend(test_hitting_time_law(&ensemble, verify.u_grid + j));
                }
            }
            TestKind::AlternativeDeflator => {
                reports.extend(experiment_alternative_deflator(&ensemble, &verify.strategies))
            }
        }
    }
    Ok(SuiteOutcome { viability, ensemble, reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_grid() {
        assert_eq!(stratified_levels(4), vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in TestKind::ALL {
            assert_eq!(TestKind::from_name(k.name()), Some(k));
        }
        assert_eq!(TestKind::from_name("nope"), None);
    }

    #[test]
    fn plan_contains_battery_times_and_levels() {
        let v = VerifyConfig::default();
        let plan = v.plan();
        assert_eq!(plan.levels.len(), 64 + 3);
        assert_eq!(plan.levels[64], 0.25);
        assert!(plan.observation_times.contains(&2.0));
        assert_eq!(plan.functionals.len(), 5);
    }

    #[test]
    fn deflator_test_needs_nu() {
        let v = VerifyConfig { tests: vec![TestKind::AlternativeDeflator], ..VerifyConfig::default() };
        assert!(v.validate(1).is_err());
    }
}
