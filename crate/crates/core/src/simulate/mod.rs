//! Path generation for prices, the numeraire portfolio, its deflator and
//! wealth processes, with bridge-corrected extrema and adaptive horizons.

mod bridge;
mod path;
mod summary;
mod walker;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bridge::{bridge_maximum, bridge_minimum, MaximumTracker, MinimumTracker};
pub use path::{
    bridge_corrected_minimum, detect_minimum, relative_short_wealth, simulate_path, wealth_process, BridgeMinimum,
    Holding, PathBundle, ShortPosition, WealthSeries,
};
pub use summary::{simulate_ensemble, summarize_path, Ensemble, Observation, PathSummary, SummaryPlan};
pub use walker::{Dynamics, ExtremumPoint, StepEvent, Walker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_init: f64,
    pub tail_eps: f64,
    pub max_extensions: u32,
    pub n_paths: u64,
    pub seed: u64,
    pub bridge_correction: bool,
    /// Paths per deterministic accumulation chunk.
    pub chunk_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 1024.0,
            t_init: 1.0,
            tail_eps: 1e-4,
            max_extensions: 20,
            n_paths: 100_000,
            seed: 0,
            bridge_correction: true,
            chunk_size: 1024,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_init > 0.0 && self.t_init.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_init = {} must be positive", self.t_init)));
        }
        if !(self.tail_eps > 0.0 && self.tail_eps < 1.0) {
            return Err(Error::InvalidConfig(format!("tail_eps = {} must lie in (0, 1)", self.tail_eps)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidConfig("chunk_size must be at least 1".into()));
        }
        if self.max_extensions > 40 {
            return Err(Error::InvalidConfig(format!(
                "max_extensions = {} would overflow the grid",
                self.max_extensions
            )));
        }
        Ok(())
    }

    /// Grid index of `t`, if `t` is a grid point.
    pub fn grid_index(&self, t: f64) -> Result<u64> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::OffGrid(t));
        }
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return Err(Error::OffGrid(t));
        }
        Ok(k as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonDecision {
    Stop,
    Extend,
    Truncate,
}

/// Doubles the horizon until the tail mass `I(T) Yhat(T)`, which by Doob's
/// maximal identity equals `P[rho > T | F(T)]`, is at most the threshold.
#[derive(Debug, Clone)]
pub struct HorizonPolicy {
    threshold: f64,
    max_extensions: u32,
    extensions: u32,
    extends: bool,
}

impl HorizonPolicy {
    /// A fixed horizon is used when the growth rate is zero, since the
    /// minimum time is then not almost surely finite.
    pub fn new(config: &SimConfig, growth_rate: f64) -> Self {
        Self {
            threshold: config.tail_eps,
            max_extensions: config.max_extensions,
            extensions: 0,
            extends: growth_rate > 0.0,
        }
    }

    pub fn with_threshold(threshold: f64, max_extensions: u32) -> Self {
        Self { threshold, max_extensions, extensions: 0, extends: true }
    }

    pub fn initial_steps(&self, config: &SimConfig, min_horizon: f64) -> u64 {
        let t = config.t_init.max(min_horizon);
        ((t / config.dt) - 1e-9).ceil().max(1.0) as u64
    }

    pub fn extends(&self) -> bool {
        self.extends
    }

    pub fn extensions(&self) -> u32 {
        self.extensions
    }

    pub fn decide(&mut self, tail_mass: f64) -> HorizonDecision {
        if !self.extends || tail_mass <= self.threshold {
            HorizonDecision::Stop
        } else if self.extensions < self.max_extensions {
            self.extensions += 1;
            HorizonDecision::Extend
        } else {
            HorizonDecision::Truncate
        }
    }
}

/// Horizon policy for a market, refusing when the growth rate is zero.
pub fn adaptive_horizon(config: &SimConfig, growth_rate: f64) -> Result<HorizonPolicy> {
    config.validate()?;
    if growth_rate <= 0.0 {
        return Err(Error::NotSuboptimal(growth_rate));
    }
    Ok(HorizonPolicy::new(config, growth_rate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumRecord {
    /// Earliest time of the overall minimum of `Xhat`.
    pub rho: f64,
    /// Grid minimum of `Xhat`.
    pub i_inf_raw: f64,
    pub i_inf_corrected: f64,
    /// `I(T) Yhat(T)` at the final horizon.
    pub tail_mass: f64,
    pub truncated: bool,
    pub horizon: f64,
}

/// Wealth strategies with unit initial capital, valued in closed form from
/// the drivers. All of them stay nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    Numeraire,
    Riskless,
    /// `1 / S^i(0)` shares of asset `i` (zero-based).
    BuyAndHold {
        asset: usize,
    },
    ConstantMix {
        fractions: Vec<f64>,
    },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Numeraire => "numeraire".into(),
            Strategy::Riskless => "riskless".into(),
            Strategy::BuyAndHold { asset } => format!("buy_and_hold:{}", asset + 1),
            Strategy::ConstantMix { fractions } => {
                let parts: Vec<String> = fractions.iter().map(|f| f.to_string()).collect();
                format!("mix:{}", parts.join(":"))
            }
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Strategy::BuyAndHold { asset } if *asset >= d => {
                Err(Error::InvalidMarket(format!("buy_and_hold asset {} out of range", asset + 1)))
            }
            Strategy::ConstantMix { fractions } if fractions.len() != d => {
                Err(Error::InvalidMarket(format!("mix has {} fractions, expected {d}", fractions.len())))
            }
            _ => Ok(()),
        }
    }

    pub fn log_value(&self, dynamics: &Dynamics, t: f64, w: &[f64]) -> f64 {
        match self {
            Strategy::Numeraire => dynamics.log_xhat(t, w),
            Strategy::Riskless => 0.0,
            Strategy::BuyAndHold { asset } => dynamics.log_return(*asset, t, w),
            Strategy::ConstantMix { fractions } => dynamics.log_constant_mix(fractions, t, w),
        }
    }

    pub fn value(&self, dynamics: &Dynamics, t: f64, w: &[f64]) -> f64 {
        self.log_value(dynamics, t, w).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig { tail_eps: 1.5, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { dt: 0.0, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { chunk_size: 0, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { n_paths: 0, ..SimConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_index_checks() {
        let c = SimConfig::default();
        assert_eq!(c.grid_index(0.5).unwrap(), 512);
        assert_eq!(c.grid_index(2.0).unwrap(), 2048);
        assert!(c.grid_index(0.0001).is_err());
        assert!(c.grid_index(-1.0).is_err());
    }

    #[test]
    fn unit_threshold_never_extends() {
        let mut p = HorizonPolicy::with_threshold(1.0, 20);
        for tail in [1.0, 0.5, 1e-9] {
            assert_eq!(p.decide(tail), HorizonDecision::Stop);
        }
        assert_eq!(p.extensions(), 0);
    }

    #[test]
    fn extends_until_exhausted() {
        let mut p = HorizonPolicy::with_threshold(1e-4, 2);
        assert_eq!(p.decide(0.5), HorizonDecision::Extend);
        assert_eq!(p.decide(0.5), HorizonDecision::Extend);
        assert_eq!(p.decide(0.5), HorizonDecision::Truncate);
        let mut p = HorizonPolicy::with_threshold(1e-4, 2);
        assert_eq!(p.decide(0.5), HorizonDecision::Extend);
        assert_eq!(p.decide(1e-5), HorizonDecision::Stop);
    }

    #[test]
    fn zero_growth_is_refused() {
        assert!(matches!(adaptive_horizon(&SimConfig::default(), 0.0), Err(Error::NotSuboptimal(_))));
        assert!(adaptive_horizon(&SimConfig::default(), 0.25).is_ok());
    }
}
