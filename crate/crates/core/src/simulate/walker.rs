//! Exact log-space stepping of the Brownian drivers and every process that is
//! an affine function of them.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bridge::{MaximumTracker, MinimumTracker};
use super::{HorizonDecision, HorizonPolicy, SimConfig};
use crate::error::{Error, Result};
use crate::market::{MarketSpec, NumeraireStrategy};
use crate::rng::{path_stream, StreamPurpose};

/// Log-coordinates of the market as affine functions of `(t, W(t))`:
///
/// * `log S^i = log S^i(0) + (mu^i - c_rel^{ii} / 2) t + sigma_i . W`
/// * `log Xhat = |lambda|^2 t / 2 + lambda . W`
/// * `log L = -(|lambda|^2 + |nu|^2) t / 2 + (nu - lambda) . W` for an
///   alternative deflator `L = Yhat E(nu . W)`.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub d: usize,
    pub m: usize,
    pub lambda: Vec<f64>,
    pub growth_rate: f64,
    log_s0: Vec<f64>,
    log_drift: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    mu: Vec<f64>,
    deflator: Option<DeflatorDynamics>,
}

#[derive(Debug, Clone)]
struct DeflatorDynamics {
    loading: Vec<f64>,
    drift: f64,
    variance_rate: f64,
    mirrors_xhat: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Dynamics {
    pub fn new(spec: &MarketSpec, strategy: &NumeraireStrategy) -> Self {
        let c = spec.relative_covariance();
        Self {
            d: spec.d(),
            m: spec.m(),
            lambda: strategy.lambda.clone(),
            growth_rate: strategy.growth_rate,
            log_s0: spec.s0().iter().map(|s| s.ln()).collect(),
            log_drift: (0..spec.d()).map(|i| spec.mu()[i] - 0.5 * c[(i, i)]).collect(),
            sigma: spec.sigma().to_vec(),
            mu: spec.mu().to_vec(),
            deflator: None,
        }
    }

    /// Adds `L = Yhat exp(nu . W - |nu|^2 t / 2)`. Requires `sigma nu = 0`
    /// so that `L S^i` stays drift-free. `nu = 0` gives `L = Yhat`, whose
    /// argmax is then taken to be `rho` itself.
    pub fn with_deflator(mut self, nu: &[f64]) -> Result<Self> {
        if nu.len() != self.m {
            return Err(Error::InvalidDeflator(format!("nu has {} entries, expected {}", nu.len(), self.m)));
        }
        let scale = self.sigma.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0)
            * nu.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (i, row) in self.sigma.iter().enumerate() {
            let r = dot(row, nu);
            if r.abs() > 1e-12 * scale.max(1e-300) {
                return Err(Error::InvalidDeflator(format!("(sigma nu)[{}] = {r} is not zero", i + 1)));
            }
        }
        let nu2 = dot(nu, nu);
        let loading: Vec<f64> = nu.iter().zip(&self.lambda).map(|(n, l)| n - l).collect();
        let variance_rate = dot(&loading, &loading);
        self.deflator = Some(DeflatorDynamics {
            drift: -0.5 * (self.growth_rate + nu2),
            loading,
            variance_rate,
            mirrors_xhat: nu2 == 0.0,
        });
        Ok(self)
    }

    pub fn has_deflator(&self) -> bool {
        self.deflator.is_some()
    }

    pub fn log_xhat(&self, t: f64, w: &[f64]) -> f64 {
        0.5 * self.growth_rate * t + dot(&self.lambda, w)
    }

    pub fn log_price(&self, asset: usize, t: f64, w: &[f64]) -> f64 {
        self.log_s0[asset] + self.log_drift[asset] * t + dot(&self.sigma[asset], w)
    }

    /// `log(S^i(t) / S^i(0))`
    pub fn log_return(&self, asset: usize, t: f64, w: &[f64]) -> f64 {
        self.log_drift[asset] * t + dot(&self.sigma[asset], w)
    }

    pub fn price(&self, asset: usize, t: f64, w: &[f64]) -> f64 {
        self.log_price(asset, t, w).exp()
    }

    pub fn prices(&self, t: f64, w: &[f64]) -> Vec<f64> {
        (0..self.d).map(|i| self.price(i, t, w)).collect()
    }

    /// Relative short position `E(-int xi . dS)`.
    pub fn log_short(&self, t: f64, w: &[f64]) -> f64 {
        -1.5 * self.growth_rate * t - dot(&self.lambda, w)
    }

    pub fn log_deflator(&self, t: f64, w: &[f64]) -> Option<f64> {
        self.deflator.as_ref().map(|l| l.drift * t + dot(&l.loading, w))
    }

    /// Wealth with unit initial capital invested in constant fractions `pi`:
    /// `log X = (pi . mu - pi^T c_rel pi / 2) t + (sigma^T pi) . W`.
    pub fn log_constant_mix(&self, fractions: &[f64], t: f64, w: &[f64]) -> f64 {
        let mut exposure = vec![0.0; self.m];
        for (i, p) in fractions.iter().enumerate() {
            for (k, e) in exposure.iter_mut().enumerate() {
                *e += p * self.sigma[i][k];
            }
        }
        (dot(fractions, &self.mu) - 0.5 * dot(&exposure, &exposure)) * t + dot(&exposure, w)
    }

    /// Moves `w` along `direction` so that `direction . w` gains `shift`.
    fn project_onto(direction: &[f64], w: &mut [f64], shift: f64) {
        let n2 = dot(direction, direction);
        if n2 > 0.0 {
            for (x, d) in w.iter_mut().zip(direction) {
                *x += d * shift / n2;
            }
        }
    }
}

/// An extremum located inside a step: placed at the step midpoint, with the
/// driver there taken as the bridge mean corrected along the extremal
/// direction so the affine process hits the sampled extreme exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExtremumPoint {
    pub t: f64,
    pub w: Vec<f64>,
    pub log_value: f64,
    /// Grid index ending the step holding the extremum (0: at the origin).
    pub step: u64,
}

impl ExtremumPoint {
    fn origin(m: usize) -> Self {
        Self { t: 0.0, w: vec![0.0; m], log_value: 0.0, step: 0 }
    }
}

/// Event emitted by one call to [`Walker::advance`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StepEvent {
    /// Running minimum of `log Xhat` before the step, and the new one.
    pub new_min: Option<(f64, f64)>,
    pub new_max_deflator: Option<f64>,
}

/// Walks one path on the grid `t_k = k dt`, extending the horizon by
/// doubling until the tail masses `I(T) Yhat(T)` (and `L(T) / L*(T)` when a
/// deflator is tracked) are at most `tail_eps`.
pub struct Walker<'a> {
    dynamics: &'a Dynamics,
    dt: f64,
    sqrt_dt: f64,
    increments: ChaCha8Rng,
    min_bridge: ChaCha8Rng,
    max_bridge: ChaCha8Rng,
    k: u64,
    w: Vec<f64>,
    w_prev: Vec<f64>,
    x: f64,
    x_prev: f64,
    y: f64,
    y_prev: f64,
    min: MinimumTracker,
    raw_min: f64,
    raw_argmin: u64,
    max: Option<MaximumTracker>,
    /// `L = Yhat`: the deflator maximum is the numeraire minimum.
    mirror: bool,
    rho: ExtremumPoint,
    phi: Option<ExtremumPoint>,
    horizon: HorizonPolicy,
    horizon_steps: u64,
    finished: bool,
    truncated: bool,
}

impl<'a> Walker<'a> {
    pub fn new(dynamics: &'a Dynamics, config: &SimConfig, path_index: u64, min_horizon: f64) -> Result<Self> {
        config.validate()?;
        if path_index >= config.n_paths {
            return Err(Error::PathIndex { index: path_index, n_paths: config.n_paths });
        }
        let horizon = HorizonPolicy::new(config, dynamics.growth_rate);
        let horizon_steps = horizon.initial_steps(config, min_horizon);
        let var = dynamics.growth_rate * config.dt;
        let max = dynamics
            .deflator
            .as_ref()
            .filter(|l| !l.mirrors_xhat)
            .map(|l| MaximumTracker::new(0.0, l.variance_rate * config.dt, config.bridge_correction));
        let mirror = dynamics.deflator.as_ref().is_some_and(|l| l.mirrors_xhat);
        Ok(Self {
            dynamics,
            dt: config.dt,
            sqrt_dt: config.dt.sqrt(),
            increments: path_stream(config.seed, path_index, StreamPurpose::Increments),
            min_bridge: path_stream(config.seed, path_index, StreamPurpose::MinimumBridge),
            max_bridge: path_stream(config.seed, path_index, StreamPurpose::MaximumBridge),
            k: 0,
            w: vec![0.0; dynamics.m],
            w_prev: vec![0.0; dynamics.m],
            x: 0.0,
            x_prev: 0.0,
            y: 0.0,
            y_prev: 0.0,
            min: MinimumTracker::new(0.0, var, config.bridge_correction),
            raw_min: 0.0,
            raw_argmin: 0,
            phi: (max.is_some() || mirror).then(|| ExtremumPoint::origin(dynamics.m)),
            max,
            mirror,
            rho: ExtremumPoint::origin(dynamics.m),
            horizon,
            horizon_steps,
            finished: false,
            truncated: false,
        })
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn log_xhat(&self) -> f64 {
        self.x
    }

    pub fn log_xhat_prev(&self) -> f64 {
        self.x_prev
    }

    /// `log I(t)` with bridge refinement when enabled.
    pub fn log_running_min(&self) -> f64 {
        self.min.level()
    }

    pub fn log_running_min_raw(&self) -> f64 {
        self.raw_min
    }

    pub fn raw_argmin_step(&self) -> u64 {
        self.raw_argmin
    }

    pub fn is_bridged(&self) -> bool {
        self.min.is_bridged()
    }

    pub fn rho(&self) -> &ExtremumPoint {
        &self.rho
    }

    pub fn phi(&self) -> Option<&ExtremumPoint> {
        self.phi.as_ref()
    }

    pub fn log_deflator(&self) -> Option<f64> {
        if self.mirror {
            return Some(-self.x);
        }
        self.max.as_ref().map(|_| self.y)
    }

    pub fn log_deflator_max(&self) -> Option<f64> {
        if self.mirror {
            return Some(-self.min.level());
        }
        self.max.as_ref().map(|m| m.level())
    }

    /// `I(T) Yhat(T)` at the current grid point.
    pub fn tail_mass(&self) -> f64 {
        (self.min.level() - self.x).exp()
    }

    pub fn deflator_tail_mass(&self) -> Option<f64> {
        if self.mirror {
            return Some(self.tail_mass());
        }
        self.max.as_ref().map(|m| (self.y - m.level()).exp())
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn horizon_extensions(&self) -> u32 {
        self.horizon.extensions()
    }

    /// Advances one grid step, or returns `None` once the horizon policy
    /// stops the path.
    pub fn advance(&mut self) -> Option<StepEvent> {
        if self.finished {
            return None;
        }
        if self.k == self.horizon_steps {
            let tail = self.deflator_tail_mass().map_or(self.tail_mass(), |l| l.max(self.tail_mass()));
            match self.horizon.decide(tail) {
                HorizonDecision::Stop => {
                    self.finished = true;
                    return None;
                }
                HorizonDecision::Truncate => {
                    self.finished = true;
                    self.truncated = self.horizon.extends();
                    return None;
                }
                HorizonDecision::Extend => self.horizon_steps *= 2,
            }
        }

        self.w_prev.copy_from_slice(&self.w);
        for w in self.w.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.increments);
            *w += self.sqrt_dt * z;
        }
        self.k += 1;
        let t = self.t();
        self.x_prev = self.x;
        self.x = self.dynamics.log_xhat(t, &self.w);

        let mut event = StepEvent::default();
        let before = self.min.level();
        if let Some(m) = self.min.observe(self.k, self.x_prev, self.x, &mut self.min_bridge) {
            event.new_min = Some((before, m));
            let (t_rho, w_rho) = if self.min.is_bridged() {
                let t_mid = (self.k as f64 - 0.5) * self.dt;
                let mut w: Vec<f64> = self.w.iter().zip(&self.w_prev).map(|(a, b)| 0.5 * (a + b)).collect();
                let x_mid = self.dynamics.log_xhat(t_mid, &w);
                Dynamics::project_onto(&self.dynamics.lambda, &mut w, m - x_mid);
                (t_mid, w)
            } else {
                (t, self.w.clone())
            };
            self.rho = ExtremumPoint { t: t_rho, w: w_rho, log_value: m, step: self.k };
            if self.mirror {
                event.new_max_deflator = Some(-m);
                self.phi = Some(ExtremumPoint { log_value: -m, ..self.rho.clone() });
            }
        }
        if self.x < self.raw_min {
            self.raw_min = self.x;
            self.raw_argmin = self.k;
        }

        if let Some(max) = self.max.as_mut() {
            let l = self.dynamics.deflator.as_ref().expect("tracker implies deflator");
            self.y_prev = self.y;
            self.y = l.drift * t + dot(&l.loading, &self.w);
            if let Some(peak) = max.observe(self.k, self.y_prev, self.y, &mut self.max_bridge) {
                event.new_max_deflator = Some(peak);
                let bridged = max.is_bridged();
                let (t_phi, w_phi) = if bridged {
                    let t_mid = (self.k as f64 - 0.5) * self.dt;
                    let mut w: Vec<f64> = self.w.iter().zip(&self.w_prev).map(|(a, b)| 0.5 * (a + b)).collect();
                    let y_mid = l.drift * t_mid + dot(&l.loading, &w);
                    Dynamics::project_onto(&l.loading, &mut w, peak - y_mid);
                    (t_mid, w)
                } else {
                    (t, self.w.clone())
                };
                self.phi = Some(ExtremumPoint { t: t_phi, w: w_phi, log_value: peak, step: self.k });
            }
        }
        Some(event)
    }
}
